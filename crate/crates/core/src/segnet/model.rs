use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cyclegraph::{build_graph, ArchGraph, ArchSpec, NodeId, NodeKind};
use crate::tensorad::{glorot_uniform, BnMode, RunningStats, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// A named trainable tensor owned by one graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub node: NodeId,
    pub value: Tensor<T>,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub name: String,
    pub node: NodeId,
    pub stats: RunningStats<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Slot {
    params: Range<usize>,
    norms: Range<usize>,
}

/// An [`ArchGraph`] with parameters, evaluated in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    graph: ArchGraph,
    seed: u64,
    params: Vec<Parameter<T>>,
    norms: Vec<BatchNormState<T>>,
    slots: Vec<Slot>,
}

/// Tape handles produced by [`Model::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// One handle per parameter, in [`Model::parameters`] order.
    pub params: Vec<Var>,
}

/// `(name suffix, shape)` of every parameter of a node, in storage order.
fn parameter_layout(kind: NodeKind, ci: usize, co: usize) -> Vec<(String, Vec<usize>)> {
    let unit = |i: usize, cin: usize| {
        vec![
            (format!("conv{i}.weight"), vec![co, cin, 3, 3]),
            (format!("conv{i}.bias"), vec![co]),
            (format!("bn{i}.gamma"), vec![co]),
            (format!("bn{i}.beta"), vec![co]),
        ]
    };
    match kind {
        NodeKind::ConvBlock => [unit(1, ci), unit(2, co)].concat(),
        NodeKind::Up => vec![("up.weight".into(), vec![ci, co, 2, 2]), ("up.bias".into(), vec![co])],
        NodeKind::Head => vec![("head.weight".into(), vec![co, ci, 1, 1]), ("head.bias".into(), vec![co])],
        NodeKind::Down | NodeKind::Concat => Vec::new(),
    }
}

impl<T: Scalar> Model<T> {
    /// Builds the graph for `spec` and initialises it from `seed`: Glorot
    /// uniform kernels, zero biases and shifts, unit scales.
    pub fn new(spec: &ArchSpec, seed: u64) -> Result<Self> {
        if spec.spatial_dims != 2 {
            return Err(Error::Unsupported(format!(
                "networks are trained in 2D only, got spatial_dims = {}",
                spec.spatial_dims
            )));
        }
        let graph = build_graph(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::empty(graph, seed);
        for p in &mut model.params {
            if p.name.ends_with(".weight") {
                p.value = glorot_uniform(p.value.shape(), &mut rng);
            } else if p.name.ends_with(".gamma") {
                p.value = Tensor::full(p.value.shape(), T::one());
            }
        }
        Ok(model)
    }

    /// Zero-filled parameters and fresh statistics laid out for `graph`.
    pub(crate) fn empty(graph: ArchGraph, seed: u64) -> Self {
        let mut params = Vec::new();
        let mut norms = Vec::new();
        let mut slots = Vec::with_capacity(graph.len());
        for node in graph.nodes() {
            let p0 = params.len();
            for (suffix, shape) in parameter_layout(node.kind, node.c_in, node.c_out) {
                params.push(Parameter {
                    name: format!("n{}.{suffix}", node.id),
                    node: node.id,
                    value: Tensor::zeros(&shape),
                });
            }
            let n0 = norms.len();
            if node.kind == NodeKind::ConvBlock {
                for i in 1..=2 {
                    norms.push(BatchNormState {
                        name: format!("n{}.bn{i}", node.id),
                        node: node.id,
                        stats: RunningStats::new(node.c_out),
                    });
                }
            }
            slots.push(Slot {
                params: p0..params.len(),
                norms: n0..norms.len(),
            });
        }
        Model {
            graph,
            seed,
            params,
            norms,
            slots,
        }
    }

    pub fn graph(&self) -> &ArchGraph {
        &self.graph
    }

    /// Seed the parameters were initialised from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &ArchSpec {
        self.graph.spec()
    }

    pub fn parameters(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn batch_norms(&self) -> &[BatchNormState<T>] {
        &self.norms
    }

    pub fn batch_norms_mut(&mut self) -> &mut [BatchNormState<T>] {
        &mut self.norms
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.spec().depth - 1)
    }

    /// Records the network on `tape`. Parameters become leaves when
    /// `trainable`, constants otherwise; `Train` mode updates the running
    /// statistics.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var, mode: BnMode, trainable: bool) -> Result<Forward> {
        let (_, c, h, w) = tape.value(input).dims4()?;
        let spec = *self.graph.spec();
        if c != spec.in_channels {
            return Err(Error::invalid(format!(
                "model expects {} input channels, got {c}",
                spec.in_channels
            )));
        }
        let m = self.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid(format!(
                "spatial size {h}×{w} is not divisible by {m}"
            )));
        }
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        let mut out: Vec<Var> = Vec::with_capacity(self.graph.len());
        for (node, slot) in self.graph.nodes().iter().zip(&self.slots) {
            let x = node.inputs.first().map_or(input, |&i| out[i]);
            let p = &params[slot.params.clone()];
            let y = match node.kind {
                NodeKind::ConvBlock => {
                    let mut h = x;
                    for (u, bn) in self.norms[slot.norms.clone()].iter_mut().enumerate() {
                        let q = &p[4 * u..4 * u + 4];
                        h = tape.conv2d(h, q[0], Some(q[1]))?;
                        h = tape.batchnorm(h, q[2], q[3], &mut bn.stats, mode)?;
                        h = tape.relu(h);
                    }
                    h
                }
                NodeKind::Down => tape.maxpool2(x)?,
                NodeKind::Up => tape.conv2d_transpose(x, p[0], Some(p[1]))?,
                NodeKind::Concat => {
                    let xs: Vec<Var> = node.inputs.iter().map(|&i| out[i]).collect();
                    tape.concat_channels(&xs)?
                }
                NodeKind::Head => tape.conv2d(x, p[0], Some(p[1]))?,
            };
            out.push(y);
        }
        let head = self.graph.head().ok_or_else(|| Error::Structural("graph has no head".into()))?;
        Ok(Forward {
            logits: out[head.id],
            params,
        })
    }

    /// Logits for a batch of images without recording gradients.
    pub fn logits(&mut self, images: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let f = self.forward(&mut tape, x, mode, false)?;
        Ok(tape.value(f.logits).clone())
    }

    /// Per-pixel argmax class for each image of the batch.
    pub fn predict(&mut self, images: &Tensor<T>, mode: BnMode) -> Result<Vec<Vec<u8>>> {
        let logits = self.logits(images, mode)?;
        let (n, c, h, w) = logits.dims4()?;
        let plane = h * w;
        let d = logits.data();
        Ok((0..n)
            .map(|s| {
                (0..plane)
                    .map(|p| {
                        let mut best = 0;
                        for k in 1..c {
                            if d[(s * c + k) * plane + p] > d[(s * c + best) * plane + p] {
                                best = k;
                            }
                        }
                        best as u8
                    })
                    .collect()
            })
            .collect())
    }
}
