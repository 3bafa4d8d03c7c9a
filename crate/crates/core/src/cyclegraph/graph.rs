use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schedule::{schedule, Family};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelPolicy {
    /// Width doubles after every downsampling.
    Doubling,
    /// Width stays at `base_features` on every level.
    Pocket,
}

impl ChannelPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelPolicy::Doubling => "doubling",
            ChannelPolicy::Pocket => "pocket",
        }
    }
}

impl fmt::Display for ChannelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doubling" => Ok(ChannelPolicy::Doubling),
            "pocket" => Ok(ChannelPolicy::Pocket),
            _ => Err(Error::invalid(format!("unknown channel policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    /// Number of grid resolutions.
    pub depth: usize,
    pub spatial_dims: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_features: usize,
    pub channel_policy: ChannelPolicy,
}

impl ArchSpec {
    /// A 2D spec with the family's default channel policy, one input channel,
    /// four output classes and 32 base features.
    pub fn new(family: Family, depth: usize) -> Self {
        ArchSpec {
            family,
            depth,
            spatial_dims: 2,
            in_channels: 1,
            out_channels: 4,
            base_features: 32,
            channel_policy: Self::default_policy(family),
        }
    }

    pub fn default_policy(family: Family) -> ChannelPolicy {
        match family {
            Family::Unet => ChannelPolicy::Doubling,
            Family::Fmgnet | Family::Wnet => ChannelPolicy::Pocket,
        }
    }

    pub fn with_dims(mut self, dims: usize) -> Self {
        self.spatial_dims = dims;
        self
    }

    pub fn with_channels(mut self, in_channels: usize, out_channels: usize) -> Self {
        self.in_channels = in_channels;
        self.out_channels = out_channels;
        self
    }

    pub fn with_base(mut self, base_features: usize) -> Self {
        self.base_features = base_features;
        self
    }

    pub fn with_policy(mut self, policy: ChannelPolicy) -> Self {
        self.channel_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid(format!("depth must be at least 2, got {}", self.depth)));
        }
        if !matches!(self.spatial_dims, 2 | 3) {
            return Err(Error::invalid(format!(
                "spatial_dims must be 2 or 3, got {}",
                self.spatial_dims
            )));
        }
        if self.base_features == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }
}

/// Feature width on `level` under the spec's channel policy.
pub fn channels(spec: &ArchSpec, level: usize) -> usize {
    match spec.channel_policy {
        ChannelPolicy::Doubling => spec.base_features << level,
        ChannelPolicy::Pocket => spec.base_features,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    /// Two (conv → batch norm → ReLU) units.
    ConvBlock,
    /// Max pooling to the next coarser grid.
    Down,
    /// Transposed convolution to the next finer grid.
    Up,
    Concat,
    /// 1×1 convolution to `out_channels`.
    Head,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::ConvBlock => "ConvBlock",
            NodeKind::Down => "Down",
            NodeKind::Up => "Up",
            NodeKind::Concat => "Concat",
            NodeKind::Head => "Head",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    pub level: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Producers in order; for a Concat this is the channel order.
    pub inputs: Vec<NodeId>,
}

/// Network graph in topological order: every node's inputs have smaller ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchGraph {
    spec: ArchSpec,
    nodes: Vec<NodeSpec>,
}

impl ArchGraph {
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kinds(&self) -> Vec<NodeKind> {
        self.nodes.iter().map(|n| n.kind).collect()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .iter()
            .flat_map(|n| n.inputs.iter().map(move |&p| (p, n.id)))
            .collect()
    }

    pub fn consumers(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.inputs.contains(&id))
            .map(|n| n.id)
            .collect()
    }

    pub fn head(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Head)
    }

    /// Checks ordering, source/sink structure, channel bookkeeping and levels.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Structural(msg));
        let mut has_consumer = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node {i} carries id {}", n.id));
            }
            if n.inputs.iter().any(|&p| p >= i) {
                return bad(format!("node {i} reads a later node"));
            }
            for &p in &n.inputs {
                has_consumer[p] = true;
            }
            let producers: Vec<&NodeSpec> = n.inputs.iter().map(|&p| &self.nodes[p]).collect();
            match (i, producers.len()) {
                (0, 0) => {
                    if n.c_in != self.spec.in_channels {
                        return bad("input node does not read the input channels".into());
                    }
                }
                (0, _) => return bad("first node has producers".into()),
                (_, 0) => return bad(format!("node {i} is a second source")),
                _ => {}
            }
            let c_sum: usize = producers.iter().map(|p| p.c_out).sum();
            if !producers.is_empty() && c_sum != n.c_in {
                return bad(format!("node {i} expects {} channels, gets {c_sum}", n.c_in));
            }
            match n.kind {
                NodeKind::Concat => {
                    if n.c_out != n.c_in || producers.len() < 2 {
                        return bad(format!("concat {i} is inconsistent"));
                    }
                }
                _ if producers.len() > 1 => {
                    return bad(format!("node {i} has several producers but is not a concat"));
                }
                NodeKind::Down if n.c_out != n.c_in => {
                    return bad(format!("down {i} changes width"));
                }
                _ => {}
            }
            let expected = match (n.kind, producers.first()) {
                (_, None) => 0,
                (NodeKind::Down, Some(p)) => p.level + 1,
                (NodeKind::Up, Some(p)) if p.level > 0 => p.level - 1,
                (NodeKind::Up, Some(_)) => return bad(format!("up {i} leaves the finest grid")),
                (_, Some(p)) => p.level,
            };
            if n.level != expected || producers.iter().any(|p| {
                n.kind == NodeKind::Concat && p.level != n.level
            }) {
                return bad(format!("node {i} sits on the wrong level"));
            }
            if n.level >= self.spec.depth {
                return bad(format!("node {i} is below the coarsest grid"));
            }
        }
        let sinks: Vec<usize> = (0..self.nodes.len()).filter(|&i| !has_consumer[i]).collect();
        match sinks.as_slice() {
            [s] if self.nodes[*s].kind == NodeKind::Head => Ok(()),
            _ => bad(format!("expected a single Head sink, found {sinks:?}")),
        }
    }
}

/// Builds the network for `spec`: schedule, one ConvBlock per level visit
/// (two at a peak), Down/Up between visits, skip connections, then the Head.
///
/// ```
/// use mgnets::cyclegraph::{build_graph, ArchSpec, Family, NodeKind::*};
/// let g = build_graph(&ArchSpec::new(Family::Unet, 2)).unwrap();
/// assert_eq!(g.kinds(), vec![ConvBlock, Down, ConvBlock, Up, Concat, ConvBlock, Head]);
/// ```
pub fn build_graph(spec: &ArchSpec) -> Result<ArchGraph> {
    spec.validate()?;
    let skeleton = place_nodes(spec)?;
    let mut graph = apply_skip_rules(skeleton)?;
    let last = graph.nodes.len() - 1;
    let c = graph.nodes[last].c_out;
    graph.nodes.push(NodeSpec {
        id: last + 1,
        kind: NodeKind::Head,
        level: 0,
        c_in: c,
        c_out: spec.out_channels,
        inputs: vec![last],
    });
    graph.validate()?;
    Ok(graph)
}

fn place_nodes(spec: &ArchSpec) -> Result<ArchGraph> {
    let sched = schedule(spec.family, spec.depth)?;
    let levels = sched.levels();
    let mut nodes: Vec<NodeSpec> = Vec::new();
    let mut push = |kind, level, c_out| {
        let id = nodes.len();
        let (c_in, inputs) = match nodes.last() {
            Some(prev) => (prev.c_out, vec![id - 1]),
            None => (spec.in_channels, vec![]),
        };
        let c_out = if kind == NodeKind::Down { c_in } else { c_out };
        nodes.push(NodeSpec {
            id,
            kind,
            level,
            c_in,
            c_out,
            inputs,
        });
    };
    for (i, &l) in levels.iter().enumerate() {
        let width = channels(spec, l);
        let arrived_up = i > 0 && levels[i - 1] > l;
        let leaves_down = levels.get(i + 1).is_some_and(|&n| n > l);
        if i > 0 {
            push(if arrived_up { NodeKind::Up } else { NodeKind::Down }, l, width);
        }
        push(NodeKind::ConvBlock, l, width);
        if arrived_up && leaves_down {
            push(NodeKind::ConvBlock, l, width);
        }
    }
    Ok(ArchGraph {
        spec: *spec,
        nodes,
    })
}

/// Inserts the skip connections into a chain of ConvBlock/Down/Up nodes.
///
/// Features leaving a level through a Down are of two kinds. If the visit was
/// reached through a Down (or is the input stem), the feature is sent to every
/// later Up arrival at that level. If the visit was reached through an Up (a
/// peak), the feature is sent only to the next Up arrival at that level. Each
/// Up arrival gets a Concat of the upsampled feature, the encoder features in
/// order, and the pending peak feature.
pub fn apply_skip_rules(graph: ArchGraph) -> Result<ArchGraph> {
    let ArchGraph { spec, nodes: chain } = graph;
    if chain.iter().any(|n| matches!(n.kind, NodeKind::Concat | NodeKind::Head)) {
        return Err(Error::Structural("skip rules expect a bare chain".into()));
    }
    if chain
        .iter()
        .enumerate()
        .any(|(i, n)| n.inputs != if i == 0 { vec![] } else { vec![i - 1] })
    {
        return Err(Error::Structural("skip rules expect a bare chain".into()));
    }

    let mut out: Vec<NodeSpec> = Vec::with_capacity(chain.len() * 2);
    let mut encoder: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    let mut peak: BTreeMap<usize, NodeId> = BTreeMap::new();
    // Kind of the node that opened the current visit (None for the stem).
    let mut entry: Option<NodeKind> = None;

    for node in chain {
        let mut node = node;
        node.id = out.len();
        if let Some(prev) = out.last() {
            node.inputs = vec![prev.id];
            node.c_in = prev.c_out;
            if node.kind == NodeKind::Down {
                node.c_out = node.c_in;
            }
        }
        match node.kind {
            NodeKind::Down => {
                let src = node.inputs[0];
                if out[src].kind != NodeKind::ConvBlock {
                    return Err(Error::Structural(format!("node {} pools a non-block", node.id)));
                }
                let level = out[src].level;
                if entry == Some(NodeKind::Up) {
                    peak.insert(level, src);
                } else {
                    encoder.entry(level).or_default().push(src);
                }
                entry = Some(NodeKind::Down);
                out.push(node);
            }
            NodeKind::Up => {
                entry = Some(NodeKind::Up);
                let up = node.id;
                let level = node.level;
                out.push(node);
                let mut inputs = vec![up];
                inputs.extend(encoder.get(&level).into_iter().flatten().copied());
                inputs.extend(peak.remove(&level));
                if inputs.len() == 1 {
                    return Err(Error::Structural(format!(
                        "up arrival at level {level} has nothing to join"
                    )));
                }
                let c: usize = inputs.iter().map(|&p| out[p].c_out).sum();
                out.push(NodeSpec {
                    id: out.len(),
                    kind: NodeKind::Concat,
                    level,
                    c_in: c,
                    c_out: c,
                    inputs,
                });
            }
            NodeKind::ConvBlock => out.push(node),
            NodeKind::Concat | NodeKind::Head => unreachable!(),
        }
    }
    Ok(ArchGraph { spec, nodes: out })
}
