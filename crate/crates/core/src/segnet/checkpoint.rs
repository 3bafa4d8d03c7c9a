use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::cyclegraph::{build_graph, ArchSpec, NodeId};
use crate::tensorad::{Scalar, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mgnets-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub name: String,
    pub node: NodeId,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormEntry {
    pub name: String,
    pub node: NodeId,
    pub channels: usize,
    pub initialized: bool,
    pub mean_file: String,
    pub var_file: String,
}

/// `manifest.json` of a checkpoint directory; every tensor lives in its own
/// TSR1 file next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    /// `f32` or `f64`.
    pub precision: String,
    pub seed: u64,
    pub spec: ArchSpec,
    pub parameters: Vec<ParameterEntry>,
    pub batch_norms: Vec<BatchNormEntry>,
}

fn precision_name<T: Scalar>() -> &'static str {
    if T::BYTES == 8 {
        "f64"
    } else {
        "f32"
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl<T: Scalar> Model<T> {
    /// Writes the parameters and running statistics into `dir`.
    pub fn save(&self, dir: &Path) -> Result<CheckpointManifest> {
        fs::create_dir_all(dir)?;
        let mut parameters = Vec::new();
        for p in self.parameters() {
            let file = format!("{}.tsr", p.name);
            p.value.save(dir.join(&file))?;
            parameters.push(ParameterEntry {
                name: p.name.clone(),
                node: p.node,
                shape: p.value.shape().to_vec(),
                file,
            });
        }
        let mut batch_norms = Vec::new();
        for b in self.batch_norms() {
            let c = b.stats.mean.len();
            let mean_file = format!("{}.running_mean.tsr", b.name);
            let var_file = format!("{}.running_var.tsr", b.name);
            Tensor::new(&[c], b.stats.mean.clone())?.save(dir.join(&mean_file))?;
            Tensor::new(&[c], b.stats.var.clone())?.save(dir.join(&var_file))?;
            batch_norms.push(BatchNormEntry {
                name: b.name.clone(),
                node: b.node,
                channels: c,
                initialized: b.stats.initialized,
                mean_file,
                var_file,
            });
        }
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            precision: precision_name::<T>().into(),
            seed: self.seed(),
            spec: *self.spec(),
            parameters,
            batch_norms,
        };
        fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }

    /// Restores a model saved by [`Model::save`], converting precision if
    /// needed.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&path)?;
        let m: CheckpointManifest = serde_json::from_str(&text).map_err(|e| bad(&path, e.to_string()))?;
        if m.format != CHECKPOINT_FORMAT || m.version != CHECKPOINT_VERSION {
            return Err(bad(&path, format!("unsupported format {} v{}", m.format, m.version)));
        }
        let graph = build_graph(&m.spec)?;
        let mut model = Model::empty(graph, m.seed);
        if m.parameters.len() != model.parameters().len() || m.batch_norms.len() != model.batch_norms().len() {
            return Err(bad(&path, "entry count does not match the architecture"));
        }
        for (p, e) in model.parameters_mut().iter_mut().zip(&m.parameters) {
            if p.name != e.name || p.value.shape() != e.shape.as_slice() {
                return Err(bad(&path, format!("expected {} {:?}, found {} {:?}", p.name, p.value.shape(), e.name, e.shape)));
            }
            let t = Tensor::<T>::load(dir.join(&e.file))?;
            if t.shape() != e.shape.as_slice() {
                return Err(bad(&dir.join(&e.file), format!("shape {:?}", t.shape())));
            }
            p.value = t;
        }
        for (b, e) in model.batch_norms_mut().iter_mut().zip(&m.batch_norms) {
            if b.name != e.name || b.stats.mean.len() != e.channels {
                return Err(bad(&path, format!("unexpected batch-norm entry {}", e.name)));
            }
            let mean = Tensor::<T>::load(dir.join(&e.mean_file))?;
            let var = Tensor::<T>::load(dir.join(&e.var_file))?;
            if mean.shape() != [e.channels] || var.shape() != [e.channels] {
                return Err(bad(&path, format!("statistics of {} have the wrong width", e.name)));
            }
            b.stats.mean = mean.into_data();
            b.stats.var = var.into_data();
            b.stats.initialized = e.initialized;
        }
        Ok(model)
    }
}
