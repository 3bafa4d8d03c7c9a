use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::graph::{ArchGraph, ArchSpec, NodeKind, NodeSpec};
use super::schedule::Family;
use crate::{Error, Result};

/// Spatial kernel size of every ConvBlock convolution.
pub const KERNEL: u64 = 3;

/// How parameters are counted and how a depth label maps to grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountConvention {
    /// Trainable scalars only (batch norm contributes scale and shift); the
    /// depth label is the number of grids.
    Trainable,
    /// Published convention: batch norm also counts its running mean and
    /// variance, and the depth label is the number of downsamplings.
    Published,
}

impl CountConvention {
    pub fn name(&self) -> &'static str {
        match self {
            CountConvention::Trainable => "trainable",
            CountConvention::Published => "published",
        }
    }

    pub fn batchnorm_per_channel(&self) -> u64 {
        match self {
            CountConvention::Trainable => 2,
            CountConvention::Published => 4,
        }
    }

    /// Number of grids for a depth label under this convention.
    pub fn grids(&self, depth_label: usize) -> usize {
        match self {
            CountConvention::Trainable => depth_label,
            CountConvention::Published => depth_label + 1,
        }
    }
}

impl fmt::Display for CountConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CountConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trainable" => Ok(CountConvention::Trainable),
            "published" => Ok(CountConvention::Published),
            _ => Err(Error::invalid(format!("unknown counting convention `{s}`"))),
        }
    }
}

/// Published counts for 3D networks with four input and four output channels
/// and 32 base features, keyed by family and depth label.
pub const PUBLISHED_COUNTS: [(Family, usize, u64); 9] = [
    (Family::Unet, 3, 5_608_036),
    (Family::Unet, 4, 22_589_796),
    (Family::Unet, 5, 90_500_964),
    (Family::Fmgnet, 3, 1_108_356),
    (Family::Fmgnet, 4, 1_862_980),
    (Family::Fmgnet, 5, 2_847_652),
    (Family::Wnet, 3, 1_366_372),
    (Family::Wnet, 4, 3_235_684),
    (Family::Wnet, 5, 7_886_692),
];

/// The spec the published counts refer to.
pub fn published_spec(family: Family, depth_label: usize) -> ArchSpec {
    ArchSpec::new(family, CountConvention::Published.grids(depth_label))
        .with_dims(3)
        .with_channels(4, 4)
        .with_base(32)
}

pub fn published_target(family: Family, depth_label: usize) -> Option<u64> {
    PUBLISHED_COUNTS
        .iter()
        .find(|(f, d, _)| *f == family && *d == depth_label)
        .map(|t| t.2)
}

/// Parameters held by one node.
pub fn node_parameters(node: &NodeSpec, spec: &ArchSpec, convention: CountConvention) -> u64 {
    let d = spec.spatial_dims as u32;
    let (ci, co) = (node.c_in as u64, node.c_out as u64);
    let bn = convention.batchnorm_per_channel();
    match node.kind {
        NodeKind::ConvBlock => {
            let k = KERNEL.pow(d);
            (k * ci * co + co + bn * co) + (k * co * co + co + bn * co)
        }
        NodeKind::Up => 2u64.pow(d) * ci * co + co,
        NodeKind::Head => ci * co + co,
        NodeKind::Down | NodeKind::Concat => 0,
    }
}

/// Trainable parameter count of the graph.
pub fn count_parameters(graph: &ArchGraph) -> u64 {
    count_parameters_with(graph, CountConvention::Trainable)
}

pub fn count_parameters_with(graph: &ArchGraph, convention: CountConvention) -> u64 {
    graph
        .nodes()
        .iter()
        .map(|n| node_parameters(n, graph.spec(), convention))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRow {
    pub family: Family,
    pub depth: usize,
    pub dims: usize,
    pub policy: String,
    pub params: u64,
}

pub const PARAMS_CSV_HEADER: &str = "family,depth,dims,policy,params";

impl ParamRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.family, self.depth, self.dims, self.policy, self.params
        )
    }
}

pub fn write_params_csv<W: Write>(rows: &[ParamRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PARAMS_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}
