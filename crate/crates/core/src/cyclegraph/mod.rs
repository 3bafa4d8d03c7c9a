//! Cycle schedules and the encoder-decoder graphs built from them.
//!
//! A [`CycleSchedule`] lists the grid levels a cycle passes through. The same
//! list drives the solver in [`crate::mgsolve`] and the network builder here:
//! each level visit becomes a ConvBlock, each move between levels a Down
//! (max pooling) or Up (transposed convolution), and Up arrivals gather skip
//! connections through a Concat.

mod dot;
mod graph;
mod params;
mod schedule;

pub use dot::emit_dot;
pub use graph::{
    apply_skip_rules, build_graph, channels, ArchGraph, ArchSpec, ChannelPolicy, NodeId,
    NodeKind, NodeSpec,
};
pub use params::{
    count_parameters, count_parameters_with, node_parameters, published_spec, published_target,
    write_params_csv, CountConvention, ParamRow, KERNEL, PARAMS_CSV_HEADER, PUBLISHED_COUNTS,
};
pub use schedule::{schedule, CycleSchedule, Family, Move};
