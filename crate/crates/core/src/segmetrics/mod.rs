//! Overlap and surface-distance metrics for label images with physical
//! spacing.
//!
//! The surface of a binary mask is the set of foreground voxels with a
//! background face neighbour (the image border counts as background), placed
//! at their voxel centres. Directed surface distances come from an exact
//! separable Euclidean distance transform, so anisotropic spacing is handled
//! exactly. HD95 uses the nearest-rank percentile (rank `ceil(0.95·n)`) in
//! each direction and takes the larger; ASD pools both directions into one
//! mean. Both are undefined (`None`, written as `undef`) when either mask is
//! empty; Dice of two empty masks is 1.

mod distance;
mod mask;
mod table;

pub use distance::{
    asd, extract_surface, hausdorff, hd95, percentile_nearest_rank, surface_distances, SurfacePointSet,
};
pub use mask::{dice, BinaryMask, LabelMask};
pub use table::{
    evaluate_classes, summarize, write_metrics_csv, ClassMap, ClassMetrics, MetricRow, METRICS_CSV_HEADER,
    UNDEFINED,
};
