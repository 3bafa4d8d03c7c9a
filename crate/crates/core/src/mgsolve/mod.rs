//! Geometric multigrid for the finite-difference Poisson problem `-Δu = f`
//! on the unit interval or square with zero Dirichlet boundaries.
//!
//! Transfers are full weighting and linear interpolation, the coarsest grid is
//! solved with a dense Cholesky factorisation, and all arithmetic is `f64`.
//! Residual histories report work in fine-grid sweep equivalents (see
//! [`CycleRecorder`]).

mod cycles;
mod direct;
mod grid;
pub mod ops;
mod smoother;
mod solve;

pub use cycles::{CycleRecorder, Multigrid};
pub use grid::{Grid, GridHierarchy, PoissonProblem};
pub use ops::{apply_operator, prolong, residual, restrict};
pub use smoother::{smooth, SmootherConfig, SmootherKind};
pub use solve::{level_trace, solve, solve_with, CycleKind, HistoryEntry, ResidualHistory, SolveOutcome};
