//! A small laboratory for the correspondence between geometric multigrid
//! cycles and encoder-decoder segmentation networks.
//!
//! [`mgsolve`] solves Poisson problems with V-, W- and FMG-cycles;
//! [`cyclegraph`] turns the same cycle schedules into U-Net, FMG-Net and W-Net
//! architecture graphs; [`tensorad`] and [`segnet`] train those graphs in 2D;
//! [`segmetrics`] and [`synthdata`] provide evaluation and toy data.

pub mod cli;
pub mod error;
pub mod cyclegraph;
pub mod mgsolve;
pub mod segmetrics;
pub mod segnet;
pub mod synthdata;
pub mod tensorad;

pub use error::{Error, Result};
