//! Evaluation and fusion of panoptic segmentation and depth estimation
//! outputs.
//!
//! * [`panoptic_metrics`]: segment matching and PQ / SQ / RQ.
//! * [`depth_metrics`]: sqErr, absErr, IRMSE, SILog and δ-threshold accuracy.
//! * [`dataset_io`]: panoptic, disparity and depth rasters; disparity → depth.
//! * [`fusion`]: mean depth per segment.
//! * [`colormap`]: near-red / far-blue panoptic-depth rendering.
//! * [`synth`]: synthetic scenes and brute-force reference implementations.
//! * [`cli`]: the `pdk` command line.
//!
//! Per-pixel reductions and per-image batches run on rayon when the default
//! `parallel` feature is enabled and sequentially otherwise; both give
//! bit-identical results.

pub mod cli;
pub mod colormap;
pub mod dataset_io;
pub mod depth_metrics;
mod error;
pub mod fusion;
pub mod panoptic_metrics;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
