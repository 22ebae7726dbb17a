//! Label-free semantic voxel occupancy from semantic Gaussian fields.
//!
//! The crate covers the whole reconstruction path:
//!
//! - [`ingest`]: label LiDAR points through camera masks, aggregate per-class anchors.
//! - [`synth`]: analytic box scenes with exact ground truth, plus a dense
//!   voxelization oracle.
//! - [`render`]: CPU front-to-back semantic compositing of Gaussians.
//! - [`optimize`]: semantic, geometric and sky losses, analytic gradients, Adam fitting,
//!   densification and pruning.
//! - [`dynamic`]: movable-object clustering, cross-frame pairing, motion test, track
//!   consolidation.
//! - [`splat`]: cumulative Gaussian-to-voxel splatting, voxel classification and
//!   anchor-based outlier rejection.
//! - [`metrics`]: binary IoU and per-class mIoU.
//! - [`pipeline`]: configuration and the staged end-to-end driver used by the CLI.

pub mod dynamic;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scene;
pub mod spatial;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
