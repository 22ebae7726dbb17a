//! Domain types shared by every stage: taxonomy, Gaussians, cameras, frames, voxel grids.

mod camera;
mod frame;
mod gaussian;
mod grid;
mod taxonomy;

pub use camera::{CameraModel, RigidTransform, SemanticMask};
pub use frame::{Anchor, AnchorSet, SensorFrame};
pub use gaussian::{
    covariance, quat_normalize, quat_to_matrix, softmax, Gaussian, GaussianField, Quat,
};
pub use grid::{GridSpec, VoxelGrid, MAX_VOXELS};
pub use taxonomy::{ClassId, ClassPolicy, SemanticTaxonomy, FREE, UNKNOWN};

#[cfg(test)]
pub(crate) use taxonomy::tests::policy as test_policy;
