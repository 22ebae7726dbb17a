use nalgebra::Vector3;

use super::camera::{CameraModel, RigidTransform, SemanticMask};
use super::taxonomy::ClassId;

/// One timestep of sensor data; points are already in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: u32,
    /// Vehicle frame → world.
    pub ego_pose: RigidTransform,
    pub views: Vec<(CameraModel, SemanticMask)>,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub class: ClassId,
    pub center: Vector3<f64>,
    /// Number of supporting points.
    pub count: usize,
}

/// Per-class anchor centers from aggregated labeled points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn of_class(&self, class: ClassId) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter().filter(move |a| a.class == class)
    }

    /// Nearest anchor of `class` to `p` and its distance.
    pub fn nearest(&self, class: ClassId, p: &Vector3<f64>) -> Option<(&Anchor, f64)> {
        let mut best: Option<(&Anchor, f64)> = None;
        for a in self.of_class(class) {
            let d = (a.center - p).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((a, d));
            }
        }
        best
    }
}
