//! Sensor ingestion: point labeling by camera projection and per-class anchors.

pub mod io;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scene::{Anchor, AnchorSet, CameraModel, ClassId, SemanticTaxonomy, SensorFrame, UNKNOWN};
use crate::spatial::{centroid, radius_components};

/// Points with one class label each (`UNKNOWN` when unlabeled).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<ClassId>,
    pub frame: u32,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points with {} labels",
                self.points.len(),
                self.labels.len()
            )));
        }
        if let Some(l) = self
            .labels
            .iter()
            .find(|&&l| l != UNKNOWN && l as usize >= num_classes)
        {
            return Err(Error::Validation(format!("point label {l} outside taxonomy")));
        }
        Ok(())
    }
}

const MIN_DEPTH: f64 = 1e-9;

/// Continuous pixel coordinates of a world point, if it is in front of the
/// camera and lands inside the image.
pub fn project_point(cam: &CameraModel, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    let pc = cam.to_camera(p);
    if pc.z <= MIN_DEPTH {
        return None;
    }
    let px = cam.project_camera(&pc);
    cam.contains(px.x, px.y).then_some(px)
}

/// Transfer mask labels onto the frame's points.
///
/// Each point takes the label of the nearest pixel in the first camera (rig
/// order) it projects into.
pub fn label_points(frame: &SensorFrame) -> Result<LabeledPointCloud> {
    for (i, (cam, mask)) in frame.views.iter().enumerate() {
        if cam.width != mask.width || cam.height != mask.height {
            return Err(Error::Config(format!(
                "frame {}: camera {i} is {}x{} but its mask is {}x{}",
                frame.t, cam.width, cam.height, mask.width, mask.height
            )));
        }
    }
    let labels = frame
        .points
        .iter()
        .map(|p| {
            frame
                .views
                .iter()
                .find_map(|(cam, mask)| {
                    project_point(cam, p).and_then(|px| mask.sample(px.x, px.y))
                })
                .unwrap_or(UNKNOWN)
        })
        .collect();
    Ok(LabeledPointCloud {
        points: frame.points.clone(),
        labels,
        frame: frame.t,
    })
}

fn lexicographic(a: &Vector3<f64>, b: &Vector3<f64>) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Per-class single-linkage components of all labeled points, one anchor each.
///
/// Points are put in a canonical order first, so the result does not depend
/// on how the input is split into frames.
pub fn aggregate_anchors(clouds: &[LabeledPointCloud], taxonomy: &SemanticTaxonomy) -> AnchorSet {
    let mut per_class: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); taxonomy.len()];
    for cloud in clouds {
        for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
            if taxonomy.is_class(l) {
                per_class[l as usize].push(*p);
            }
        }
    }
    let mut anchors = Vec::new();
    for (class, points) in per_class.iter_mut().enumerate() {
        if points.is_empty() {
            continue;
        }
        points.sort_by(lexicographic);
        let radius = taxonomy.classes()[class].cluster_radius;
        for component in radius_components(points, radius) {
            anchors.push(Anchor {
                class: class as ClassId,
                center: centroid(component.iter().map(|&i| &points[i])),
                count: component.len(),
            });
        }
    }
    AnchorSet { anchors }
}
