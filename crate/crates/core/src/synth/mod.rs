//! Analytic box scenes with exact ground truth, and the dense voxelization oracle.

mod oracle;

pub use oracle::{brute_force_voxelize, brute_force_voxelize_with};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scene::{
    CameraModel, ClassId, GridSpec, RigidTransform, SemanticMask, SensorFrame, VoxelGrid, UNKNOWN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box at frame 0.
    Box { center: [f64; 3], size: [f64; 3] },
    /// Slab spanning the grid footprint with its top face at `height`.
    Ground { height: f64, thickness: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub class: ClassId,
    /// Meters per frame.
    #[serde(default)]
    pub velocity: [f64; 3],
}

/// Camera mounted on the ego vehicle, given by look-at in the ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpecJson {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub voxel_size: f64,
}

impl GridSpecJson {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.min.into(), self.max.into(), self.voxel_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub frames: u32,
    pub cameras: Vec<CameraSpec>,
    pub points_per_frame: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpecJson,
    /// Ego translation per frame.
    #[serde(default)]
    pub ego_velocity: [f64; 3],
    /// Label for pixels whose ray hits nothing (e.g. a sky class).
    #[serde(default)]
    pub background_label: Option<ClassId>,
    /// Class count for the ground-truth grids; defaults to one past the largest id used.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text)
            .map_err(|e| Error::parse("scene spec", crate::error::json_offset(text, &e), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Validation("scene needs at least one frame".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Validation("noise_sigma must be non-negative".into()));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let ok = match &p.shape {
                Shape::Box { size, .. } => size.iter().all(|&s| s > 0.0),
                Shape::Ground { thickness, .. } => *thickness > 0.0,
            };
            if !ok {
                return Err(Error::Validation(format!("primitive {i} has non-positive size")));
            }
        }
        self.grid.spec()?;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes.unwrap_or_else(|| {
            self.primitives
                .iter()
                .map(|p| p.class as usize + 1)
                .chain(self.background_label.map(|b| b as usize + 1))
                .max()
                .unwrap_or(1)
        })
    }
}

/// Axis-aligned box instance at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    /// Entry distance of the ray `origin + t·dir`, `t > 0`, by the slab method.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (a, b) = ((self.min[i] - origin[i]) * inv, (self.max[i] - origin[i]) * inv);
            t_near = t_near.max(a.min(b));
            t_far = t_far.min(a.max(b));
        }
        if t_near > t_far || t_far <= 0.0 {
            return None;
        }
        Some(if t_near > 0.0 { t_near } else { t_far })
    }
}

impl Primitive {
    pub fn aabb_at(&self, t: u32, grid: &GridSpec) -> Aabb {
        let shift = Vector3::from(self.velocity) * t as f64;
        let base = match self.shape {
            Shape::Box { center, size } => {
                let c = Vector3::from(center);
                let h = Vector3::from(size) / 2.0;
                Aabb { min: c - h, max: c + h }
            }
            Shape::Ground { height, thickness } => Aabb {
                min: Vector3::new(grid.min.x, grid.min.y, height - thickness),
                max: Vector3::new(grid.max.x, grid.max.y, height),
            },
        };
        Aabb {
            min: base.min + shift,
            max: base.max + shift,
        }
    }

    /// Surfaces LiDAR samples are drawn from: every face of a box except the
    /// bottom, the top of a ground slab. Returned as (origin, edge u, edge v).
    fn faces(&self, b: &Aabb) -> Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
        let e = b.max - b.min;
        let (ex, ey, ez) = (Vector3::new(e.x, 0.0, 0.0), Vector3::new(0.0, e.y, 0.0), Vector3::new(0.0, 0.0, e.z));
        let top = (Vector3::new(b.min.x, b.min.y, b.max.z), ex, ey);
        match self.shape {
            Shape::Ground { .. } => vec![top],
            Shape::Box { .. } => vec![
                top,
                (b.min, ex, ez),
                (Vector3::new(b.min.x, b.max.y, b.min.z), ex, ez),
                (b.min, ey, ez),
                (Vector3::new(b.max.x, b.min.y, b.min.z), ey, ez),
            ],
        }
    }
}

/// Generated frames with per-frame ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frames: Vec<SensorFrame>,
    pub ground_truth: Vec<VoxelGrid>,
    pub warnings: Vec<String>,
}

pub fn ego_pose(spec: &SceneSpec, t: u32) -> RigidTransform {
    RigidTransform::translation(Vector3::from(spec.ego_velocity) * t as f64)
}

/// World-frame cameras of frame `t`.
pub fn cameras_at(spec: &SceneSpec, t: u32) -> Result<Vec<CameraModel>> {
    let world_to_ego = ego_pose(spec, t).inverse();
    spec.cameras
        .iter()
        .map(|c| {
            let cam = CameraModel::look_at(c.eye.into(), c.target.into(), c.up.into(), c.focal, c.width, c.height)?;
            let ego_to_cam = RigidTransform {
                rotation: cam.rotation,
                translation: cam.translation,
            };
            let world_to_cam = ego_to_cam.compose(&world_to_ego);
            Ok(CameraModel {
                rotation: world_to_cam.rotation,
                translation: world_to_cam.translation,
                ..cam
            })
        })
        .collect()
}

/// Class of the nearest primitive hit by the ray, if any.
pub fn cast_ray(boxes: &[(Aabb, ClassId)], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(ClassId, f64)> {
    let mut best: Option<(ClassId, f64)> = None;
    for (b, class) in boxes {
        if let Some(t) = b.ray_hit(origin, dir) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((*class, t));
            }
        }
    }
    best
}

pub fn render_mask(cam: &CameraModel, boxes: &[(Aabb, ClassId)], background: ClassId) -> SemanticMask {
    let origin = cam.center();
    let mut mask = SemanticMask::filled(cam.width, cam.height, background);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir = cam.ray_direction(u as f64, v as f64);
            if let Some((class, _)) = cast_ray(boxes, &origin, &dir) {
                mask.set(u, v, class);
            }
        }
    }
    mask
}

/// Occupancy by voxel-center containment; the first primitive in list order wins.
pub fn ground_truth_grid(spec: &GridSpec, boxes: &[(Aabb, ClassId)], num_classes: usize) -> VoxelGrid {
    let mut grid = VoxelGrid::free(*spec, num_classes);
    for idx in 0..spec.len() {
        let c = spec.voxel_center(spec.unflat(idx));
        if let Some((_, class)) = boxes.iter().find(|(b, _)| b.contains(&c)) {
            grid.labels[idx] = *class;
        }
    }
    grid
}

fn sample_points(
    spec: &SceneSpec,
    prims: &[(Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)>, ClassId)],
    rng: &mut SplitMix64,
) -> Vec<Vector3<f64>> {
    let faces: Vec<_> = prims.iter().flat_map(|(f, _)| f.iter().copied()).collect();
    if faces.is_empty() {
        return Vec::new();
    }
    let areas: Vec<f64> = faces.iter().map(|(_, u, v)| u.cross(v).norm()).collect();
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(spec.points_per_frame);
    for _ in 0..spec.points_per_frame {
        let mut pick = rng.next_f64() * total;
        let mut face = faces.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                face = i;
                break;
            }
            pick -= a;
        }
        let (o, u, v) = faces[face];
        let p = o + u * rng.next_f64() + v * rng.next_f64();
        let noise = Vector3::new(rng.normal(), rng.normal(), rng.normal()) * spec.noise_sigma;
        points.push(p + noise);
    }
    points
}

/// Build every frame (points, rendered masks, poses) and its ground-truth grid.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let grid = spec.grid.spec()?;
    let k = spec.num_classes();
    let background = spec.background_label.unwrap_or(UNKNOWN);
    let mut rng = SplitMix64::new(spec.seed);
    let mut frames = Vec::new();
    let mut ground_truth = Vec::new();
    let mut warnings = Vec::new();
    for t in 0..spec.frames {
        let boxes: Vec<(Aabb, ClassId)> = spec.primitives.iter().map(|p| (p.aabb_at(t, &grid), p.class)).collect();
        let cameras = cameras_at(spec, t)?;
        let views: Vec<(CameraModel, SemanticMask)> = cameras
            .into_iter()
            .enumerate()
            .map(|(i, cam)| {
                let mask = render_mask(&cam, &boxes, background);
                if !boxes.is_empty() && mask.labels.iter().all(|&l| l == background) {
                    let msg = format!("frame {t}: camera {i} sees none of the primitives");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                (cam, mask)
            })
            .collect();
        let faces: Vec<_> = spec
            .primitives
            .iter()
            .zip(&boxes)
            .map(|(p, (b, c))| (p.faces(b), *c))
            .collect();
        let points = sample_points(spec, &faces, &mut rng);
        frames.push(SensorFrame {
            t,
            ego_pose: ego_pose(spec, t),
            views,
            points,
        });
        ground_truth.push(ground_truth_grid(&grid, &boxes, k));
    }
    Ok(SyntheticScene {
        frames,
        ground_truth,
        warnings,
    })
}
