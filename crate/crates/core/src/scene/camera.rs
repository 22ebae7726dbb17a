use nalgebra::{Matrix3, Vector2, Vector3};

use super::taxonomy::{ClassId, UNKNOWN};
use crate::error::{Error, Result};

fn check_rotation(r: &Matrix3<f64>, what: &str) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if !err.is_finite() || err > 1e-9 {
        return Err(Error::Validation(format!(
            "{what} rotation is not orthonormal (max |RᵀR - I| = {err:e})"
        )));
    }
    Ok(())
}

/// Rigid transform `p ↦ R p + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, "rigid transform")?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Pinhole camera with a world→camera extrinsic `p_cam = R p_world + T`.
///
/// Pixel `(u, v)` addresses the center of pixel column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::Validation(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        check_rotation(&rotation, "camera")?;
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Camera looking from `eye` toward `target`, image y axis along -`up`.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Validation("look_at: up is parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            rotation,
            translation,
        )
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Perspective projection of a camera-space point; caller checks `z > 0`.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        )
    }

    /// True when the nearest pixel to `(u, v)` lies inside the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// World-space unit direction through pixel `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let d = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * d).normalize()
    }

    /// Same camera at a different image resolution.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
            ..*self
        }
    }
}

/// Per-pixel class labels; `UNKNOWN` where no label is available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<ClassId>,
}

impl SemanticMask {
    pub fn new(width: u32, height: u32, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "mask {width}x{height} with {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, label: ClassId) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, label: ClassId) {
        self.labels[y as usize * self.width as usize + x as usize] = label;
    }

    /// Label of the nearest pixel to continuous coordinates, if inside.
    pub fn sample(&self, u: f64, v: f64) -> Option<ClassId> {
        let x = (u + 0.5).floor();
        let y = (v + 0.5).floor();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some(self.get(x as u32, y as u32))
    }

    /// Nearest-neighbor resample to a new resolution (pixel-center aligned).
    pub fn resized(&self, width: u32, height: u32) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = (((y as f64 + 0.5) * self.height as f64 / height as f64).floor() as u32)
                .min(self.height - 1);
            for x in 0..width {
                let sx = (((x as f64 + 0.5) * self.width as f64 / width as f64).floor() as u32)
                    .min(self.width - 1);
                labels.push(self.get(sx, sy));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if let Some(bad) = self
            .labels
            .iter()
            .find(|&&l| l != UNKNOWN && l as usize >= num_classes)
        {
            return Err(Error::Validation(format!(
                "mask label {bad} outside taxonomy of {num_classes} classes"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = CameraModel::look_at(
            Vector3::new(0.0, -5.0, 2.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::z(),
            50.0,
            65,
            49,
        )
        .unwrap();
        let pc = cam.to_camera(&Vector3::zeros());
        assert!(pc.z > 0.0);
        let px = cam.project_camera(&pc);
        assert!((px.x - 32.0).abs() < 1e-9 && (px.y - 24.0).abs() < 1e-9);
        assert!((cam.center() - Vector3::new(0.0, -5.0, 2.0)).norm() < 1e-12);
        // World up appears toward smaller v.
        let above = cam.project_camera(&cam.to_camera(&Vector3::new(0.0, 0.0, 0.5)));
        assert!(above.y < 24.0);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 4, 4, r, Vector3::zeros()).is_err());
    }

    #[test]
    fn resized_keeps_principal_ray() {
        let cam = CameraModel::new(100.0, 100.0, 49.5, 29.5, 100, 60, Matrix3::identity(), Vector3::zeros()).unwrap();
        let half = cam.resized(50, 30);
        let p = Vector3::new(0.3, -0.2, 2.0);
        let a = cam.project_camera(&p);
        let b = half.project_camera(&p);
        assert!(((a.x + 0.5) / 2.0 - 0.5 - b.x).abs() < 1e-12);
        assert!(((a.y + 0.5) / 2.0 - 0.5 - b.y).abs() < 1e-12);
    }

    #[test]
    fn mask_sampling_uses_nearest_pixel() {
        let mut m = SemanticMask::filled(3, 2, 0);
        m.set(2, 1, 7);
        assert_eq!(m.sample(1.6, 0.6), Some(7));
        assert_eq!(m.sample(2.49, 1.49), Some(7));
        assert_eq!(m.sample(2.5, 1.0), None);
        assert_eq!(m.sample(-0.6, 0.0), None);
    }

    #[test]
    fn rigid_inverse_round_trip() {
        let h = 0.3f64;
        let r = Matrix3::new(h.cos(), -h.sin(), 0.0, h.sin(), h.cos(), 0.0, 0.0, 0.0, 1.0);
        let t = RigidTransform::new(r, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let p = Vector3::new(-0.4, 0.7, 5.0);
        assert!((t.inverse().apply(&t.apply(&p)) - p).norm() < 1e-12);
        assert!((t.compose(&t.inverse()).apply(&p) - p).norm() < 1e-12);
    }
}
