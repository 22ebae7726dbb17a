use nalgebra::Vector3;

/// Loss gradient with respect to one Gaussian's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub center: Vector3<f64>,
    pub scale: Vector3<f64>,
    /// With respect to the stored (not renormalized) quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub logits: Vec<f64>,
}

impl GaussianGrad {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            center: Vector3::zeros(),
            scale: Vector3::zeros(),
            rotation: [0.0; 4],
            opacity: 0.0,
            logits: vec![0.0; num_classes],
        }
    }

    pub fn add_scaled(&mut self, other: &GaussianGrad, w: f64) {
        self.center += other.center * w;
        self.scale += other.scale * w;
        for (a, b) in self.rotation.iter_mut().zip(&other.rotation) {
            *a += b * w;
        }
        self.opacity += other.opacity * w;
        for (a, b) in self.logits.iter_mut().zip(&other.logits) {
            *a += b * w;
        }
    }

    /// Flattened as center, scale, rotation, opacity, logits.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(11 + self.logits.len());
        v.extend(self.center.iter());
        v.extend(self.scale.iter());
        v.extend(self.rotation.iter());
        v.push(self.opacity);
        v.extend(self.logits.iter());
        v
    }

    /// Name of the first non-finite parameter, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.center.iter().all(|v| v.is_finite()) {
            Some("center")
        } else if !self.scale.iter().all(|v| v.is_finite()) {
            Some("scale")
        } else if !self.rotation.iter().all(|v| v.is_finite()) {
            Some("rotation")
        } else if !self.opacity.is_finite() {
            Some("opacity")
        } else if !self.logits.iter().all(|v| v.is_finite()) {
            Some("logits")
        } else {
            None
        }
    }
}
