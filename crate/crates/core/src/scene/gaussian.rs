use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::taxonomy::{ClassId, SemanticTaxonomy};
use crate::error::{Error, Result};

/// Rotation quaternion stored as `[w, x, y, z]`.
pub type Quat = [f64; 4];

pub fn quat_normalize(q: Quat) -> Quat {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_matrix(q: Quat) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One semantic Gaussian primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    /// Centroid, world frame, meters.
    pub center: Vector3<f64>,
    /// Per-axis standard deviations, meters.
    pub scale: Vector3<f64>,
    pub rotation: Quat,
    pub opacity: f64,
    /// Unnormalized class scores, length K.
    pub logits: Vec<f64>,
    /// Motion flag; set by dynamic clustering.
    #[serde(default)]
    pub dynamic: bool,
    /// Frame the primitive was observed in.
    #[serde(default)]
    pub frame: u32,
}

impl Gaussian {
    pub fn new(center: Vector3<f64>, scale: Vector3<f64>, opacity: f64, logits: Vec<f64>) -> Self {
        Self {
            center,
            scale,
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity,
            logits,
            dynamic: false,
            frame: 0,
        }
    }

    pub fn with_rotation(mut self, q: Quat) -> Self {
        self.rotation = quat_normalize(q);
        self
    }

    pub fn with_frame(mut self, frame: u32) -> Self {
        self.frame = frame;
        self
    }

    /// Class with the highest logit, lowest id on ties.
    pub fn class(&self) -> ClassId {
        let mut best = 0;
        for (k, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = k;
            }
        }
        best as ClassId
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(quat_normalize(self.rotation))
    }

    /// Ratio of largest to smallest covariance eigenvalue.
    pub fn condition_number(&self) -> f64 {
        let max = self.scale.max();
        let min = self.scale.min();
        (max * max) / (min * min)
    }
}

/// `R(q) diag(s²) R(q)ᵀ`.
pub fn covariance(g: &Gaussian) -> Result<Matrix3<f64>> {
    covariance_checked(g, 0)
}

pub(crate) fn covariance_checked(g: &Gaussian, index: usize) -> Result<Matrix3<f64>> {
    if !g.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::InvalidPrimitive {
            index,
            reason: format!("scale {:?} must be finite and positive", g.scale.as_slice()),
        });
    }
    let qn = g.rotation.iter().map(|c| c * c).sum::<f64>();
    if !g.rotation.iter().all(|c| c.is_finite()) || qn < 1e-24 {
        return Err(Error::InvalidPrimitive {
            index,
            reason: format!("rotation {:?} is not a usable quaternion", g.rotation),
        });
    }
    let m = g.rotation_matrix() * Matrix3::from_diagonal(&g.scale);
    // M Mᵀ multiplies the same pairs in the same order for (i,j) and (j,i),
    // so the result is exactly symmetric.
    Ok(m * m.transpose())
}

/// Collection of Gaussians sharing one taxonomy.
#[derive(Debug, Clone)]
pub struct GaussianField {
    pub gaussians: Vec<Gaussian>,
    pub taxonomy: Arc<SemanticTaxonomy>,
}

impl PartialEq for GaussianField {
    fn eq(&self, other: &Self) -> bool {
        self.gaussians == other.gaussians && *self.taxonomy == *other.taxonomy
    }
}

impl GaussianField {
    pub fn new(taxonomy: Arc<SemanticTaxonomy>) -> Self {
        Self {
            gaussians: Vec::new(),
            taxonomy,
        }
    }

    pub fn with_gaussians(taxonomy: Arc<SemanticTaxonomy>, gaussians: Vec<Gaussian>) -> Self {
        Self {
            gaussians,
            taxonomy,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.taxonomy.len()
    }

    /// Check every per-primitive invariant.
    pub fn validate(&self) -> Result<()> {
        let k = self.taxonomy.len();
        for (i, g) in self.gaussians.iter().enumerate() {
            let bad = |reason: String| Error::InvalidPrimitive { index: i, reason };
            if g.logits.len() != k {
                return Err(bad(format!("{} logits for {k} classes", g.logits.len())));
            }
            if !g.logits.iter().all(|l| l.is_finite()) {
                return Err(bad("non-finite logits".into()));
            }
            if !(0.0..=1.0).contains(&g.opacity) {
                return Err(bad(format!("opacity {} outside [0, 1]", g.opacity)));
            }
            if !g.center.iter().all(|c| c.is_finite()) {
                return Err(bad("non-finite center".into()));
            }
            let qn = g.rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (qn - 1.0).abs() > 1e-6 {
                return Err(bad(format!("quaternion norm {qn}")));
            }
            let cov = covariance_checked(g, i)?;
            if (cov - cov.transpose()).amax() > 1e-9 {
                return Err(bad("covariance not symmetric".into()));
            }
            let eig = SymmetricEigen::new(cov);
            if eig.eigenvalues.min() <= 0.0 {
                return Err(bad("covariance not positive definite".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.gaussians).expect("gaussians serialize")
    }

    pub fn from_json(text: &str, taxonomy: Arc<SemanticTaxonomy>) -> Result<Self> {
        let gaussians: Vec<Gaussian> = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                "gaussian field",
                crate::error::json_offset(text, &e),
                e.to_string(),
            )
        })?;
        let field = Self::with_gaussians(taxonomy, gaussians);
        field.validate()?;
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(scale: [f64; 3], q: Quat) -> Gaussian {
        Gaussian::new(Vector3::zeros(), Vector3::from(scale), 1.0, vec![0.0]).with_rotation(q)
    }

    #[test]
    fn identity_covariance() {
        let c = covariance(&unit([1.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(c, Matrix3::identity());
    }

    #[test]
    fn diagonal_covariance() {
        let c = covariance(&unit([1.0, 2.0, 3.0], [1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(c, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)));
    }

    #[test]
    fn rotated_covariance() {
        // 90 degrees about z swaps the x and y variances.
        let h = std::f64::consts::FRAC_PI_4;
        let c = covariance(&unit([1.0, 2.0, 1.0], [h.cos(), 0.0, 0.0, h.sin()])).unwrap();
        assert_relative_eq!(
            c,
            Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_scale_rejected() {
        let g = unit([1.0, f64::NAN, 1.0], [1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(covariance(&g), Err(Error::InvalidPrimitive { .. })));
        let g = unit([1.0, -1.0, 1.0], [1.0, 0.0, 0.0, 0.0]);
        assert!(covariance(&g).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        let g = Gaussian::new(Vector3::zeros(), Vector3::repeat(1.0), 1.0, vec![0.3, 0.3, 0.1]);
        assert_eq!(g.class(), 0);
    }

    proptest! {
        #[test]
        fn covariance_eigenvalues_bounded(
            s in prop::array::uniform3(0.05f64..5.0),
            q in prop::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-3);
            let g = unit(s, q);
            let c = covariance(&g).unwrap();
            prop_assert_eq!(c, c.transpose());
            let eig = SymmetricEigen::new(c).eigenvalues;
            let lo = g.scale.min().powi(2) * (1.0 - 1e-9);
            let hi = g.scale.max().powi(2) * (1.0 + 1e-9);
            for e in eig.iter() {
                prop_assert!(*e >= lo && *e <= hi, "{} not in [{}, {}]", e, lo, hi);
            }
        }

        #[test]
        fn renormalization_preserves_rotation(q in prop::array::uniform4(-1.0f64..1.0), eps in -1e-4f64..1e-4) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-2);
            let unit_q = quat_normalize(q);
            let perturbed = [unit_q[0] * (1.0 + eps), unit_q[1] * (1.0 + eps), unit_q[2] * (1.0 + eps), unit_q[3] * (1.0 + eps)];
            let a = quat_to_matrix(unit_q);
            let b = quat_to_matrix(quat_normalize(perturbed));
            prop_assert!((a - b).norm() <= 1e-6);
        }
    }
}
