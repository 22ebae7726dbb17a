//! Cumulative Gaussian-to-voxel splatting, voxel classification and
//! anchor-distance outlier rejection.
//!
//! Each voxel center `κ` accumulates `d · G(κ) · α · softmax(γ)` from every
//! Gaussian whose value `G(κ)` reaches the cutoff, where `d` is the occupied
//! depth of the Gaussian with respect to the voxel.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{
    covariance, AnchorSet, ClassId, Gaussian, GaussianField, GridSpec, SemanticTaxonomy, VoxelGrid,
    FREE, MAX_VOXELS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig {
    /// Minimum Gaussian value for a (voxel, Gaussian) pair to contribute.
    pub cutoff: f64,
    /// Lower bound on the culling radius, in standard deviations.
    pub sigma_bound: f64,
    /// Accumulated mass at or below which a voxel is free.
    pub theta_occ: f64,
    /// Anchors averaged by the outlier filter.
    pub knn_k: usize,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            cutoff: 1e-8,
            sigma_bound: 3.0,
            theta_occ: 1e-3,
            knn_k: 1,
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 0.0) || !(self.sigma_bound > 0.0) || !(self.theta_occ > 0.0) || self.knn_k == 0 {
            return Err(Error::Config(format!("invalid splat config {self:?}")));
        }
        Ok(())
    }

    /// Mahalanobis radius containing every pair that passes `cutoff`.
    pub fn support_radius(&self) -> f64 {
        if self.cutoff > 0.0 {
            self.sigma_bound.max((-2.0 * self.cutoff.ln()).max(0.0).sqrt())
        } else {
            f64::INFINITY
        }
    }
}

/// Largest covariance condition number accepted.
pub const MAX_CONDITION: f64 = 1e12;
const MIN_ETA_Z: f64 = 1e-9;

/// Inverse of a symmetric 3×3 matrix by cofactors.
fn inverse_symmetric(m: &Matrix3<f64>) -> Matrix3<f64> {
    let a = m[(0, 0)];
    let b = m[(0, 1)];
    let c = m[(0, 2)];
    let d = m[(1, 1)];
    let e = m[(1, 2)];
    let f = m[(2, 2)];
    let c00 = d * f - e * e;
    let c01 = c * e - b * f;
    let c02 = b * e - c * d;
    let c11 = a * f - c * c;
    let c12 = b * c - a * e;
    let c22 = a * d - b * b;
    let det = a * c00 + b * c01 + c * c02;
    Matrix3::new(c00, c01, c02, c01, c11, c12, c02, c12, c22) / det
}

/// Per-Gaussian quantities reused across voxels.
#[derive(Debug, Clone)]
pub struct PreparedGaussian {
    pub center: Vector3<f64>,
    pub precision: Matrix3<f64>,
    pub weight: Vec<f64>,
    half_extent: Vector3<f64>,
}

impl PreparedGaussian {
    pub fn new(g: &Gaussian, index: usize, radius: f64) -> Result<Self> {
        let cov = covariance(g).map_err(|e| match e {
            Error::InvalidPrimitive { reason, .. } => Error::InvalidPrimitive { index, reason },
            other => other,
        })?;
        let cond = g.condition_number();
        if !(cond <= MAX_CONDITION) {
            return Err(Error::InvalidPrimitive {
                index,
                reason: format!("covariance condition number {cond:e} exceeds {MAX_CONDITION:e}"),
            });
        }
        let probs = g.probabilities();
        Ok(Self {
            center: g.center,
            precision: inverse_symmetric(&cov),
            weight: probs.into_iter().map(|p| p * g.opacity).collect(),
            half_extent: Vector3::new(
                radius * cov[(0, 0)].sqrt(),
                radius * cov[(1, 1)].sqrt(),
                radius * cov[(2, 2)].sqrt(),
            ),
        })
    }

    pub fn value(&self, kappa: &Vector3<f64>) -> f64 {
        let delta = kappa - self.center;
        (-0.5 * delta.dot(&(self.precision * delta))).exp()
    }

    /// Occupied depth, sign-clamped; degenerate rays fall back to `o_z`.
    pub fn depth(&self, kappa: &Vector3<f64>) -> f64 {
        depth_from_precision(&self.center, &self.precision, kappa)
            .unwrap_or(self.center.z)
            .abs()
    }
}

fn eta_z(center: &Vector3<f64>, kappa: &Vector3<f64>) -> f64 {
    let dir = center - kappa;
    let n = dir.norm();
    if n == 0.0 {
        0.0
    } else {
        dir.z / n
    }
}

fn depth_from_precision(o: &Vector3<f64>, p: &Matrix3<f64>, kappa: &Vector3<f64>) -> Result<f64> {
    occupied_depth_with(o, p, kappa, eta_z(o, kappa))
}

fn occupied_depth_with(o: &Vector3<f64>, p: &Matrix3<f64>, kappa: &Vector3<f64>, eta_z: f64) -> Result<f64> {
    if !(eta_z.abs() >= MIN_ETA_Z) {
        return Err(Error::DegenerateRay(eta_z));
    }
    let inv_eta = 1.0 / eta_z;
    let tangent = inv_eta * p[(0, 2)] * (o.x - kappa.x) + inv_eta * p[(1, 2)] * (o.y - kappa.y);
    Ok(o.z - tangent / p[(2, 2)])
}

/// Occupied depth of `g` seen from voxel center `kappa` along a ray whose
/// unit-direction z component is `eta_z`. Unclamped.
pub fn occupied_depth(g: &Gaussian, kappa: &Vector3<f64>, eta_z: f64) -> Result<f64> {
    let precision = inverse_symmetric(&covariance(g)?);
    if precision[(2, 2)] < 1e-12 {
        return Err(Error::InvalidPrimitive {
            index: 0,
            reason: "precision (2,2) entry below 1e-12".into(),
        });
    }
    occupied_depth_with(&g.center, &precision, kappa, eta_z)
}

/// z component of the unit direction from `kappa` to the Gaussian centroid.
pub fn ray_eta_z(g: &Gaussian, kappa: &Vector3<f64>) -> f64 {
    eta_z(&g.center, kappa)
}

/// `exp(-½ (κ-o)ᵀ Σ⁻¹ (κ-o))`.
pub fn gaussian_value(g: &Gaussian, kappa: &Vector3<f64>) -> Result<f64> {
    Ok(PreparedGaussian::new(g, 0, 0.0)?.value(kappa))
}

fn prepare(field: &GaussianField, radius: f64) -> Result<Vec<PreparedGaussian>> {
    field
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| PreparedGaussian::new(g, i, radius))
        .collect()
}

/// Inclusive voxel index range along one axis covering `[lo, hi]` (plus one
/// voxel of slack), or `None` when it misses the grid.
fn axis_range(spec: &GridSpec, axis: usize, lo: f64, hi: f64) -> Option<(u32, u32)> {
    let n = spec.dims[axis] as f64;
    let a = ((lo - spec.min[axis]) / spec.voxel_size - 0.5).floor() - 1.0;
    let b = ((hi - spec.min[axis]) / spec.voxel_size - 0.5).ceil() + 1.0;
    if b < 0.0 || a > n - 1.0 || a.is_nan() || b.is_nan() {
        return None;
    }
    Some((a.max(0.0) as u32, b.min(n - 1.0) as u32))
}

/// Accumulate logits on the grid, visiting for each Gaussian only the voxels
/// inside its support box. Per voxel, contributions are summed in Gaussian
/// index order, independent of thread count.
pub fn splat_to_grid(field: &GaussianField, spec: &GridSpec, config: &SplatConfig) -> Result<VoxelGrid> {
    config.validate()?;
    if spec.len() > MAX_VOXELS {
        return Err(Error::Capacity(format!(
            "grid of {} voxels exceeds the 1024³ limit",
            spec.len()
        )));
    }
    let k = field.num_classes();
    let radius = config.support_radius();
    let prepared = prepare(field, radius)?;
    let full = |axis: usize| Some((0u32, spec.dims[axis] - 1));
    let ranges: Vec<Option<[(u32, u32); 3]>> = prepared
        .iter()
        .map(|p| {
            let r = |axis: usize| {
                if radius.is_finite() {
                    axis_range(spec, axis, p.center[axis] - p.half_extent[axis], p.center[axis] + p.half_extent[axis])
                } else {
                    full(axis)
                }
            };
            Some([r(0)?, r(1)?, r(2)?])
        })
        .collect();

    let nx = spec.dims[0] as usize;
    let ny = spec.dims[1] as usize;
    let mut logits = vec![0.0f64; spec.len() * k];
    logits
        .par_chunks_mut(nx * ny * k)
        .enumerate()
        .for_each(|(z, layer)| {
            let z = z as u32;
            for (g, range) in prepared.iter().zip(&ranges) {
                let Some([(x0, x1), (y0, y1), (z0, z1)]) = *range else {
                    continue;
                };
                if z < z0 || z > z1 {
                    continue;
                }
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let kappa = spec.voxel_center([x, y, z]);
                        let value = g.value(&kappa);
                        if value < config.cutoff || value == 0.0 {
                            continue;
                        }
                        let scale = g.depth(&kappa) * value;
                        let base = (x as usize + nx * y as usize) * k;
                        for (acc, w) in layer[base..base + k].iter_mut().zip(&g.weight) {
                            *acc += scale * w;
                        }
                    }
                }
            }
        });
    let mut grid = VoxelGrid {
        spec: *spec,
        labels: vec![FREE; spec.len()],
        logits: Some(logits),
        num_classes: k,
    };
    classify_in_place(&mut grid, config);
    Ok(grid)
}

/// Label from accumulated mass: free at or below `theta_occ`, else argmax
/// (lowest class id on ties).
pub fn classify_logits(logits: &[f64], theta_occ: f64) -> ClassId {
    let mass: f64 = logits.iter().sum();
    if !(mass > theta_occ) {
        return FREE;
    }
    let mut best = 0usize;
    for (c, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = c;
        }
    }
    best as ClassId
}

fn classify_in_place(grid: &mut VoxelGrid, config: &SplatConfig) {
    let k = grid.num_classes;
    if let Some(logits) = grid.logits.as_ref() {
        grid.labels = logits
            .chunks_exact(k)
            .map(|l| classify_logits(l, config.theta_occ))
            .collect();
    }
}

pub fn classify_voxels(grid: &VoxelGrid, config: &SplatConfig, taxonomy: &SemanticTaxonomy) -> Result<VoxelGrid> {
    if grid.logits.is_none() {
        return Err(Error::Config("classify_voxels needs a grid with logits".into()));
    }
    if grid.num_classes != taxonomy.len() {
        return Err(Error::ShapeMismatch(format!(
            "grid has {} classes, taxonomy {}",
            grid.num_classes,
            taxonomy.len()
        )));
    }
    let mut out = grid.clone();
    classify_in_place(&mut out, config);
    Ok(out)
}

/// Free every voxel whose mean distance to its `knn_k` nearest same-class
/// anchors exceeds that class's `tau_c`. Classes without anchors are kept.
pub fn filter_outliers(
    grid: &VoxelGrid,
    anchors: &AnchorSet,
    taxonomy: &SemanticTaxonomy,
    config: &SplatConfig,
) -> VoxelGrid {
    let per_class: Vec<Vec<Vector3<f64>>> = (0..taxonomy.len())
        .map(|c| anchors.of_class(c as ClassId).map(|a| a.center).collect())
        .collect();
    let labels = grid
        .labels
        .par_iter()
        .enumerate()
        .map(|(idx, &label)| {
            let Some(policy) = taxonomy.class(label) else {
                return label;
            };
            let centers = &per_class[label as usize];
            if centers.is_empty() {
                return label;
            }
            let p = grid.spec.voxel_center(grid.spec.unflat(idx));
            let mut dists: Vec<f64> = centers.iter().map(|c| (c - p).norm()).collect();
            let k = config.knn_k.min(dists.len());
            dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            dists[..k].sort_by(f64::total_cmp);
            let mean = dists[..k].iter().sum::<f64>() / k as f64;
            if mean > policy.tau_c {
                FREE
            } else {
                label
            }
        })
        .collect();
    VoxelGrid {
        labels,
        ..grid.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{quat_normalize, Anchor, ClassPolicy};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn taxonomy(k: usize) -> Arc<SemanticTaxonomy> {
        let classes = (0..k)
            .map(|i| ClassPolicy {
                id: i as ClassId,
                name: format!("c{i}"),
                movable: false,
                foreground: false,
                scale_min: 0.01,
                scale_max: 10.0,
                tau_c: 5.0,
                cluster_radius: 1.0,
            })
            .collect();
        Arc::new(SemanticTaxonomy::new(classes, None).unwrap())
    }

    fn g(center: [f64; 3], scale: [f64; 3]) -> Gaussian {
        Gaussian::new(Vector3::from(center), Vector3::from(scale), 1.0, vec![0.0, 0.0])
    }

    #[test]
    fn gaussian_value_examples() {
        let unit = g([1.0, 2.0, 3.0], [1.0, 1.0, 1.0]);
        assert_eq!(gaussian_value(&unit, &Vector3::new(1.0, 2.0, 3.0)).unwrap(), 1.0);
        assert_relative_eq!(gaussian_value(&unit, &Vector3::new(2.0, 2.0, 3.0)).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        let wide = g([0.0, 0.0, 0.0], [2.0, 1.0, 1.0]);
        assert_relative_eq!(gaussian_value(&wide, &Vector3::new(2.0, 0.0, 0.0)).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn ill_conditioned_rejected() {
        let bad = g([0.0; 3], [1.0, 1e-7, 1.0]);
        assert!(matches!(gaussian_value(&bad, &Vector3::zeros()), Err(Error::InvalidPrimitive { .. })));
    }

    #[test]
    fn diagonal_depth_is_center_z() {
        for scale in [[1.0, 1.0, 1.0], [1.0, 2f64.sqrt(), 2.0]] {
            let gauss = g([0.3, -0.2, 2.5], scale);
            for kappa in [Vector3::new(1.0, 0.0, 0.0), Vector3::new(-3.0, 4.0, 9.0)] {
                let eta = ray_eta_z(&gauss, &kappa);
                assert_eq!(occupied_depth(&gauss, &kappa, eta).unwrap(), 2.5);
            }
        }
    }

    #[test]
    fn rotated_depth_matches_scripted_value() {
        // Σ = R diag(1, 0.25, 2.25) Rᵀ with R a 30° rotation about y; o = (0, 0, 2),
        // κ = (1, 0, 0), η_z = 2/√5. Closed form from a symbolic evaluation: 2 - 5√15/42.
        let h = std::f64::consts::PI / 12.0;
        let gauss = Gaussian::new(Vector3::new(0.0, 0.0, 2.0), Vector3::new(1.0, 0.5, 1.5), 1.0, vec![0.0])
            .with_rotation(quat_normalize([h.cos(), 0.0, h.sin(), 0.0]));
        let kappa = Vector3::new(1.0, 0.0, 0.0);
        let eta = ray_eta_z(&gauss, &kappa);
        assert_relative_eq!(eta, 2.0 / 5f64.sqrt(), epsilon = 1e-15);
        let d = occupied_depth(&gauss, &kappa, eta).unwrap();
        assert_relative_eq!(d, ROTATED_DEPTH, max_relative = 1e-12);
        assert_relative_eq!(d, 2.0 - 5.0 * 15f64.sqrt() / 42.0, max_relative = 1e-12);
    }

    const ROTATED_DEPTH: f64 = 1.5389305540229266;

    #[test]
    fn degenerate_ray() {
        let gauss = g([0.0, 0.0, 1.0], [1.0, 1.0, 1.0]);
        assert!(matches!(occupied_depth(&gauss, &Vector3::zeros(), 1e-12), Err(Error::DegenerateRay(_))));
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify_logits(&[0.0, 0.0], 1e-3), FREE);
        assert_eq!(classify_logits(&[0.5, 0.2], 1e-3), 0);
        assert_eq!(classify_logits(&[0.3, 0.3], 1e-3), 0);
        assert_eq!(classify_logits(&[0.1, 0.3], 1e-3), 1);
        assert_eq!(classify_logits(&[0.0005, 0.0005], 1e-3), FREE);
    }

    fn spec32() -> GridSpec {
        GridSpec::new(Vector3::zeros(), Vector3::repeat(8.0), 0.25).unwrap()
    }

    #[test]
    fn empty_and_culled_fields_are_free() {
        let tax = taxonomy(2);
        let empty = GaussianField::new(tax.clone());
        let grid = splat_to_grid(&empty, &spec32(), &SplatConfig::default()).unwrap();
        assert_eq!(grid.occupied_count(), 0);
        let far = GaussianField::with_gaussians(tax, vec![g([100.0, 4.0, 4.0], [0.5, 0.5, 0.5])]);
        let grid = splat_to_grid(&far, &spec32(), &SplatConfig::default()).unwrap();
        assert_eq!(grid.occupied_count(), 0);
        assert!(grid.logits.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_gaussian_on_voxel_center() {
        let tax = taxonomy(2);
        let spec = spec32();
        let c = spec.voxel_center([10, 12, 14]);
        let mut gauss = g(c.into(), [1.0, 1.0, 1.0]);
        gauss.logits = vec![(0.8f64 / 0.2).ln(), 0.0];
        let field = GaussianField::with_gaussians(tax, vec![gauss]);
        let grid = splat_to_grid(&field, &spec, &SplatConfig::default()).unwrap();
        let l = grid.voxel_logits(spec.flat([10, 12, 14])).unwrap();
        assert_relative_eq!(l[0], c.z * 0.8, max_relative = 1e-14);
        assert_relative_eq!(l[1], c.z * 0.2, max_relative = 1e-14);
    }

    #[test]
    fn capacity_limit() {
        let spec = GridSpec::new(Vector3::zeros(), Vector3::new(1025.0, 1024.0, 1024.0), 1.0).unwrap();
        let field = GaussianField::new(taxonomy(1));
        assert!(matches!(splat_to_grid(&field, &spec, &SplatConfig::default()), Err(Error::Capacity(_))));
    }

    fn labeled(spec: GridSpec, cells: &[([u32; 3], ClassId)]) -> VoxelGrid {
        let mut grid = VoxelGrid::free(spec, 2);
        for &(i, l) in cells {
            grid.set(i, l);
        }
        grid
    }

    #[test]
    fn filter_examples() {
        let spec = GridSpec::new(Vector3::zeros(), Vector3::new(20.0, 1.0, 1.0), 1.0).unwrap();
        let tax = taxonomy(2);
        let anchors = AnchorSet {
            anchors: vec![Anchor { class: 0, center: Vector3::new(0.5, 0.5, 0.5), count: 4 }],
        };
        // Voxel 10 is 10 m from the anchor, voxel 2 is 2 m away; class 1 has no anchors.
        let grid = labeled(spec, &[([10, 0, 0], 0), ([2, 0, 0], 0), ([15, 0, 0], 1)]);
        let out = filter_outliers(&grid, &anchors, &tax, &SplatConfig::default());
        assert_eq!(out.get([10, 0, 0]), FREE);
        assert_eq!(out.get([2, 0, 0]), 0);
        assert_eq!(out.get([15, 0, 0]), 1);
    }

    #[test]
    fn knn_mean_distance() {
        let spec = GridSpec::new(Vector3::zeros(), Vector3::new(10.0, 1.0, 1.0), 1.0).unwrap();
        let tax = taxonomy(2);
        let anchor = |x: f64| Anchor { class: 0, center: Vector3::new(x, 0.5, 0.5), count: 1 };
        let anchors = AnchorSet { anchors: vec![anchor(0.5), anchor(9.5), anchor(1.5)] };
        let grid = labeled(spec, &[([0, 0, 0], 0)]);
        let config = SplatConfig { knn_k: 3, ..Default::default() };
        // Distances 0, 1, 9: mean 10/3 < 5 keeps it; k=3 with tau 3 frees it.
        assert_eq!(filter_outliers(&grid, &anchors, &tax, &config).get([0, 0, 0]), 0);
        let mut strict = (*tax).clone();
        let mut classes = strict.classes().to_vec();
        classes[0].tau_c = 3.0;
        strict = SemanticTaxonomy::new(classes, None).unwrap();
        assert_eq!(filter_outliers(&grid, &anchors, &strict, &config).get([0, 0, 0]), FREE);
    }
}
