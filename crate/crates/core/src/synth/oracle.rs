//! Dense reference voxelization: every (voxel, Gaussian) pair is evaluated.
//!
//! Written independently of the culled splatter in `crate::splat`: rotation via
//! nalgebra's unit quaternion, inverse via LU, conditioning via eigenvalues.

use nalgebra::{Matrix3, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{softmax, GaussianField, GridSpec, VoxelGrid};
use crate::splat::{classify_logits, SplatConfig, MAX_CONDITION};

struct Term {
    center: Vector3<f64>,
    precision: Matrix3<f64>,
    weight: Vec<f64>,
}

fn terms(field: &GaussianField) -> Result<Vec<Term>> {
    field
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let [w, x, y, z] = g.rotation;
            let rot = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_rotation_matrix();
            let s2 = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
            let cov = rot.matrix() * s2 * rot.matrix().transpose();
            let eig = SymmetricEigen::new(cov).eigenvalues;
            let cond = eig.max() / eig.min();
            if !(eig.min() > 0.0) || !(cond <= MAX_CONDITION) {
                return Err(Error::InvalidPrimitive {
                    index: i,
                    reason: format!("singular covariance (condition number {cond:e})"),
                });
            }
            let precision = cov.try_inverse().ok_or_else(|| Error::InvalidPrimitive {
                index: i,
                reason: "covariance not invertible".into(),
            })?;
            Ok(Term {
                center: g.center,
                precision,
                weight: softmax(&g.logits).iter().map(|p| p * g.opacity).collect(),
            })
        })
        .collect()
}

/// Dense evaluation with default classification settings and the given cutoff.
pub fn brute_force_voxelize(field: &GaussianField, spec: &GridSpec, cutoff: f64) -> Result<VoxelGrid> {
    brute_force_voxelize_with(field, spec, &SplatConfig { cutoff, ..Default::default() })
}

/// Dense evaluation; uses `config.cutoff` and `config.theta_occ` only.
pub fn brute_force_voxelize_with(field: &GaussianField, spec: &GridSpec, config: &SplatConfig) -> Result<VoxelGrid> {
    if !(config.cutoff >= 0.0) {
        return Err(Error::Config("cutoff must be non-negative".into()));
    }
    let k = field.num_classes();
    let terms = terms(field)?;
    let logits: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .flat_map_iter(|idx| {
            let kappa = spec.voxel_center(spec.unflat(idx));
            let mut acc = vec![0.0; k];
            for t in &terms {
                let delta = kappa - t.center;
                let value = (-0.5 * (delta.transpose() * t.precision * delta)[(0, 0)]).exp();
                if value < config.cutoff || value == 0.0 {
                    continue;
                }
                let to_center = t.center - kappa;
                let len = to_center.norm();
                let eta_z = if len > 0.0 { to_center.z / len } else { 0.0 };
                let depth = if eta_z.abs() < 1e-9 {
                    t.center.z
                } else {
                    let p = &t.precision;
                    t.center.z
                        - ((1.0 / eta_z) * p[(0, 2)] * (t.center.x - kappa.x)
                            + (1.0 / eta_z) * p[(1, 2)] * (t.center.y - kappa.y))
                            / p[(2, 2)]
                };
                let s = depth.abs() * value;
                for (a, w) in acc.iter_mut().zip(&t.weight) {
                    *a += s * w;
                }
            }
            acc
        })
        .collect();
    let labels = logits
        .chunks_exact(k)
        .map(|l| classify_logits(l, config.theta_occ))
        .collect();
    Ok(VoxelGrid {
        spec: *spec,
        labels,
        logits: Some(logits),
        num_classes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::scene::{ClassPolicy, Gaussian, SemanticTaxonomy, FREE};
    use std::sync::Arc;

    fn taxonomy() -> Arc<SemanticTaxonomy> {
        let classes = (0..2)
            .map(|i| ClassPolicy {
                id: i,
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

    fn spec() -> GridSpec {
        GridSpec::new(Vector3::zeros(), Vector3::repeat(4.0), 0.5).unwrap()
    }

    fn random_field(seed: u64, n: usize) -> GaussianField {
        let mut rng = SplitMix64::new(seed);
        let gaussians = (0..n)
            .map(|_| {
                Gaussian::new(
                    Vector3::new(rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)),
                    Vector3::new(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)),
                    rng.uniform(0.1, 1.0),
                    vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)],
                )
                .with_rotation([rng.normal(), rng.normal(), rng.normal(), rng.normal()])
            })
            .collect();
        GaussianField::with_gaussians(taxonomy(), gaussians)
    }

    #[test]
    fn empty_field_is_free() {
        let grid = brute_force_voxelize(&GaussianField::new(taxonomy()), &spec(), 1e-8).unwrap();
        assert!(grid.labels.iter().all(|&l| l == FREE));
        assert!(grid.logits.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_centered_gaussian() {
        let s = spec();
        let c = s.voxel_center([3, 4, 5]);
        let g = Gaussian::new(c, Vector3::repeat(1.0), 1.0, vec![(0.8f64 / 0.2).ln(), 0.0]);
        let grid = brute_force_voxelize(&GaussianField::with_gaussians(taxonomy(), vec![g]), &s, 1e-8).unwrap();
        let l = grid.voxel_logits(s.flat([3, 4, 5])).unwrap();
        // Σ = I so d = o_z, G = 1, α = 1.
        assert!((l[0] - c.z * 0.8).abs() < 1e-14);
        assert!((l[1] - c.z * 0.2).abs() < 1e-14);
    }

    #[test]
    fn duplicated_field_doubles_logits() {
        let a = random_field(5, 6);
        let mut doubled = a.clone();
        doubled.gaussians.extend(a.gaussians.iter().cloned());
        let one = brute_force_voxelize(&a, &spec(), 1e-8).unwrap().logits.unwrap();
        let two = brute_force_voxelize(&doubled, &spec(), 1e-8).unwrap().logits.unwrap();
        for (x, y) in one.iter().zip(&two) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn union_is_sum() {
        let a = random_field(8, 5);
        let b = random_field(9, 7);
        let mut union = a.clone();
        union.gaussians.extend(b.gaussians.iter().cloned());
        let la = brute_force_voxelize(&a, &spec(), 1e-8).unwrap().logits.unwrap();
        let lb = brute_force_voxelize(&b, &spec(), 1e-8).unwrap().logits.unwrap();
        let lu = brute_force_voxelize(&union, &spec(), 1e-8).unwrap().logits.unwrap();
        for i in 0..lu.len() {
            assert!((la[i] + lb[i] - lu[i]).abs() <= 1e-12 * lu[i].abs().max(1e-300));
        }
    }

    #[test]
    fn singular_covariance_named() {
        let mut field = random_field(1, 3);
        field.gaussians[2].scale = Vector3::new(1.0, 1e-7, 1.0);
        match brute_force_voxelize(&field, &spec(), 1e-8) {
            Err(Error::InvalidPrimitive { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
