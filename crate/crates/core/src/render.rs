//! CPU reference renderer: per-pixel front-to-back compositing of Gaussian
//! class probabilities, and its analytic backward pass.
//!
//! Each pixel composites the Gaussians covering it in camera-depth order:
//! `Γ = Σ_i softmax(γ_i) a_i Π_{j<i} (1 - a_j)` with `a_i = α_i · g_i`, where
//! `g_i` is the projected 2D footprint at the pixel.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::optimize::GaussianGrad;
use crate::scene::{covariance, quat_normalize, softmax, CameraModel, Gaussian, GaussianField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Footprint support radius in standard deviations of the 2D covariance.
    pub sigma_cutoff: f64,
    /// Per-Gaussian effective opacity below which a contribution is skipped.
    /// Contributions up to twice this value are eased in smoothly.
    pub min_contribution: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            sigma_cutoff: 3.0,
            min_contribution: 1e-6,
        }
    }
}

/// Blended class probabilities and accumulated opacity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticImage {
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    /// `width * height * num_classes`, pixel-major.
    pub semantics: Vec<f64>,
    pub opacity: Vec<f64>,
}

impl SemanticImage {
    pub fn zeros(width: u32, height: u32, num_classes: usize) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            num_classes,
            semantics: vec![0.0; n * num_classes],
            opacity: vec![0.0; n],
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f64] {
        let i = (y as usize * self.width as usize + x as usize) * self.num_classes;
        &self.semantics[i..i + self.num_classes]
    }

    /// Argmax labels as a mask (255-unknown palette when nothing was rendered).
    pub fn argmax_mask(&self) -> crate::scene::SemanticMask {
        let labels = self
            .semantics
            .chunks_exact(self.num_classes)
            .map(|p| {
                let mut best = 0;
                for (k, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = k;
                    }
                }
                if p[best] > 0.0 {
                    best as u16
                } else {
                    crate::scene::UNKNOWN
                }
            })
            .collect();
        crate::scene::SemanticMask {
            width: self.width,
            height: self.height,
            labels,
        }
    }
}

/// Indices of Gaussians in front of the camera, stably sorted near to far.
pub fn sort_by_depth(field: &GaussianField, cam: &CameraModel) -> Vec<usize> {
    sort_subset(&field.gaussians, cam, 0..field.len())
}

fn sort_subset(gaussians: &[Gaussian], cam: &CameraModel, subset: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = subset
        .filter_map(|i| {
            let z = cam.to_camera(&gaussians[i].center).z;
            (z > 0.0).then_some((z, i))
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Screen-space state of one Gaussian.
#[derive(Debug, Clone)]
struct Projected {
    index: usize,
    mean: Vector2<f64>,
    /// Inverse of the 2D covariance.
    conic: Matrix2<f64>,
    cam_pos: Vector3<f64>,
    jacobian: Matrix2x3<f64>,
    cov_cam: Matrix3<f64>,
    probs: Vec<f64>,
    opacity: f64,
    x_range: (u32, u32),
    y_range: (u32, u32),
}

fn project(g: &Gaussian, index: usize, cam: &CameraModel, cutoff: f64) -> Option<Projected> {
    let t = cam.to_camera(&g.center);
    if !(t.z > 0.0) {
        return None;
    }
    let cov = covariance(g).ok()?;
    let cov_cam = cam.rotation * cov * cam.rotation.transpose();
    let jacobian = Matrix2x3::new(
        cam.fx / t.z,
        0.0,
        -cam.fx * t.x / (t.z * t.z),
        0.0,
        cam.fy / t.z,
        -cam.fy * t.y / (t.z * t.z),
    );
    let cov2d = jacobian * cov_cam * jacobian.transpose();
    let conic = cov2d.try_inverse()?;
    if !conic.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mean = cam.project_camera(&t);
    let rx = cutoff * cov2d[(0, 0)].sqrt();
    let ry = cutoff * cov2d[(1, 1)].sqrt();
    let clamp = |lo: f64, hi: f64, n: u32| -> Option<(u32, u32)> {
        let a = lo.ceil().max(0.0);
        let b = hi.floor().min(n as f64 - 1.0);
        (a <= b).then_some((a as u32, b as u32))
    };
    let x_range = clamp(mean.x - rx, mean.x + rx, cam.width)?;
    let y_range = clamp(mean.y - ry, mean.y + ry, cam.height)?;
    Some(Projected {
        index,
        mean,
        conic,
        cam_pos: t,
        jacobian,
        cov_cam,
        probs: softmax(&g.logits),
        opacity: g.opacity,
        x_range,
        y_range,
    })
}

/// One covering Gaussian at one pixel.
#[derive(Debug, Clone, Copy)]
struct Contribution {
    proj: usize,
    /// Footprint value.
    footprint: f64,
    /// Derivative of the footprint with respect to the squared Mahalanobis distance.
    slope: f64,
    delta: Vector2<f64>,
    alpha: f64,
    /// Derivative of `alpha` with respect to `opacity · footprint`.
    ramp_slope: f64,
}

/// Effective opacity for a raw contribution `a`: zero below `tau`, `a`
/// itself from `2·tau` up, and a C¹ cubic in between.
fn contribution_ramp(a: f64, tau: f64) -> Option<(f64, f64)> {
    if a < tau || a == 0.0 {
        return None;
    }
    if a >= 2.0 * tau {
        return Some((a, 1.0));
    }
    let t = (a - tau) / tau;
    Some((tau * t * t * (5.0 - 3.0 * t), t * (10.0 - 9.0 * t)))
}

/// Gaussian footprint minus its first-order expansion at the support edge,
/// rescaled to 1 at the center. Value and slope both reach zero at the edge,
/// so the rendered image is C¹ in the Gaussian parameters.
struct Footprint {
    cutoff_sq: f64,
    edge: f64,
    norm: f64,
}

impl Footprint {
    fn new(sigma_cutoff: f64) -> Self {
        let cutoff_sq = sigma_cutoff * sigma_cutoff;
        let edge = (-0.5 * cutoff_sq).exp();
        Self {
            cutoff_sq,
            edge,
            norm: 1.0 - edge * (1.0 + 0.5 * cutoff_sq),
        }
    }

    /// Value and derivative with respect to `m²`, inside the support.
    fn eval(&self, m2: f64) -> Option<(f64, f64)> {
        if m2 >= self.cutoff_sq {
            return None;
        }
        let e = (-0.5 * m2).exp();
        let value = (e - self.edge * (1.0 + 0.5 * (self.cutoff_sq - m2))) / self.norm;
        Some((value, -0.5 * (e - self.edge) / self.norm))
    }
}

/// Per-row contributor lists, each already in depth order.
fn row_contributions(
    projected: &[Projected],
    y: u32,
    width: u32,
    fp: &Footprint,
    min_contribution: f64,
) -> Vec<Vec<Contribution>> {
    let mut row: Vec<Vec<Contribution>> = vec![Vec::new(); width as usize];
    for (pi, p) in projected.iter().enumerate() {
        if y < p.y_range.0 || y > p.y_range.1 {
            continue;
        }
        for x in p.x_range.0..=p.x_range.1 {
            let delta = Vector2::new(x as f64, y as f64) - p.mean;
            let m2 = delta.dot(&(p.conic * delta));
            let Some((footprint, slope)) = fp.eval(m2) else {
                continue;
            };
            let Some((alpha, ramp_slope)) = contribution_ramp(p.opacity * footprint, min_contribution) else {
                continue;
            };
            row[x as usize].push(Contribution {
                proj: pi,
                footprint,
                slope,
                delta,
                alpha,
                ramp_slope,
            });
        }
    }
    row
}

fn composite(list: &[Contribution], projected: &[Projected], out: &mut [f64], transmittance: &mut Vec<f64>) -> f64 {
    transmittance.clear();
    let mut t = 1.0;
    for c in list {
        transmittance.push(t);
        let w = c.alpha * t;
        for (o, p) in out.iter_mut().zip(&projected[c.proj].probs) {
            *o += p * w;
        }
        t *= 1.0 - c.alpha;
    }
    1.0 - t
}

fn project_all(field: &GaussianField, cam: &CameraModel, subset: Option<&[usize]>, config: &RenderConfig) -> Vec<Projected> {
    let order = match subset {
        Some(s) => sort_subset(&field.gaussians, cam, s.iter().copied()),
        None => sort_by_depth(field, cam),
    };
    order
        .into_iter()
        .filter_map(|i| project(&field.gaussians[i], i, cam, config.sigma_cutoff))
        .collect()
}

pub fn render_semantics(field: &GaussianField, cam: &CameraModel) -> SemanticImage {
    render_with(field, cam, None, &RenderConfig::default())
}

/// Render `subset` of the field (all Gaussians when `None`).
pub fn render_with(field: &GaussianField, cam: &CameraModel, subset: Option<&[usize]>, config: &RenderConfig) -> SemanticImage {
    let k = field.num_classes();
    let projected = project_all(field, cam, subset, config);
    let fp = Footprint::new(config.sigma_cutoff);
    let mut image = SemanticImage::zeros(cam.width, cam.height, k);
    let w = cam.width as usize;
    image
        .semantics
        .par_chunks_mut(w * k)
        .zip(image.opacity.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (sem_row, op_row))| {
            let row = row_contributions(&projected, y as u32, cam.width, &fp, config.min_contribution);
            let mut trans = Vec::new();
            for (x, list) in row.iter().enumerate() {
                op_row[x] = composite(list, &projected, &mut sem_row[x * k..(x + 1) * k], &mut trans);
            }
        });
    image
}

/// Screen-space gradient accumulated for one projected Gaussian.
#[derive(Debug, Clone)]
struct ScreenGrad {
    mean: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    probs: Vec<f64>,
}

impl ScreenGrad {
    fn zeros(k: usize) -> Self {
        Self {
            mean: Vector2::zeros(),
            conic: Matrix2::zeros(),
            opacity: 0.0,
            probs: vec![0.0; k],
        }
    }

    fn add(&mut self, o: &ScreenGrad) {
        self.mean += o.mean;
        self.conic += o.conic;
        self.opacity += o.opacity;
        for (a, b) in self.probs.iter_mut().zip(&o.probs) {
            *a += b;
        }
    }
}

/// Rows per work unit in the backward pass; fixed so the reduction order does
/// not depend on the thread count.
const ROW_BLOCK: usize = 8;

/// Render, evaluate a per-pixel loss and back-propagate it to every Gaussian.
///
/// `pixel_loss(pixel_index, Γ)` returns the pixel's loss term and `∂L/∂Γ`, or
/// `None` when the pixel does not contribute. Returns the total loss and one
/// gradient per Gaussian of the field (zero outside `subset`).
pub fn render_backward<F>(
    field: &GaussianField,
    cam: &CameraModel,
    subset: Option<&[usize]>,
    config: &RenderConfig,
    pixel_loss: F,
) -> (f64, Vec<GaussianGrad>)
where
    F: Fn(usize, &[f64]) -> Option<(f64, Vec<f64>)> + Sync,
{
    let k = field.num_classes();
    let projected = project_all(field, cam, subset, config);
    let fp = Footprint::new(config.sigma_cutoff);
    let height = cam.height as usize;
    let width = cam.width as usize;
    let blocks: Vec<(f64, Vec<ScreenGrad>)> = (0..height.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut grads = vec![ScreenGrad::zeros(k); projected.len()];
            let mut loss = 0.0;
            let mut gamma = vec![0.0; k];
            let mut trans = Vec::new();
            for y in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(height) {
                let row = row_contributions(&projected, y as u32, cam.width, &fp, config.min_contribution);
                for (x, list) in row.iter().enumerate() {
                    gamma.iter_mut().for_each(|v| *v = 0.0);
                    composite(list, &projected, &mut gamma, &mut trans);
                    let Some((l, dgamma)) = pixel_loss(y * width + x, &gamma) else {
                        continue;
                    };
                    loss += l;
                    backprop_pixel(list, &trans, &projected, &dgamma, &mut grads);
                }
            }
            (loss, grads)
        })
        .collect();

    let mut total = 0.0;
    let mut screen = vec![ScreenGrad::zeros(k); projected.len()];
    for (loss, grads) in &blocks {
        total += loss;
        for (acc, g) in screen.iter_mut().zip(grads) {
            acc.add(g);
        }
    }
    let mut out = vec![GaussianGrad::zeros(k); field.len()];
    for (p, sg) in projected.iter().zip(&screen) {
        out[p.index] = to_world(&field.gaussians[p.index], p, sg, cam);
    }
    (total, out)
}

fn backprop_pixel(
    list: &[Contribution],
    trans: &[f64],
    projected: &[Projected],
    dgamma: &[f64],
    grads: &mut [ScreenGrad],
) {
    // Running sum over the Gaussians behind the current one.
    let mut behind = 0.0;
    for (i, c) in list.iter().enumerate().rev() {
        let p = &projected[c.proj];
        let g_dot_p: f64 = dgamma.iter().zip(&p.probs).map(|(a, b)| a * b).sum();
        let t = trans[i];
        let d_alpha_eff = t * (g_dot_p - behind);
        let d_raw = d_alpha_eff * c.ramp_slope;
        behind = g_dot_p * c.alpha + (1.0 - c.alpha) * behind;

        let sg = &mut grads[c.proj];
        let w = c.alpha * t;
        for (acc, d) in sg.probs.iter_mut().zip(dgamma) {
            *acc += d * w;
        }
        sg.opacity += d_raw * c.footprint;
        let d_m2 = d_raw * p.opacity * c.slope;
        // m² = δᵀ A δ with δ = pixel - mean.
        sg.mean -= 2.0 * (p.conic * c.delta) * d_m2;
        sg.conic += c.delta * c.delta.transpose() * d_m2;
    }
}

/// ∂R/∂q for the unit-quaternion rotation formula, one matrix per component.
fn rotation_partials(q: [f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = q;
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [dw, dx, dy, dz]
}

/// Chain rule from a symmetric covariance gradient to scale and stored quaternion.
pub(crate) fn covariance_grad_to_params(g: &Gaussian, d_cov: &Matrix3<f64>) -> (Vector3<f64>, [f64; 4]) {
    let qn = quat_normalize(g.rotation);
    let rot = crate::scene::quat_to_matrix(qn);
    let m = rot * Matrix3::from_diagonal(&g.scale);
    // Σ = M Mᵀ
    let d_m = (d_cov + d_cov.transpose()) * m;
    let mut d_scale = Vector3::zeros();
    let mut d_rot = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d_scale[j] += d_m[(i, j)] * rot[(i, j)];
            d_rot[(i, j)] = d_m[(i, j)] * g.scale[j];
        }
    }
    let partials = rotation_partials(qn);
    let d_qn: [f64; 4] = std::array::from_fn(|c| d_rot.component_mul(&partials[c]).sum());
    let norm = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = (0..4).map(|c| qn[c] * d_qn[c]).sum();
    let d_q = std::array::from_fn(|c| (d_qn[c] - qn[c] * dot) / norm);
    (d_scale, d_q)
}

fn to_world(g: &Gaussian, p: &Projected, sg: &ScreenGrad, cam: &CameraModel) -> GaussianGrad {
    let a = p.conic;
    // A = S⁻¹ ⇒ ∂L/∂S = -A (∂L/∂A) A
    let d_cov2d = -(a * sg.conic * a);
    let jac = p.jacobian;
    let v = p.cov_cam;
    let d_v = jac.transpose() * d_cov2d * jac;
    let d_j = (d_cov2d + d_cov2d.transpose()) * jac * v;

    let t = p.cam_pos;
    let (fx, fy) = (cam.fx, cam.fy);
    let z2 = t.z * t.z;
    let z3 = z2 * t.z;
    let mut d_t = jac.transpose() * sg.mean;
    d_t.x += d_j[(0, 2)] * (-fx / z2);
    d_t.y += d_j[(1, 2)] * (-fy / z2);
    d_t.z += d_j[(0, 0)] * (-fx / z2)
        + d_j[(0, 2)] * (2.0 * fx * t.x / z3)
        + d_j[(1, 1)] * (-fy / z2)
        + d_j[(1, 2)] * (2.0 * fy * t.y / z3);

    let w = cam.rotation;
    let d_center = w.transpose() * d_t;
    let d_cov = w.transpose() * d_v * w;
    let (d_scale, d_rotation) = covariance_grad_to_params(g, &d_cov);

    let dot: f64 = p.probs.iter().zip(&sg.probs).map(|(a, b)| a * b).sum();
    let logits = p.probs.iter().zip(&sg.probs).map(|(pk, dk)| pk * (dk - dot)).collect();
    GaussianGrad {
        center: d_center,
        scale: d_scale,
        rotation: d_rotation,
        opacity: sg.opacity,
        logits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ClassPolicy, SemanticTaxonomy};
    use std::sync::Arc;

    fn taxonomy(k: usize) -> Arc<SemanticTaxonomy> {
        let classes = (0..k)
            .map(|i| ClassPolicy {
                id: i as u16,
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

    fn camera() -> CameraModel {
        CameraModel::new(40.0, 40.0, 15.0, 10.0, 31, 21, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    fn logits_for(p0: f64) -> Vec<f64> {
        vec![(p0 / (1.0 - p0)).ln(), 0.0]
    }

    #[test]
    fn empty_field_renders_zero() {
        let img = render_semantics(&GaussianField::new(taxonomy(2)), &camera());
        assert!(img.semantics.iter().all(|&v| v == 0.0));
        assert!(img.opacity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_gaussian_at_its_center_pixel() {
        let g = Gaussian::new(Vector3::new(0.0, 0.0, 4.0), Vector3::repeat(0.3), 1.0, vec![0.2, -0.4, 1.1]);
        let field = GaussianField::with_gaussians(taxonomy(3), vec![g.clone()]);
        let img = render_semantics(&field, &camera());
        let px = img.pixel(15, 10);
        let expect = g.probabilities();
        for k in 0..3 {
            assert!((px[k] - expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_gaussian_hand_composite() {
        // Both centered on the optical axis; opacity 0.5 at the center pixel.
        let front = Gaussian::new(Vector3::new(0.0, 0.0, 3.0), Vector3::repeat(0.2), 0.5, logits_for(0.8));
        let back = Gaussian::new(Vector3::new(0.0, 0.0, 6.0), Vector3::repeat(0.4), 0.5, logits_for(0.3));
        let field = GaussianField::with_gaussians(taxonomy(2), vec![back, front]);
        let img = render_semantics(&field, &camera());
        let px = img.pixel(15, 10);
        assert!((px[0] - 0.475).abs() < 1e-12, "{px:?}");
        assert!((px[1] - 0.275).abs() < 1e-12, "{px:?}");
        assert!((img.opacity[10 * 31 + 15] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn depth_sort_examples() {
        let tax = taxonomy(1);
        let at = |z: f64| Gaussian::new(Vector3::new(0.0, 0.0, z), Vector3::repeat(0.1), 1.0, vec![0.0]);
        let field = GaussianField::with_gaussians(tax.clone(), vec![at(2.0), at(1.0)]);
        assert_eq!(sort_by_depth(&field, &camera()), vec![1, 0]);
        let field = GaussianField::with_gaussians(tax.clone(), vec![at(2.0), at(2.0), at(2.0)]);
        assert_eq!(sort_by_depth(&field, &camera()), vec![0, 1, 2]);
        let field = GaussianField::with_gaussians(tax, vec![at(-1.0), at(3.0)]);
        assert_eq!(sort_by_depth(&field, &camera()), vec![1]);
    }

    #[test]
    fn transparent_gaussian_changes_nothing() {
        let a = Gaussian::new(Vector3::new(0.1, 0.0, 4.0), Vector3::repeat(0.5), 0.7, vec![0.3, 0.1]);
        let mut b = Gaussian::new(Vector3::new(-0.1, 0.05, 3.0), Vector3::repeat(0.4), 0.6, vec![-0.2, 0.9]);
        let base = render_semantics(&GaussianField::with_gaussians(taxonomy(2), vec![a.clone()]), &camera());
        b.opacity = 0.0;
        let with = render_semantics(&GaussianField::with_gaussians(taxonomy(2), vec![a, b]), &camera());
        for (x, y) in base.semantics.iter().zip(&with.semantics) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn disjoint_footprints_commute() {
        let a = Gaussian::new(Vector3::new(-0.25, 0.0, 3.0), Vector3::repeat(0.05), 0.9, vec![1.0, 0.0]);
        let b = Gaussian::new(Vector3::new(0.25, 0.0, 5.0), Vector3::repeat(0.05), 0.8, vec![0.0, 1.0]);
        let ab = render_semantics(&GaussianField::with_gaussians(taxonomy(2), vec![a.clone(), b.clone()]), &camera());
        let ba = render_semantics(&GaussianField::with_gaussians(taxonomy(2), vec![b, a]), &camera());
        assert_eq!(ab, ba);
    }

    #[test]
    fn transmittance_bound() {
        let mut rng = crate::rng::SplitMix64::new(4);
        let gs = (0..40)
            .map(|_| {
                Gaussian::new(
                    Vector3::new(rng.uniform(-1.0, 1.0), rng.uniform(-0.6, 0.6), rng.uniform(2.0, 6.0)),
                    Vector3::new(rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6)),
                    rng.uniform(0.5, 1.0),
                    vec![rng.normal(), rng.normal(), rng.normal()],
                )
            })
            .collect();
        let img = render_semantics(&GaussianField::with_gaussians(taxonomy(3), gs), &camera());
        for px in img.semantics.chunks_exact(3) {
            assert!(px.iter().all(|&v| v >= 0.0));
            assert!(px.iter().sum::<f64>() <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn contribution_ramp_is_c1() {
        let tau = 1e-6;
        assert_eq!(contribution_ramp(0.9e-6, tau), None);
        assert_eq!(contribution_ramp(3e-6, tau), Some((3e-6, 1.0)));
        let (lo, slo) = contribution_ramp(tau, tau).unwrap();
        assert_eq!((lo, slo), (0.0, 0.0));
        let (hi, shi) = contribution_ramp(2.0 * tau * (1.0 - 1e-12), tau).unwrap();
        assert!((hi - 2.0 * tau).abs() < 1e-16 && (shi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_mask_marks_empty_pixels_unknown() {
        let g = Gaussian::new(Vector3::new(0.0, 0.0, 4.0), Vector3::repeat(0.1), 1.0, vec![0.0, 1.0]);
        let img = render_semantics(&GaussianField::with_gaussians(taxonomy(2), vec![g]), &camera());
        let m = img.argmax_mask();
        assert_eq!(m.get(15, 10), 1);
        assert_eq!(m.get(0, 0), crate::scene::UNKNOWN);
    }
}
