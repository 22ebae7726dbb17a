use nalgebra::Vector3;

use crate::ingest::project_point;
use crate::render::SemanticImage;
use crate::scene::{AnchorSet, ClassId, GaussianField, SemanticMask, SensorFrame};

/// Added inside the log of the semantic loss.
pub const EPS_LOG: f64 = 1e-8;

/// Cross-entropy of rendered probabilities against the mask labels, averaged
/// over pixels with a known label. Returns the loss and `∂L/∂Γ` in the
/// image's pixel-major layout.
pub fn loss_semantic(rendered: &SemanticImage, mask: &SemanticMask) -> crate::Result<(f64, Vec<f64>)> {
    if rendered.width != mask.width || rendered.height != mask.height {
        return Err(crate::Error::ShapeMismatch(format!(
            "rendered {}x{} vs mask {}x{}",
            rendered.width, rendered.height, mask.width, mask.height
        )));
    }
    let k = rendered.num_classes;
    let mut grad = vec![0.0; rendered.semantics.len()];
    let known = known_pixels(mask, k);
    if known == 0 {
        return Ok((0.0, grad));
    }
    let n = known as f64;
    let mut loss = 0.0;
    for (p, &label) in mask.labels.iter().enumerate() {
        if let Some((l, g)) = pixel_cross_entropy(&rendered.semantics[p * k..(p + 1) * k], label, n) {
            loss += l;
            grad[p * k + label as usize] = g;
        }
    }
    Ok((loss, grad))
}

pub(crate) fn known_pixels(mask: &SemanticMask, k: usize) -> usize {
    mask.labels.iter().filter(|&&l| (l as usize) < k).count()
}

/// One pixel's share of the semantic loss and its derivative w.r.t. `Γ[label]`.
pub(crate) fn pixel_cross_entropy(gamma: &[f64], label: ClassId, n: f64) -> Option<(f64, f64)> {
    let v = *gamma.get(label as usize)? + EPS_LOG;
    Some((-v.ln() / n, -1.0 / (n * v)))
}

/// `-Σ 1/(d² + ε²)` over Gaussians whose nearest anchor of their own class
/// lies within twice the class cluster radius. Returns the loss and its
/// gradient with respect to every centroid.
pub fn loss_geometric(field: &GaussianField, anchors: &AnchorSet, epsilon_geo: f64) -> (f64, Vec<Vector3<f64>>) {
    let eps2 = epsilon_geo * epsilon_geo;
    let mut loss = 0.0;
    let mut grads = vec![Vector3::zeros(); field.len()];
    for (g, grad) in field.gaussians.iter().zip(grads.iter_mut()) {
        let class = g.class();
        let Some(policy) = field.taxonomy.class(class) else {
            continue;
        };
        let Some((anchor, d)) = anchors.nearest(class, &g.center) else {
            continue;
        };
        if d > 2.0 * policy.cluster_radius {
            continue;
        }
        let q = d * d + eps2;
        loss -= 1.0 / q;
        *grad = 2.0 * (g.center - anchor.center) / (q * q);
    }
    (loss, grads)
}

/// Whether Gaussian `i` takes part in frame `t`: static classes always,
/// movable classes only in the frame of their time token.
pub fn visible_in_frame(field: &GaussianField, i: usize, t: u32) -> bool {
    let g = &field.gaussians[i];
    !field.taxonomy.is_movable(g.class()) || g.frame == t
}

pub(crate) fn visible_subset(field: &GaussianField, t: u32) -> Vec<usize> {
    (0..field.len()).filter(|&i| visible_in_frame(field, i, t)).collect()
}

/// Mean `α²` over Gaussians whose centroid projects onto a sky pixel in any
/// camera of a frame they are visible in. Returns the loss and `∂L/∂α`.
pub fn loss_sky(field: &GaussianField, frames: &[SensorFrame], sky_id: Option<ClassId>) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; field.len()];
    let Some(sky) = sky_id else {
        return (0.0, grads);
    };
    let on_sky: Vec<usize> = (0..field.len())
        .filter(|&i| {
            let g = &field.gaussians[i];
            frames.iter().any(|f| {
                visible_in_frame(field, i, f.t)
                    && f.views.iter().any(|(cam, mask)| {
                        project_point(cam, &g.center).and_then(|uv| mask.sample(uv.x, uv.y)) == Some(sky)
                    })
            })
        })
        .collect();
    if on_sky.is_empty() {
        return (0.0, grads);
    }
    let n = on_sky.len() as f64;
    let mut loss = 0.0;
    for &i in &on_sky {
        let a = field.gaussians[i].opacity;
        loss += a * a / n;
        grads[i] = 2.0 * a / n;
    }
    (loss, grads)
}
