use super::fit::{clamp_scales, OptimConfig};
use super::grad::GaussianGrad;
use crate::scene::GaussianField;

/// Remove transparent Gaussians, split those with a large centroid gradient,
/// and clamp every scale into its class bounds.
///
/// Returns the new field and, for each of its members, the index of the
/// Gaussian it came from.
pub fn densify_and_prune(field: &GaussianField, grads: &[GaussianGrad], config: &OptimConfig) -> (GaussianField, Vec<usize>) {
    let tax = field.taxonomy.clone();
    let mut out = Vec::with_capacity(field.len());
    let mut parents = Vec::with_capacity(field.len());
    let mut budget = config.max_gaussians.saturating_sub(field.len());
    for (i, g) in field.gaussians.iter().enumerate() {
        if g.opacity <= config.prune_alpha {
            continue;
        }
        let class = g.class();
        let grad = grads.get(i).map(|d| d.center).unwrap_or_default();
        let norm = grad.norm();
        let split = budget > 0 && config.densify_threshold(class).is_some_and(|t| norm > t);
        if !split {
            out.push(g.clone());
            parents.push(i);
            continue;
        }
        budget -= 1;
        let mut parent = g.clone();
        if tax.class(class).is_some_and(|p| p.foreground) {
            parent.scale /= 2.0;
        }
        let mut child = parent.clone();
        child.center -= grad / norm * (0.5 * g.scale.mean());
        out.push(parent);
        parents.push(i);
        out.push(child);
        parents.push(i);
    }
    let mut next = GaussianField::with_gaussians(tax, out);
    clamp_scales(&mut next);
    (next, parents)
}
