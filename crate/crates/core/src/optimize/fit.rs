use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::grad::GaussianGrad;
use super::losses::{known_pixels, loss_geometric, loss_sky, pixel_cross_entropy, visible_subset};
use crate::error::{Error, Result};
use crate::render::{render_backward, RenderConfig};
use crate::scene::{quat_normalize, AnchorSet, CameraModel, ClassId, GaussianField, SemanticMask, SensorFrame, UNKNOWN};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr_init: f64,
    /// Multiplier applied to the position learning rate every `lr_decay_every` steps.
    pub lr_position_decay: f64,
    pub lr_decay_every: u32,
    pub steps: u32,
    /// Training resolution at step 0 as (height, width); capped at the native size.
    pub image_start: [u32; 2],
    pub image_double_every: u32,
    pub prune_period: u32,
    pub prune_alpha: f64,
    /// Mean centroid-gradient norm above which a Gaussian is split, per class
    /// id. A single entry applies to every class; empty disables splitting.
    pub densify_grad_threshold: Vec<f64>,
    pub max_gaussians: usize,
    pub w_sem: f64,
    pub w_geo: f64,
    pub w_sky: f64,
    pub epsilon_geo: f64,
    #[serde(skip)]
    pub render: RenderConfig,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_init: 0.005,
            lr_position_decay: 0.98,
            lr_decay_every: 250,
            steps: 1000,
            image_start: [225, 400],
            image_double_every: 300,
            prune_period: 1000,
            prune_alpha: 0.0,
            densify_grad_threshold: Vec::new(),
            max_gaussians: 200_000,
            w_sem: 1.0,
            w_geo: 0.1,
            w_sky: 1.0,
            epsilon_geo: 0.1,
            render: RenderConfig::default(),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = self.lr_init > 0.0
            && self.lr_position_decay > 0.0
            && self.lr_decay_every > 0
            && self.image_double_every > 0
            && self.prune_period > 0
            && self.image_start.iter().all(|&v| v > 0);
        let weights_ok = [self.w_sem, self.w_geo, self.w_sky, self.epsilon_geo]
            .iter()
            .all(|&w| w >= 0.0 && w.is_finite());
        if !rates_ok || !weights_ok || self.densify_grad_threshold.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config(format!("invalid optimizer config {self:?}")));
        }
        Ok(())
    }

    pub fn lr_position(&self, step: u32) -> f64 {
        self.lr_init * self.lr_position_decay.powi((step / self.lr_decay_every) as i32)
    }

    /// Training resolution (width, height) at `step` for a view of the given native size.
    pub fn image_size(&self, step: u32, width: u32, height: u32) -> (u32, u32) {
        let factor = 1u64 << (step / self.image_double_every).min(32);
        let h = (self.image_start[0] as u64 * factor).min(height as u64) as u32;
        let w = (self.image_start[1] as u64 * factor).min(width as u64) as u32;
        (w, h)
    }

    pub fn densify_threshold(&self, class: ClassId) -> Option<f64> {
        match self.densify_grad_threshold.as_slice() {
            [] => None,
            [t] => Some(*t),
            all => all.get(class as usize).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub sem: f64,
    pub geo: f64,
    pub sky: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub losses: LossBreakdown,
    pub grads: Vec<GaussianGrad>,
}

/// One camera view used as a semantic target.
struct View<'a> {
    t: u32,
    camera: &'a CameraModel,
    mask: &'a SemanticMask,
}

/// Mask with sky pixels marked unknown: sky is handled by the opacity penalty.
fn semantic_target(mask: &SemanticMask, sky: Option<ClassId>) -> SemanticMask {
    let mut m = mask.clone();
    if let Some(s) = sky {
        m.labels.iter_mut().filter(|l| **l == s).for_each(|l| *l = UNKNOWN);
    }
    m
}

fn evaluate(
    field: &GaussianField,
    views: &[View<'_>],
    frames: &[SensorFrame],
    anchors: &AnchorSet,
    config: &OptimConfig,
) -> Result<Evaluation> {
    let k = field.num_classes();
    let mut grads = vec![GaussianGrad::zeros(k); field.len()];
    let mut sem = 0.0;
    if config.w_sem > 0.0 {
        for view in views {
            let known = known_pixels(view.mask, k);
            if known == 0 {
                continue;
            }
            let n = (known * views.len()) as f64;
            let subset = visible_subset(field, view.t);
            let labels = &view.mask.labels;
            let (loss, g) = render_backward(field, view.camera, Some(&subset), &config.render, |p, gamma| {
                let label = labels[p];
                let (l, d) = pixel_cross_entropy(gamma, label, n)?;
                let mut dg = vec![0.0; gamma.len()];
                dg[label as usize] = d;
                Some((l, dg))
            });
            sem += loss;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.add_scaled(gi, config.w_sem);
            }
        }
    }
    let (geo, geo_grads) = if config.w_geo > 0.0 {
        loss_geometric(field, anchors, config.epsilon_geo)
    } else {
        (0.0, Vec::new())
    };
    for (acc, g) in grads.iter_mut().zip(&geo_grads) {
        acc.center += g * config.w_geo;
    }
    let (sky, sky_grads) = if config.w_sky > 0.0 {
        loss_sky(field, frames, field.taxonomy.sky_id())
    } else {
        (0.0, Vec::new())
    };
    for (acc, g) in grads.iter_mut().zip(&sky_grads) {
        acc.opacity += g * config.w_sky;
    }
    let total = config.w_sem * sem + config.w_geo * geo + config.w_sky * sky;
    Ok(Evaluation {
        losses: LossBreakdown { total, sem, geo, sky },
        grads,
    })
}

fn check_finite(eval: &Evaluation, step: Option<u32>) -> Result<()> {
    let at = step.map(|s| format!(" at step {s}")).unwrap_or_default();
    if !eval.losses.total.is_finite() {
        return Err(Error::Numeric(format!("loss became non-finite{at}")));
    }
    for (i, g) in eval.grads.iter().enumerate() {
        if let Some(param) = g.first_non_finite() {
            return Err(Error::Numeric(format!("gaussian {i}: non-finite gradient of {param}{at}")));
        }
    }
    Ok(())
}

/// Total loss `w_sem·L_sem + w_geo·L_geo + w_sky·L_sky` over every view of
/// every frame at native resolution, and its gradient for each Gaussian.
/// `L_sem` is averaged over views.
pub fn backward(field: &GaussianField, frames: &[SensorFrame], anchors: &AnchorSet, config: &OptimConfig) -> Result<Evaluation> {
    let sky = field.taxonomy.sky_id();
    let targets: Vec<(u32, &CameraModel, SemanticMask)> = frames
        .iter()
        .flat_map(|f| f.views.iter().map(move |(c, m)| (f.t, c, semantic_target(m, sky))))
        .collect();
    let views: Vec<View> = targets
        .iter()
        .map(|(t, camera, mask)| View { t: *t, camera, mask })
        .collect();
    let eval = evaluate(field, &views, frames, anchors, config)?;
    check_finite(&eval, None)?;
    Ok(eval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: u32,
    pub losses: LossBreakdown,
    pub gaussian_count: usize,
    pub lr_position: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub field: GaussianField,
    pub log: Vec<TrainLogRow>,
}

/// Per-parameter Adam moments, one row per Gaussian.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(n: usize, width: usize) -> Self {
        Self {
            m: vec![vec![0.0; width]; n],
            v: vec![vec![0.0; width]; n],
        }
    }

    fn remap(&mut self, parents: &[usize]) {
        self.m = parents.iter().map(|&p| self.m[p].clone()).collect();
        self.v = parents.iter().map(|&p| self.v[p].clone()).collect();
    }

    /// Update direction for one Gaussian at 1-based iteration `t`.
    fn step(&mut self, i: usize, grad: &[f64], t: u32) -> Vec<f64> {
        let c1 = 1.0 - BETA1.powi(t as i32);
        let c2 = 1.0 - BETA2.powi(t as i32);
        let (m, v) = (&mut self.m[i], &mut self.v[i]);
        grad.iter()
            .enumerate()
            .map(|(j, &g)| {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
                (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS)
            })
            .collect()
    }
}

/// Clamp every scale into its class bounds.
pub(crate) fn clamp_scales(field: &mut GaussianField) {
    let tax = field.taxonomy.clone();
    for g in &mut field.gaussians {
        if let Some(p) = tax.class(g.class()) {
            g.scale = g.scale.map(|s| s.clamp(p.scale_min, p.scale_max));
        }
    }
}

pub fn fit(field: &GaussianField, frames: &[SensorFrame], anchors: &AnchorSet, config: &OptimConfig) -> Result<GaussianField> {
    fit_logged(field, frames, anchors, config).map(|o| o.field)
}

/// Adam fit cycling through the views one per step, with the position
/// learning-rate decay, the coarse-to-fine resolution schedule, periodic
/// densify/prune and per-step projection back onto the parameter bounds.
pub fn fit_logged(field: &GaussianField, frames: &[SensorFrame], anchors: &AnchorSet, config: &OptimConfig) -> Result<FitOutput> {
    config.validate()?;
    field.validate()?;
    let mut field = field.clone();
    let mut log = Vec::new();
    let native: Vec<(u32, &CameraModel, SemanticMask)> = frames
        .iter()
        .flat_map(|f| {
            let sky = field.taxonomy.sky_id();
            f.views.iter().map(move |(c, m)| (f.t, c, semantic_target(m, sky)))
        })
        .collect();
    if config.steps == 0 || native.is_empty() && config.w_geo == 0.0 {
        return Ok(FitOutput { field, log });
    }

    let k = field.num_classes();
    let width = 11 + k;
    let mut adam = Adam::new(field.len(), width);
    let mut grad_sum = vec![Vector3::zeros(); field.len()];
    let mut since_densify = 0u32;
    let mut level = u32::MAX;
    let mut scaled: Vec<(u32, CameraModel, SemanticMask)> = Vec::new();

    for step in 0..config.steps {
        let this_level = step / config.image_double_every;
        if this_level != level {
            level = this_level;
            scaled = native
                .iter()
                .map(|(t, cam, mask)| {
                    let (w, h) = config.image_size(step, cam.width, cam.height);
                    (*t, cam.resized(w, h), mask.resized(w, h))
                })
                .collect();
        }
        let views: Vec<View> = if scaled.is_empty() {
            Vec::new()
        } else {
            let (t, camera, mask) = &scaled[step as usize % scaled.len()];
            vec![View { t: *t, camera, mask }]
        };
        let eval = evaluate(&field, &views, frames, anchors, config)?;
        check_finite(&eval, Some(step))?;

        let lr_pos = config.lr_position(step);
        for (i, g) in eval.grads.iter().enumerate() {
            grad_sum[i] += g.center;
            let delta = adam.step(i, &g.to_vec(), step + 1);
            let gs = &mut field.gaussians[i];
            for a in 0..3 {
                gs.center[a] -= lr_pos * delta[a];
                gs.scale[a] -= config.lr_init * delta[3 + a];
            }
            for a in 0..4 {
                gs.rotation[a] -= config.lr_init * delta[6 + a];
            }
            gs.opacity = (gs.opacity - config.lr_init * delta[10]).clamp(0.0, 1.0);
            for (l, d) in gs.logits.iter_mut().zip(&delta[11..]) {
                *l -= config.lr_init * d;
            }
            gs.rotation = quat_normalize(gs.rotation);
        }
        clamp_scales(&mut field);
        since_densify += 1;

        if (step + 1) % config.prune_period == 0 {
            let mean: Vec<GaussianGrad> = grad_sum
                .iter()
                .map(|s| GaussianGrad {
                    center: s / since_densify as f64,
                    ..GaussianGrad::zeros(k)
                })
                .collect();
            let (next, parents) = super::densify_and_prune(&field, &mean, config);
            adam.remap(&parents);
            field = next;
            grad_sum = vec![Vector3::zeros(); field.len()];
            since_densify = 0;
        }

        log.push(TrainLogRow {
            step,
            losses: eval.losses,
            gaussian_count: field.len(),
            lr_position: lr_pos,
        });
    }
    Ok(FitOutput { field, log })
}

pub fn train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "L_total", "L_sem", "L_geo", "L_sky", "gaussian_count", "lr_position"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.losses.total.to_string(),
            r.losses.sem.to_string(),
            r.losses.geo.to_string(),
            r.losses.sky.to_string(),
            r.gaussian_count.to_string(),
            r.lr_position.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    std::fs::write(path, train_log_csv(rows)).map_err(|e| Error::io(path, e))
}
