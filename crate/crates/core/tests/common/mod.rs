//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use semocc::optimize::{backward, OptimConfig};
use semocc::render::render_with;
use semocc::rng::SplitMix64;
use semocc::scene::{
    Anchor, AnchorSet, CameraModel, ClassId, ClassPolicy, Gaussian, GaussianField, RigidTransform, SemanticMask,
    SemanticTaxonomy, SensorFrame, UNKNOWN,
};

pub fn policy(id: ClassId, name: &str, movable: bool) -> ClassPolicy {
    ClassPolicy {
        id,
        name: name.into(),
        movable,
        foreground: movable,
        scale_min: 0.01,
        scale_max: 3.0,
        tau_c: 3.0,
        cluster_radius: 1.0,
    }
}

/// road, car (movable), sky.
pub fn gradient_taxonomy() -> Arc<SemanticTaxonomy> {
    Arc::new(
        SemanticTaxonomy::new(
            vec![policy(0, "road", false), policy(1, "car", true), policy(2, "sky", false)],
            Some(2),
        )
        .unwrap(),
    )
}

pub struct GradientFixture {
    pub field: GaussianField,
    pub frames: Vec<SensorFrame>,
    pub anchors: AnchorSet,
}

fn random_quat(rng: &mut SplitMix64) -> [f64; 4] {
    let q = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// Distance from `x` to the nearest pixel-cell boundary (at half-integers).
fn cell_margin(x: f64) -> f64 {
    let f = (x + 0.5).fract();
    f.min(1.0 - f)
}

/// A random field of at most 20 Gaussians seen by two cameras over two
/// frames, with masks labeling only pixels of reasonable coverage.
///
/// Centroid projections are kept away from pixel-cell boundaries, Gaussians
/// away from anchor-assignment boundaries, and camera depths apart from each
/// other: the sky loss, the geometric loss and the compositing order are
/// discontinuous there.
pub fn gradient_fixture(seed: u64) -> GradientFixture {
    let tax = gradient_taxonomy();
    let mut rng = SplitMix64::new(seed);
    let cams = [
        CameraModel::new(26.0, 26.0, 15.5, 11.5, 32, 24, Matrix3::identity(), Vector3::zeros()).unwrap(),
        CameraModel::look_at(
            Vector3::new(2.0, -0.5, 0.0),
            Vector3::new(0.0, 0.0, 4.5),
            Vector3::new(0.0, -1.0, 0.0),
            24.0,
            28,
            20,
        )
        .unwrap(),
    ];
    let anchors = AnchorSet {
        anchors: vec![
            Anchor { class: 0, center: Vector3::new(-0.4, 0.3, 4.0), count: 10 },
            Anchor { class: 0, center: Vector3::new(0.6, -0.2, 5.0), count: 10 },
            Anchor { class: 1, center: Vector3::new(0.1, 0.0, 4.2), count: 10 },
        ],
    };
    let n = 5 + rng.below(16);
    let mut gaussians = Vec::with_capacity(n);
    while gaussians.len() < n {
        let center = Vector3::new(rng.uniform(-1.0, 1.0), rng.uniform(-0.7, 0.7), rng.uniform(3.0, 6.0));
        let logits: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let g = Gaussian::new(
            center,
            Vector3::new(rng.uniform(0.15, 0.5), rng.uniform(0.15, 0.5), rng.uniform(0.15, 0.5)),
            rng.uniform(0.2, 0.9),
            logits,
        )
        .with_rotation(random_quat(&mut rng))
        .with_frame(rng.below(2) as u32);
        let clear_of_cells = cams.iter().all(|c| {
            let p = c.project_camera(&c.to_camera(&g.center));
            cell_margin(p.x) > 0.02 && cell_margin(p.y) > 0.02
        });
        let class = g.class();
        let mut dists: Vec<f64> = anchors.of_class(class).map(|a| (a.center - g.center).norm()).collect();
        dists.sort_by(f64::total_cmp);
        let clear_of_anchors = dists.first().is_none_or(|&d| (d - 2.0).abs() > 0.01)
            && (dists.len() < 2 || dists[1] - dists[0] > 0.01);
        let clear_in_depth = cams.iter().all(|c| {
            let z = c.to_camera(&g.center).z;
            gaussians.iter().all(|o: &Gaussian| (c.to_camera(&o.center).z - z).abs() > 0.01)
        });
        if clear_of_cells && clear_of_anchors && clear_in_depth {
            gaussians.push(g);
        }
    }
    let field = GaussianField::with_gaussians(tax, gaussians);
    let mut frames = Vec::new();
    for t in 0..2u32 {
        let subset: Vec<usize> = (0..field.len())
            .filter(|&i| semocc::optimize::visible_in_frame(&field, i, t))
            .collect();
        let views = cams
            .iter()
            .map(|cam| {
                let img = render_with(&field, cam, Some(&subset), &Default::default());
                let mut mask = SemanticMask::filled(cam.width, cam.height, UNKNOWN);
                for (p, label) in mask.labels.iter_mut().enumerate() {
                    if img.opacity[p] >= 0.05 {
                        *label = rng.below(3) as ClassId;
                    }
                }
                (cam.clone(), mask)
            })
            .collect();
        frames.push(SensorFrame { t, ego_pose: RigidTransform::identity(), views, points: Vec::new() });
    }
    GradientFixture { field, frames, anchors }
}

pub const PARAM_NAMES: [&str; 5] = ["center", "scale", "rotation", "opacity", "logits"];

fn param_mut(g: &mut Gaussian, j: usize) -> &mut f64 {
    match j {
        0..=2 => &mut g.center[j],
        3..=5 => &mut g.scale[j - 3],
        6..=9 => &mut g.rotation[j - 6],
        10 => &mut g.opacity,
        _ => &mut g.logits[j - 11],
    }
}

pub fn block_of(j: usize) -> &'static str {
    match j {
        0..=2 => "center",
        3..=5 => "scale",
        6..=9 => "rotation",
        10 => "opacity",
        _ => "logits",
    }
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// (gaussian, parameter block, analytic, finite difference)
    pub failures: Vec<(usize, &'static str, f64, f64)>,
    pub worst_rel: f64,
}

/// Compare the analytic gradient of the configured total loss with central
/// differences, `h = 1e-4 · max(|x|, 1)`, at 1e-3 relative / 1e-6 absolute.
pub fn check_gradients(fx: &GradientFixture, config: &OptimConfig) -> GradCheck {
    let analytic = backward(&fx.field, &fx.frames, &fx.anchors, config).unwrap();
    let loss = |f: &GaussianField| backward(f, &fx.frames, &fx.anchors, config).unwrap().losses.total;
    let mut out = GradCheck::default();
    for (i, grad) in analytic.grads.iter().enumerate() {
        for (j, &a) in grad.to_vec().iter().enumerate() {
            let x = *param_mut(&mut fx.field.gaussians[i].clone(), j);
            let h = 1e-4 * x.abs().max(1.0);
            let mut plus = fx.field.clone();
            *param_mut(&mut plus.gaussians[i], j) = x + h;
            let mut minus = fx.field.clone();
            *param_mut(&mut minus.gaussians[i], j) = x - h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let err = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            out.checked += 1;
            if err > 1e-6 {
                out.worst_rel = out.worst_rel.max(err / scale);
            }
            if err > 1e-6 && err > 1e-3 * scale {
                out.failures.push((i, block_of(j), a, fd));
            }
        }
    }
    out
}

pub fn weights(sem: f64, geo: f64, sky: f64) -> OptimConfig {
    OptimConfig { w_sem: sem, w_geo: geo, w_sky: sky, ..Default::default() }
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

/// Generate `examples/data/{name}.scene.json` in memory and pair it with the
/// matching config; ground truth is frame 0.
pub fn example_fixture(name: &str) -> (semocc::pipeline::Inputs, semocc::pipeline::PipelineConfig) {
    use semocc::pipeline::{load_taxonomy, Inputs, PipelineConfig};
    use semocc::synth::{generate_scene, SceneSpec};
    let text = std::fs::read_to_string(data_path(&format!("{name}.scene.json"))).unwrap();
    let scene = generate_scene(&SceneSpec::from_json(&text).unwrap()).unwrap();
    let cfg = PipelineConfig::load(&data_path(&format!("{name}.toml"))).unwrap();
    let taxonomy = load_taxonomy(cfg.taxonomy_path().unwrap()).unwrap();
    let grid = cfg.grid().unwrap();
    let inputs = Inputs {
        frames: scene.frames,
        taxonomy,
        grid,
        ground_truth: scene.ground_truth.into_iter().next(),
    };
    (inputs, cfg)
}

/// The taxonomy shared by the example scenes.
pub fn example_fixture_taxonomy() -> Arc<SemanticTaxonomy> {
    semocc::pipeline::load_taxonomy(&data_path("taxonomy.json")).unwrap()
}
