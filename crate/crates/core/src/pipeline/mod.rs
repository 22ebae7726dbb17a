//! Configuration and the staged end-to-end driver behind the CLI.

mod commands;
mod config;

pub use commands::{cmd_cluster, cmd_eval, cmd_filter, cmd_fit, cmd_pipeline, cmd_splat, cmd_synth, load_field, load_taxonomy};
pub use config::{InitSource, PipelineConfig};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::dynamic::{cluster_dynamic, write_tracks, ClusterTrack};
use crate::error::{Error, Result};
use crate::ingest::io::load_frames;
use crate::ingest::{aggregate_anchors, label_points, LabeledPointCloud};
use crate::metrics::{iou, miou, write_metrics, MiouReport};
use crate::optimize::{fit_logged, write_train_log, TrainLogRow};
use crate::rng::SplitMix64;
use crate::scene::{AnchorSet, ClassId, Gaussian, GaussianField, GridSpec, SemanticTaxonomy, SensorFrame, VoxelGrid};
use crate::splat::{filter_outliers, splat_to_grid, SplatConfig};

/// Logit given to the labeled class of an initial Gaussian; others get 0.
pub const INIT_LOGIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Stage {
    Ingest,
    Anchors,
    Init,
    Fit,
    Cluster,
    Splat,
    Filter,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Anchors => "anchors",
            Stage::Init => "init",
            Stage::Fit => "fit",
            Stage::Cluster => "cluster",
            Stage::Splat => "splat",
            Stage::Filter => "filter",
            Stage::Eval => "eval",
        }
    }
}

/// Everything the stages read.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub frames: Vec<SensorFrame>,
    pub taxonomy: Arc<SemanticTaxonomy>,
    pub grid: GridSpec,
    pub ground_truth: Option<VoxelGrid>,
}

impl Inputs {
    /// Read frames, taxonomy and optional ground truth named by `cfg`.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let tax_path = cfg.taxonomy_path()?;
        let text = std::fs::read_to_string(tax_path).map_err(|e| Error::io(tax_path, e))?;
        let taxonomy = Arc::new(SemanticTaxonomy::from_json(&text)?);
        let grid = cfg.grid()?;
        let frames = load_frames(cfg.frames_dir()?)?;
        let ground_truth = cfg
            .ground_truth
            .as_deref()
            .map(|p| VoxelGrid::read_occv1(p, taxonomy.len()))
            .transpose()?;
        Ok(Self { frames, taxonomy, grid, ground_truth })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub clouds: Vec<LabeledPointCloud>,
    pub anchors: AnchorSet,
    pub initial_field: Option<GaussianField>,
    pub field: Option<GaussianField>,
    pub train_log: Vec<TrainLogRow>,
    pub tracks: Vec<ClusterTrack>,
    /// Splatted (and, after the filter stage, filtered) occupancy.
    pub grid: Option<VoxelGrid>,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub report: MiouReport,
    pub iou: f64,
}

/// One Gaussian per anchor and, depending on `source`, one per
/// stride-subsampled labeled point.
///
/// Anchors of movable classes are taken per frame so each carries that
/// frame's time token; static-class anchors come from all frames together.
/// Points and anchors of the sky class seed nothing: a range return labeled
/// sky is a mask-boundary artifact.
pub fn initialize_field(
    clouds: &[LabeledPointCloud],
    anchors: &AnchorSet,
    taxonomy: &Arc<SemanticTaxonomy>,
    grid: &GridSpec,
    cfg: &PipelineConfig,
    source: InitSource,
) -> GaussianField {
    let k = taxonomy.len();
    let make = |center: Vector3<f64>, scale: f64, class: ClassId, frame: u32| {
        let mut logits = vec![0.0; k];
        logits[class as usize] = INIT_LOGIT;
        let p = taxonomy.class(class).expect("class from taxonomy");
        let s = scale.clamp(p.scale_min, p.scale_max);
        Gaussian::new(center, Vector3::repeat(s), cfg.init_opacity, logits).with_frame(frame)
    };
    let seeds = |c: ClassId| taxonomy.is_class(c) && taxonomy.sky_id() != Some(c);
    let mut gaussians = Vec::new();
    for a in anchors.anchors.iter().filter(|a| seeds(a.class) && !taxonomy.is_movable(a.class)) {
        let r = taxonomy.class(a.class).expect("anchor class").cluster_radius;
        gaussians.push(make(a.center, r / 4.0, a.class, 0));
    }
    for cloud in clouds {
        let per_frame = aggregate_anchors(std::slice::from_ref(cloud), taxonomy);
        for a in per_frame.anchors.iter().filter(|a| seeds(a.class) && taxonomy.is_movable(a.class)) {
            let r = taxonomy.class(a.class).expect("anchor class").cluster_radius;
            gaussians.push(make(a.center, r / 4.0, a.class, cloud.frame));
        }
    }
    let sampled: Vec<(Vector3<f64>, ClassId, u32)> = clouds
        .iter()
        .flat_map(|c| {
            c.points
                .iter()
                .zip(&c.labels)
                .filter(|(_, &l)| seeds(l))
                .step_by(cfg.stride)
                .map(move |(p, &l)| (*p, l, c.frame))
        })
        .collect();
    let half_voxel = grid.voxel_size / 2.0;
    match source {
        InitSource::Points => {
            gaussians.extend(sampled.iter().map(|&(p, l, t)| make(p, half_voxel, l, t)));
        }
        InitSource::Random => {
            let mut rng = SplitMix64::new(cfg.seed);
            let frames: Vec<u32> = clouds.iter().map(|c| c.frame).collect();
            for _ in 0..sampled.len() {
                let p = Vector3::from_fn(|i, _| rng.uniform(grid.min[i], grid.max[i]));
                let class = rng.below(k) as ClassId;
                let t = frames[rng.below(frames.len())];
                gaussians.push(make(p, half_voxel, class, t));
            }
        }
        InitSource::None => {}
    }
    GaussianField::with_gaussians(taxonomy.clone(), gaussians)
}

/// Splat the field, classify, and filter against the anchors.
pub fn occupancy(field: &GaussianField, anchors: &AnchorSet, grid: &GridSpec, splat: &SplatConfig) -> Result<(VoxelGrid, VoxelGrid)> {
    let raw = splat_to_grid(field, grid, splat).map_err(|e| e.in_stage("splat"))?;
    let filtered = filter_outliers(&raw, anchors, &field.taxonomy, splat);
    Ok((raw, filtered))
}

pub fn evaluate(pred: &VoxelGrid, gt: &VoxelGrid, taxonomy: &SemanticTaxonomy, ignore: &BTreeSet<ClassId>) -> Result<Metrics> {
    Ok(Metrics {
        iou: iou(pred, gt)?,
        report: miou(pred, gt, taxonomy, ignore)?,
    })
}

/// Run the stages in order up to and including `stop_after`. Each error is
/// tagged with the stage that raised it.
pub fn run_stages(inputs: &Inputs, cfg: &PipelineConfig, stop_after: Stage) -> Result<PipelineOutput> {
    cfg.validate()?;
    let tax = &inputs.taxonomy;
    let mut out = PipelineOutput::default();
    let tag = |stage: Stage| move |e: Error| e.in_stage(stage.name());

    out.clouds = inputs
        .frames
        .iter()
        .map(|f| {
            for (_, mask) in &f.views {
                mask.validate(tax.len())?;
            }
            let cloud = label_points(f)?;
            cloud.validate(tax.len())?;
            Ok(cloud)
        })
        .collect::<Result<_>>()
        .map_err(tag(Stage::Ingest))?;
    if stop_after == Stage::Ingest {
        return Ok(out);
    }

    out.anchors = aggregate_anchors(&out.clouds, tax);
    log::info!("{} anchors from {} frames", out.anchors.len(), out.clouds.len());
    if stop_after == Stage::Anchors {
        return Ok(out);
    }

    let initial = initialize_field(&out.clouds, &out.anchors, tax, &inputs.grid, cfg, cfg.init_source);
    log::info!("initialized {} gaussians", initial.len());
    out.initial_field = Some(initial.clone());
    if stop_after == Stage::Init {
        return Ok(out);
    }

    let fitted = fit_logged(&initial, &inputs.frames, &out.anchors, &cfg.optim()).map_err(tag(Stage::Fit))?;
    out.train_log = fitted.log;
    out.field = Some(fitted.field);
    if stop_after == Stage::Fit {
        return Ok(out);
    }

    let field = out.field.take().expect("fitted field");
    let (field, tracks) = cluster_dynamic(&field, &cfg.dynamic()).map_err(tag(Stage::Cluster))?;
    out.tracks = tracks;
    out.field = Some(field);
    if stop_after == Stage::Cluster {
        return Ok(out);
    }

    let field = out.field.as_ref().expect("clustered field");
    let grid = splat_to_grid(field, &inputs.grid, &cfg.splat()).map_err(tag(Stage::Splat))?;
    log::info!("splat: {} occupied voxels", grid.occupied_count());
    out.grid = Some(grid);
    if stop_after == Stage::Splat {
        return Ok(out);
    }

    let grid = out.grid.take().expect("splatted grid");
    let filtered = filter_outliers(&grid, &out.anchors, tax, &cfg.splat());
    log::info!("filter: {} occupied voxels remain", filtered.occupied_count());
    out.grid = Some(filtered);
    if stop_after == Stage::Filter {
        return Ok(out);
    }

    if let Some(gt) = &inputs.ground_truth {
        let grid = out.grid.as_ref().expect("filtered grid");
        out.metrics = Some(evaluate(grid, gt, tax, &cfg.ignore_set()).map_err(tag(Stage::Eval))?);
    }
    Ok(out)
}

/// Output file names inside `out_dir`.
pub mod artifacts {
    pub const TRAIN_LOG: &str = "train_log.csv";
    pub const FIELD: &str = "field.json";
    pub const TRACKS: &str = "tracks.csv";
    pub const OCCUPANCY: &str = "occupancy.occv1";
    pub const LOGITS: &str = "occupancy.logits.f32";
    pub const METRICS: &str = "metrics.csv";
    pub const ALL: [&str; 6] = [TRAIN_LOG, FIELD, TRACKS, OCCUPANCY, LOGITS, METRICS];
}

/// Write the artifacts of a (possibly partial) run. On failure, everything
/// written by this call is removed again.
pub fn write_artifacts(out_dir: &Path, out: &PipelineOutput, reached: Stage, write_logits: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = (|| {
        let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let p = out_dir.join(name);
            written.push(p.clone());
            f(&p)
        };
        if reached >= Stage::Fit {
            put(artifacts::TRAIN_LOG, &|p| write_train_log(p, &out.train_log))?;
        }
        if let Some(field) = &out.field {
            put(artifacts::FIELD, &|p| std::fs::write(p, field.to_json()).map_err(|e| Error::io(p, e)))?;
        }
        if reached >= Stage::Cluster {
            put(artifacts::TRACKS, &|p| write_tracks(p, &out.tracks))?;
        }
        if let Some(grid) = &out.grid {
            put(artifacts::OCCUPANCY, &|p| grid.write_occv1(p))?;
            if write_logits {
                put(artifacts::LOGITS, &|p| grid.write_logits_sidecar(p))?;
            }
        }
        if let Some(m) = &out.metrics {
            put(artifacts::METRICS, &|p| write_metrics(p, &m.report, m.iou))?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            remove_all(&written);
            Err(e)
        }
    }
}

fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

/// Load, run up to `stop_after`, and write artifacts into the configured
/// output directory. Stale artifacts from earlier runs are removed first, and
/// nothing is left behind if a stage fails.
pub fn run_pipeline(cfg: &PipelineConfig, stop_after: Stage) -> Result<PipelineOutput> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stale: Vec<PathBuf> = artifacts::ALL.iter().map(|n| out_dir.join(n)).collect();
    remove_all(&stale);
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage(Stage::Ingest.name()))?;
    if let Some(gt) = &inputs.ground_truth {
        if !gt.spec.same_shape(&inputs.grid) {
            return Err(Error::ShapeMismatch("ground truth grid differs from the configured grid".into()).in_stage("ingest"));
        }
    }
    let out = run_stages(&inputs, cfg, stop_after)?;
    write_artifacts(out_dir, &out, stop_after, cfg.write_logits)?;
    Ok(out)
}
