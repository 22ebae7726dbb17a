//! File-to-file operations behind each CLI subcommand.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use super::{evaluate, run_pipeline, InitSource, PipelineConfig, PipelineOutput, Stage};
use crate::dynamic::{cluster_dynamic, write_tracks, DynamicConfig};
use crate::error::{Error, Result};
use crate::ingest::io::{frame_dir_name, load_frames, write_frame};
use crate::ingest::{aggregate_anchors, label_points};
use crate::metrics::metrics_csv;
use crate::scene::{ClassId, GaussianField, SemanticTaxonomy, VoxelGrid};
use crate::splat::{filter_outliers, splat_to_grid};
use crate::synth::{generate_scene, SceneSpec};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_taxonomy(path: &Path) -> Result<Arc<SemanticTaxonomy>> {
    Ok(Arc::new(SemanticTaxonomy::from_json(&read(path)?)?))
}

pub fn load_field(path: &Path, taxonomy: Arc<SemanticTaxonomy>) -> Result<GaussianField> {
    GaussianField::from_json(&read(path)?, taxonomy)
}

/// Generate a synthetic scene into `out_dir/frames/frame_NNN/` with
/// ground truth in `out_dir/gt/frame_NNN.occv1`. Returns the generator warnings.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<Vec<String>> {
    let spec = SceneSpec::from_json(&read(spec_path)?)?;
    let scene = generate_scene(&spec)?;
    let frames_dir = out_dir.join("frames");
    let gt_dir = out_dir.join("gt");
    for dir in [&frames_dir, &gt_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (frame, gt) in scene.frames.iter().zip(&scene.ground_truth) {
        let name = frame_dir_name(frame.t);
        write_frame(&frames_dir.join(&name), frame)?;
        gt.write_occv1(&gt_dir.join(format!("{name}.occv1")))?;
    }
    Ok(scene.warnings)
}

fn with_init(config_path: &Path, init_source: Option<InitSource>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(config_path)?;
    if let Some(s) = init_source {
        cfg.init_source = s;
    }
    Ok(cfg)
}

pub fn cmd_pipeline(config_path: &Path, stop_after: Stage, init_source: Option<InitSource>) -> Result<PipelineOutput> {
    run_pipeline(&with_init(config_path, init_source)?, stop_after)
}

/// Ingest, initialize and fit; writes `field.json` and `train_log.csv`.
pub fn cmd_fit(config_path: &Path, init_source: Option<InitSource>) -> Result<PipelineOutput> {
    cmd_pipeline(config_path, Stage::Fit, init_source)
}

/// Cluster movable Gaussians of a saved field and consolidate dynamic tracks.
pub fn cmd_cluster(
    field_path: &Path,
    taxonomy_path: &Path,
    config: &DynamicConfig,
    out_field: &Path,
    tracks_out: Option<&Path>,
) -> Result<usize> {
    let field = load_field(field_path, load_taxonomy(taxonomy_path)?)?;
    let (field, tracks) = cluster_dynamic(&field, config)?;
    write(out_field, field.to_json())?;
    if let Some(p) = tracks_out {
        write_tracks(p, &tracks)?;
    }
    Ok(tracks.len())
}

/// Splat a saved field onto the configured grid.
pub fn cmd_splat(config_path: &Path, field_path: &Path, out: &Path, logits_out: Option<&Path>) -> Result<VoxelGrid> {
    let cfg = PipelineConfig::load(config_path)?;
    let tax = load_taxonomy(cfg.taxonomy_path()?)?;
    let field = load_field(field_path, tax)?;
    let grid = splat_to_grid(&field, &cfg.grid()?, &cfg.splat())?;
    grid.write_occv1(out)?;
    if let Some(p) = logits_out {
        grid.write_logits_sidecar(p)?;
    }
    Ok(grid)
}

/// Filter a grid against anchors built from the configured frames.
pub fn cmd_filter(config_path: &Path, grid_path: &Path, out: &Path) -> Result<VoxelGrid> {
    let cfg = PipelineConfig::load(config_path)?;
    let tax = load_taxonomy(cfg.taxonomy_path()?)?;
    let grid = VoxelGrid::read_occv1(grid_path, tax.len())?;
    let clouds = load_frames(cfg.frames_dir()?)?
        .iter()
        .map(label_points)
        .collect::<Result<Vec<_>>>()?;
    let anchors = aggregate_anchors(&clouds, &tax);
    let filtered = filter_outliers(&grid, &anchors, &tax, &cfg.splat());
    filtered.write_occv1(out)?;
    Ok(filtered)
}

/// Compare two OCCV1 grids; returns the metrics CSV text (also written to
/// `out` when given).
pub fn cmd_eval(pred: &Path, gt: &Path, taxonomy_path: &Path, ignore: &[ClassId], out: Option<&Path>) -> Result<String> {
    let tax = load_taxonomy(taxonomy_path)?;
    let p = VoxelGrid::read_occv1(pred, tax.len())?;
    let g = VoxelGrid::read_occv1(gt, tax.len())?;
    let m = evaluate(&p, &g, &tax, &ignore.iter().copied().collect::<BTreeSet<_>>())?;
    let text = metrics_csv(&m.report, m.iou);
    if let Some(o) = out {
        write(o, &text)?;
    }
    Ok(text)
}
