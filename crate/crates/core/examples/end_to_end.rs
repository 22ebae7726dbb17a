//! The whole pipeline from a config file: synthesize the scene it points at,
//! then ingest, anchor, initialize, fit, cluster, splat, filter and evaluate,
//! writing every artifact to the configured output directory.
//!
//!     cargo run --release --example end_to_end -- [three_boxes|dynamic]

use std::path::Path;

use semocc::metrics::metrics_csv;
use semocc::pipeline::{cmd_synth, run_pipeline, PipelineConfig, Stage};

fn main() -> semocc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let name = std::env::args().nth(1).unwrap_or_else(|| "three_boxes".into());
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let data = root.join("examples/data");
    cmd_synth(&data.join(format!("{name}.scene.json")), &root.join("target").join(&name))?;

    let cfg = PipelineConfig::load(&data.join(format!("{name}.toml")))?;
    let start = std::time::Instant::now();
    let out = run_pipeline(&cfg, Stage::Eval)?;
    for t in &out.tracks {
        println!("track {} class {} frames {} D={:.2} {}", t.id, t.class, t.entries.len(), t.mean_distance, t.motion.as_str());
    }
    if let Some(m) = &out.metrics {
        print!("{}", metrics_csv(&m.report, m.iou));
    }
    println!("done in {:.1} s; artifacts in {}", start.elapsed().as_secs_f64(), cfg.out_dir.display());
    Ok(())
}
