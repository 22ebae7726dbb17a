//! Ingest a synthetic scene, build anchors and the initial field, and fit the
//! semantic Gaussian field against the camera masks.
//!
//!     cargo run --release --example fit_field -- [steps]

use std::path::Path;

use semocc::ingest::{aggregate_anchors, label_points};
use semocc::optimize::fit_logged;
use semocc::pipeline::{initialize_field, load_taxonomy, PipelineConfig};
use semocc::synth::{generate_scene, SceneSpec};

fn main() -> semocc::Result<()> {
    let steps: u32 = std::env::args().nth(1).map(|s| s.parse().expect("steps")).unwrap_or(300);
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let spec = SceneSpec::from_json(&std::fs::read_to_string(data.join("three_boxes.scene.json")).expect("scene"))?;
    let mut cfg = PipelineConfig::load(&data.join("three_boxes.toml"))?;
    cfg.steps = steps;
    let tax = load_taxonomy(&data.join("taxonomy.json"))?;
    let scene = generate_scene(&spec)?;

    let clouds = scene.frames.iter().map(label_points).collect::<semocc::Result<Vec<_>>>()?;
    let anchors = aggregate_anchors(&clouds, &tax);
    for a in &anchors.anchors {
        let name = &tax.class(a.class).expect("anchor class").name;
        println!("anchor {name:>11} at {:.2?} from {} points", a.center.as_slice(), a.count);
    }
    let initial = initialize_field(&clouds, &anchors, &tax, &cfg.grid()?, &cfg, cfg.init_source);
    println!("initial field: {} gaussians", initial.len());

    let out = fit_logged(&initial, &scene.frames, &anchors, &cfg.optim())?;
    for row in out.log.iter().step_by((out.log.len() / 10).max(1)) {
        println!(
            "step {:>5}  loss {:.4} (sem {:.4}, geo {:.4}, sky {:.4})  {} gaussians",
            row.step, row.losses.total, row.losses.sem, row.losses.geo, row.losses.sky, row.gaussian_count
        );
    }
    println!("fitted field: {} gaussians", out.field.len());
    Ok(())
}
