//! Generate a synthetic box scene (frames, masks, LiDAR points, ground truth)
//! and write it in the on-disk layout the pipeline reads.
//!
//!     cargo run --release --example synth_scene -- [scene.json] [out_dir]

use std::path::PathBuf;

use semocc::pipeline::cmd_synth;
use semocc::synth::{generate_scene, SceneSpec};

fn main() -> semocc::Result<()> {
    let mut args = std::env::args().skip(1);
    let spec_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/three_boxes.scene.json"));
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("semocc_synth"));

    let spec = SceneSpec::from_json(&std::fs::read_to_string(&spec_path).expect("readable scene spec"))?;
    let scene = generate_scene(&spec)?;
    for (frame, gt) in scene.frames.iter().zip(&scene.ground_truth) {
        println!(
            "frame {}: {} points, {} views, {} occupied ground-truth voxels",
            frame.t,
            frame.points.len(),
            frame.views.len(),
            gt.occupied_count()
        );
    }

    for w in cmd_synth(&spec_path, &out_dir)? {
        println!("warning: {w}");
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}
