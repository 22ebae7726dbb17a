//! Binary IoU and per-class mIoU of a prediction against ground truth. The
//! prediction here is the ground truth with one box shifted by a voxel.
//!
//!     cargo run --release --example evaluate

use std::collections::BTreeSet;
use std::path::Path;

use semocc::metrics::metrics_csv;
use semocc::pipeline::{evaluate, load_taxonomy};
use semocc::synth::{generate_scene, SceneSpec};

fn main() -> semocc::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let tax = load_taxonomy(&data.join("taxonomy.json"))?;
    let mut spec = SceneSpec::from_json(&std::fs::read_to_string(data.join("three_boxes.scene.json")).expect("scene"))?;
    let gt = generate_scene(&spec)?.ground_truth.remove(0);

    // Move the building one voxel along x.
    let building = spec.primitives.iter_mut().find(|p| p.class == 1).expect("building");
    building.velocity = [spec.grid.voxel_size, 0.0, 0.0];
    spec.frames = 2;
    let pred = generate_scene(&spec)?.ground_truth.remove(1);

    let ignore: BTreeSet<u16> = [3].into();
    let m = evaluate(&pred, &gt, &tax, &ignore)?;
    print!("{}", metrics_csv(&m.report, m.iou));
    Ok(())
}
