//! Cluster movable-class Gaussians per frame, pair clusters across frames and
//! flag the moving ones. One cuboid drives at 1 m/frame, the other is parked.
//!
//!     cargo run --release --example dynamic_clustering -- [rho]

use std::path::Path;

use semocc::dynamic::{cluster_dynamic, tracks_csv, DynamicConfig};
use semocc::ingest::label_points;
use semocc::pipeline::{initialize_field, load_taxonomy, InitSource, PipelineConfig};
use semocc::scene::AnchorSet;
use semocc::synth::{generate_scene, CameraSpec, GridSpecJson, Primitive, SceneSpec, Shape};

fn cuboid(center: [f64; 3], vx: f64) -> Primitive {
    Primitive { shape: Shape::Box { center, size: [0.4; 3] }, class: 0, velocity: [vx, 0.0, 0.0] }
}

fn main() -> semocc::Result<()> {
    let rho: f64 = std::env::args().nth(1).map(|s| s.parse().expect("rho")).unwrap_or(0.5);
    let tax = load_taxonomy(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/taxonomy.json"))?;
    let spec = SceneSpec {
        primitives: vec![cuboid([-2.5, -1.5, 0.5], 1.0), cuboid([1.0, 2.0, 0.5], 0.0)],
        frames: 3,
        cameras: vec![CameraSpec {
            eye: [0.0, 0.0, 12.0],
            target: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            focal: 300.0,
            width: 256,
            height: 256,
        }],
        points_per_frame: 500,
        noise_sigma: 0.01,
        seed: 3,
        grid: GridSpecJson { min: [-4.0, -4.0, 0.0], max: [4.0, 4.0, 8.0], voxel_size: 0.125 },
        ego_velocity: [0.0; 3],
        background_label: Some(4),
        num_classes: Some(5),
    };
    let scene = generate_scene(&spec)?;
    let clouds = scene.frames.iter().map(label_points).collect::<semocc::Result<Vec<_>>>()?;
    // One Gaussian per labeled point, tagged with its frame.
    let cfg = PipelineConfig { stride: 1, ..Default::default() };
    let field = initialize_field(&clouds, &AnchorSet::default(), &tax, &spec.grid.spec()?, &cfg, InitSource::Points);

    let (aggregated, tracks) = cluster_dynamic(&field, &DynamicConfig { rho, ..Default::default() })?;
    print!("{}", tracks_csv(&tracks));
    let flagged = aggregated.gaussians.iter().filter(|g| g.dynamic).count();
    println!("{flagged} of {} gaussians flagged dynamic and moved to their track's first frame", aggregated.len());
    Ok(())
}
