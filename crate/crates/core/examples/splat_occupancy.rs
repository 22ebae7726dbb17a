//! Cumulative Gaussian-to-voxel splatting and voxel classification, checked
//! against the dense reference voxelizer.
//!
//!     cargo run --release --example splat_occupancy

use std::sync::Arc;

use nalgebra::Vector3;
use semocc::scene::{ClassPolicy, Gaussian, GaussianField, GridSpec, SemanticTaxonomy, FREE};
use semocc::splat::{splat_to_grid, SplatConfig};
use semocc::synth::brute_force_voxelize_with;

fn main() -> semocc::Result<()> {
    let classes = (0..2)
        .map(|i| ClassPolicy {
            id: i,
            name: ["wall", "pole"][i as usize].into(),
            movable: false,
            foreground: i == 1,
            scale_min: 0.01,
            scale_max: 5.0,
            tau_c: 5.0,
            cluster_radius: 1.0,
        })
        .collect();
    let tax = Arc::new(SemanticTaxonomy::new(classes, None)?);
    let field = GaussianField::with_gaussians(
        tax,
        vec![
            // A thin slanted wall and an upright pole in front of it.
            Gaussian::new(Vector3::new(2.0, 3.0, 1.5), Vector3::new(1.5, 0.1, 1.0), 0.9, vec![4.0, 0.0])
                .with_rotation([0.98, 0.0, 0.0, 0.2]),
            Gaussian::new(Vector3::new(2.0, 1.5, 1.0), Vector3::new(0.12, 0.12, 0.8), 0.9, vec![0.0, 4.0]),
        ],
    );
    let spec = GridSpec::new(Vector3::zeros(), Vector3::new(4.0, 4.0, 3.0), 0.1)?;
    let cfg = SplatConfig { theta_occ: 0.05, ..Default::default() };

    let grid = splat_to_grid(&field, &spec, &cfg)?;
    let dense = brute_force_voxelize_with(&field, &spec, &cfg)?;
    let max_rel = grid
        .logits
        .as_ref()
        .expect("splat keeps logits")
        .iter()
        .zip(dense.logits.as_ref().expect("oracle keeps logits"))
        .filter(|(a, b)| a.abs().max(b.abs()) > 0.0)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max);
    println!("{} occupied voxels; agrees with dense evaluation: {} (max rel logit err {max_rel:.1e})", grid.occupied_count(), grid.labels == dense.labels);

    // Top-down slice at z = 1.05.
    let z = ((1.05 - spec.min.z) / spec.voxel_size) as u32;
    for y in (0..spec.dims[1]).rev() {
        let row: String = (0..spec.dims[0])
            .map(|x| match grid.get([x, y, z]) {
                FREE => '.',
                0 => '#',
                _ => 'o',
            })
            .collect();
        println!("{row}");
    }
    Ok(())
}
