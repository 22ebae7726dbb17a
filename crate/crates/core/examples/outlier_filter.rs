//! Anchor-distance outlier rejection: voxels farther than their class's
//! `tau_c` from the nearest same-class anchor are freed.
//!
//!     cargo run --release --example outlier_filter

use std::sync::Arc;

use nalgebra::Vector3;
use semocc::rng::SplitMix64;
use semocc::scene::{Anchor, AnchorSet, ClassPolicy, GridSpec, SemanticTaxonomy, VoxelGrid, FREE};
use semocc::splat::{filter_outliers, SplatConfig};

fn main() -> semocc::Result<()> {
    let tax = Arc::new(SemanticTaxonomy::new(
        vec![ClassPolicy {
            id: 0,
            name: "building".into(),
            movable: false,
            foreground: true,
            scale_min: 0.01,
            scale_max: 5.0,
            tau_c: 1.0,
            cluster_radius: 1.0,
        }],
        None,
    )?);
    let spec = GridSpec::new(Vector3::zeros(), Vector3::repeat(4.0), 0.125)?;
    let anchor = Vector3::new(2.0, 2.0, 2.0);
    let anchors = AnchorSet { anchors: vec![Anchor { class: 0, center: anchor, count: 100 }] };

    // A solid ball around the anchor plus scattered floaters.
    let mut grid = VoxelGrid::free(spec, 1);
    let mut rng = SplitMix64::new(9);
    let mut floaters = 0;
    for idx in 0..spec.len() {
        let d = (spec.voxel_center(spec.unflat(idx)) - anchor).norm();
        if d <= 0.8 || rng.next_f64() < 0.002 {
            grid.labels[idx] = 0;
            floaters += usize::from(d > 1.0);
        }
    }
    let filtered = filter_outliers(&grid, &anchors, &tax, &SplatConfig::default());
    println!(
        "{} occupied before, {} after; {} floaters beyond tau_c planted, {} remain",
        grid.occupied_count(),
        filtered.occupied_count(),
        floaters,
        (0..spec.len())
            .filter(|&i| filtered.labels[i] != FREE && (spec.voxel_center(spec.unflat(i)) - anchor).norm() > 1.0)
            .count()
    );
    Ok(())
}
