//! Front-to-back semantic compositing of a few Gaussians, printed as an
//! argmax label image.
//!
//!     cargo run --release --example render_semantics

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use semocc::render::render_semantics;
use semocc::scene::{CameraModel, ClassPolicy, Gaussian, GaussianField, SemanticTaxonomy, UNKNOWN};

fn main() -> semocc::Result<()> {
    let classes = ["road", "car", "tree"]
        .iter()
        .enumerate()
        .map(|(i, name)| ClassPolicy {
            id: i as u16,
            name: name.to_string(),
            movable: *name == "car",
            foreground: *name != "road",
            scale_min: 0.01,
            scale_max: 5.0,
            tau_c: 5.0,
            cluster_radius: 1.0,
        })
        .collect();
    let tax = Arc::new(SemanticTaxonomy::new(classes, None)?);
    let one_hot = |c: usize| {
        let mut l = vec![0.0; 3];
        l[c] = 5.0;
        l
    };
    let field = GaussianField::with_gaussians(
        tax,
        vec![
            // A wide flat road patch behind, a car in front, a tree to the side.
            Gaussian::new(Vector3::new(0.0, 0.6, 8.0), Vector3::new(3.0, 0.3, 3.0), 0.9, one_hot(0)),
            Gaussian::new(Vector3::new(-0.4, 0.1, 5.0), Vector3::new(0.6, 0.35, 0.6), 0.95, one_hot(1)),
            Gaussian::new(Vector3::new(1.6, -0.8, 7.0), Vector3::new(0.4, 1.0, 0.4), 0.8, one_hot(2)),
        ],
    );
    let cam = CameraModel::new(30.0, 30.0, 31.5, 11.5, 64, 24, Matrix3::identity(), Vector3::zeros())?;
    let img = render_semantics(&field, &cam);
    let mask = img.argmax_mask();
    for y in 0..mask.height {
        let row: String = (0..mask.width)
            .map(|x| match mask.get(x, y) {
                UNKNOWN => '.',
                c => ['=', 'C', 'T'][c as usize],
            })
            .collect();
        println!("{row}");
    }
    let center = img.pixel(cam.width / 2, cam.height / 2);
    println!("center pixel probabilities {center:.3?}");
    Ok(())
}
