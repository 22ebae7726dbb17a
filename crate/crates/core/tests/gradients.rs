mod common;

use common::{check_gradients, gradient_fixture, weights};

fn run(sem: f64, geo: f64, sky: f64, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let fx = gradient_fixture(seed);
        let r = check_gradients(&fx, &weights(sem, geo, sky));
        assert!(r.failures.is_empty(), "seed {seed}: {:?}", &r.failures[..r.failures.len().min(8)]);
    }
}

#[test]
fn semantic_gradient_matches_finite_differences() {
    run(1.0, 0.0, 0.0, 0..50);
}

#[test]
fn geometric_gradient_matches_finite_differences() {
    run(0.0, 1.0, 0.0, 0..50);
}

#[test]
fn sky_gradient_matches_finite_differences() {
    run(0.0, 0.0, 1.0, 0..50);
}

#[test]
fn combined_gradient_matches_finite_differences() {
    run(1.0, 0.1, 1.0, 100..120);
}

#[test]
fn transparent_gaussian_has_zero_logit_gradient() {
    let mut fx = gradient_fixture(7);
    fx.field.gaussians[0].opacity = 0.0;
    let eval = semocc::optimize::backward(&fx.field, &fx.frames, &fx.anchors, &weights(1.0, 0.0, 0.0)).unwrap();
    assert!(eval.grads[0].logits.iter().all(|&v| v == 0.0));
}
