//! Finite-difference cross-checks of every objective's analytic gradient
//! and Hessian-vector product.

mod common;

use common::{fd_gradient, fd_hvp, random_theta, rel_err};
use hetero_opt_core::objectives::{
    build_quadratic, smooth_test_function, QuadraticSetting, SoftmaxLinearObjective,
};
use hetero_opt_core::{BlockedVector, Objective};

fn check_gradient_and_hvp(obj: &dyn Objective, seed: u64, grad_tol: f64, hvp_tol: f64) {
    let spec = obj.block_spec().clone();
    for trial in 0..5 {
        let theta = random_theta(&spec, 0.7, seed + trial);
        let g = obj.gradient(&theta).unwrap();
        let fd = fd_gradient(obj, &theta);
        let err = rel_err(g.as_slice(), &fd);
        assert!(err <= grad_tol, "gradient rel err {err} at trial {trial}");

        let v = random_theta(&spec, 1.0, seed + 100 + trial);
        let hv = obj.hvp(&theta, &v).unwrap();
        let fd = fd_hvp(obj, &theta, &v);
        let err = rel_err(hv.as_slice(), &fd);
        assert!(err <= hvp_tol, "hvp rel err {err} at trial {trial}");
    }
}

#[test]
fn quadratic_derivatives_match_finite_differences() {
    for (setting, seed) in [(QuadraticSetting::Homo, 3), (QuadraticSetting::Hetero, 4)] {
        let obj = build_quadratic(setting, seed).unwrap();
        check_gradient_and_hvp(&obj, seed, 1e-6, 1e-5);
    }
}

#[test]
fn softmax_derivatives_match_finite_differences() {
    let obj = SoftmaxLinearObjective::new(12, 3, 4, 9).unwrap();
    check_gradient_and_hvp(&obj, 31, 1e-6, 1e-5);
}

#[test]
fn smooth_test_functions_match_finite_differences() {
    for name in ["cubic_well", "quartic"] {
        let obj = smooth_test_function(name, 4).unwrap();
        check_gradient_and_hvp(&obj, 77, 1e-6, 1e-5);
    }
}

#[test]
fn hvp_is_linear_in_the_direction() {
    let obj = build_quadratic(QuadraticSetting::Hetero, 5).unwrap();
    let spec = obj.block_spec().clone();
    let theta = random_theta(&spec, 1.0, 1);
    let v = random_theta(&spec, 1.0, 2);
    let w = random_theta(&spec, 1.0, 3);
    let combo = BlockedVector::new(
        spec.clone(),
        v.as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| 2.0 * a - 0.5 * b)
            .collect(),
    )
    .unwrap();
    let hv = obj.hvp(&theta, &v).unwrap();
    let hw = obj.hvp(&theta, &w).unwrap();
    let hc = obj.hvp(&theta, &combo).unwrap();
    let expected: Vec<f64> = hv
        .as_slice()
        .iter()
        .zip(hw.as_slice())
        .map(|(a, b)| 2.0 * a - 0.5 * b)
        .collect();
    assert!(rel_err(hc.as_slice(), &expected) < 1e-12);
}

#[test]
fn subset_gradients_average_to_the_full_gradient() {
    let obj = SoftmaxLinearObjective::new(10, 4, 3, 17).unwrap();
    let spec = obj.block_spec().clone();
    let theta = random_theta(&spec, 0.4, 6);
    let full = obj.gradient(&theta).unwrap();

    // Disjoint halves weighted by their sizes must reproduce the mean.
    use hetero_opt_core::objectives::SampledObjective;
    let first = obj.gradient_subset(&theta, &[0, 1, 2, 3, 4]).unwrap();
    let second = obj.gradient_subset(&theta, &[5, 6, 7, 8, 9]).unwrap();
    let merged: Vec<f64> = first
        .as_slice()
        .iter()
        .zip(second.as_slice())
        .map(|(a, b)| 0.5 * a + 0.5 * b)
        .collect();
    assert!(rel_err(&merged, full.as_slice()) < 1e-12);
}

#[test]
fn reported_minima_are_stationary() {
    let quad = build_quadratic(QuadraticSetting::Homo, 2).unwrap();
    assert_eq!(quad.minimum_value(), Some(0.0));
    let zero = BlockedVector::zeros(quad.block_spec().clone());
    assert_eq!(quad.loss(&zero).unwrap(), 0.0);

    let quartic = smooth_test_function("quartic", 3).unwrap();
    assert_eq!(quartic.minimum_value(), Some(0.0));
    let origin = BlockedVector::zeros(quartic.block_spec().clone());
    assert_eq!(quartic.loss(&origin).unwrap(), 0.0);
}
