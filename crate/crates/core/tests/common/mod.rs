//! Shared finite-difference oracles. These differentiate the public forward
//! maps numerically and never call the analytic derivative code they check.
#![allow(dead_code)]

use hetero_opt_core::rng;
use hetero_opt_core::{BlockSpec, BlockedVector, Objective};
use nalgebra::DMatrix;

/// Central-difference gradient with h = 1e-5·(1+‖θ‖_∞).
pub fn fd_gradient(obj: &dyn Objective, theta: &BlockedVector) -> Vec<f64> {
    let linf = theta
        .as_slice()
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    let h = 1e-5 * (1.0 + linf);
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = theta.clone();
        minus.as_mut_slice()[i] -= h;
        let lp = obj.loss(&plus).unwrap();
        let lm = obj.loss(&minus).unwrap();
        out.push((lp - lm) / (2.0 * h));
    }
    out
}

/// Central-difference Hessian-vector product from gradient evaluations.
pub fn fd_hvp(obj: &dyn Objective, theta: &BlockedVector, v: &BlockedVector) -> Vec<f64> {
    let linf = theta
        .as_slice()
        .iter()
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    let h = 1e-5 * (1.0 + linf);
    let mut plus = theta.clone();
    let mut minus = theta.clone();
    for ((p, m), vi) in plus
        .as_mut_slice()
        .iter_mut()
        .zip(minus.as_mut_slice().iter_mut())
        .zip(v.as_slice())
    {
        *p += h * vi;
        *m -= h * vi;
    }
    let gp = obj.gradient(&plus).unwrap();
    let gm = obj.gradient(&minus).unwrap();
    gp.as_slice()
        .iter()
        .zip(gm.as_slice())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

/// Central-difference Jacobian of a matrix map, h = 1e-6·(1+‖X‖_∞).
/// Rows index vec(F) and columns index vec(X), both row-major.
pub fn fd_jacobian<F>(f: F, x: &DMatrix<f64>) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let linf = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let h = 1e-6 * (1.0 + linf);
    let base = f(x);
    let out_dim = base.nrows() * base.ncols();
    let in_dim = x.nrows() * x.ncols();
    let mut j = DMatrix::zeros(out_dim, in_dim);
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let col = r * x.ncols() + c;
            let mut plus = x.clone();
            plus[(r, c)] += h;
            let mut minus = x.clone();
            minus[(r, c)] -= h;
            let fp = f(&plus);
            let fm = f(&minus);
            for orow in 0..fp.nrows() {
                for ocol in 0..fp.ncols() {
                    let row = orow * fp.ncols() + ocol;
                    j[(row, col)] = (fp[(orow, ocol)] - fm[(orow, ocol)]) / (2.0 * h);
                }
            }
        }
    }
    j
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-3). The floor keeps the ratio meaningful
/// where the true derivative is exactly zero and FD returns pure roundoff
/// (2-channel layer norm, 1-channel RMS norm).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm_a.max(norm_b).max(1e-3)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let av: Vec<f64> = a.iter().copied().collect();
    let bv: Vec<f64> = b.iter().copied().collect();
    rel_err(&av, &bv)
}

/// Gaussian point with the given blocking, scaled coordinate-wise.
pub fn random_theta(spec: &BlockSpec, scale: f64, seed: u64) -> BlockedVector {
    let mut stream = rng::stream(seed, "theta0.sphere", 0);
    let values: Vec<f64> = rng::standard_normal_vec(&mut stream, spec.total_dim())
        .into_iter()
        .map(|v| v * scale)
        .collect();
    BlockedVector::new(spec.clone(), values).unwrap()
}
