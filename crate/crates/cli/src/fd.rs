//! Central finite differences over matrix-valued maps, used by the
//! `jacobian_check` experiment to confront the analytic Jacobians with a
//! derivative-free estimate.

use nalgebra::DMatrix;

/// Jacobian of `f` at `x` by central differences, rows and columns in
/// row-major vectorization order. Step scales with the input magnitude.
pub fn jacobian<F>(f: F, x: &DMatrix<f64>) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let h = 1e-6 * (1.0 + x.amax());
    let base = f(x);
    let rows = base.nrows() * base.ncols();
    let cols = x.nrows() * x.ncols();
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let col = i * x.ncols() + j;
            let mut plus = x.clone();
            plus[(i, j)] += h;
            let mut minus = x.clone();
            minus[(i, j)] -= h;
            let fp = f(&plus);
            let fm = f(&minus);
            for r in 0..fp.nrows() {
                for c in 0..fp.ncols() {
                    out[(r * fp.ncols() + c, col)] = (fp[(r, c)] - fm[(r, c)]) / (2.0 * h);
                }
            }
        }
    }
    out
}

/// Frobenius distance between `a` and `b`, relative to the larger magnitude.
/// The floor keeps exactly-zero Jacobians comparable.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    diff / a.norm().max(b.norm()).max(1e-3)
}
