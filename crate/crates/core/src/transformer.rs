//! Analytic Jacobians of row-wise normalizations, residual-layer Jacobian
//! assembly for the two normalization placements, softmax-row Jacobians,
//! attention gradient bounds, and attention-entropy summaries.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::numeric;
use crate::rng;

/// Row-major token matrix: n token rows, d channels each.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    x: DMatrix<f64>,
}

impl TokenMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self, Error> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("token matrix must be nonempty"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { x })
    }

    pub fn from_rows(n: usize, d: usize, values: &[f64]) -> Result<Self, Error> {
        if values.len() != n * d {
            return Err(Error::ShapeMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, values))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.x)
    }
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    numeric::sqrt(m.iter().fold(0.0, |acc, v| acc + v * v))
}

fn centered_row(x: &TokenMatrix, i: usize) -> (Vec<f64>, f64) {
    let d = x.d();
    let mean = x.matrix().row(i).iter().sum::<f64>() / d as f64;
    let c: Vec<f64> = x.matrix().row(i).iter().map(|v| v - mean).collect();
    let norm = numeric::sqrt(c.iter().fold(0.0, |acc, v| acc + v * v));
    (c, norm)
}

/// Row-wise layer normalization y_i = √d·X̃_i/‖X̃_i‖₂ with X̃_i the
/// mean-centered row.
pub fn layer_norm_forward(x: &TokenMatrix) -> Result<DMatrix<f64>, Error> {
    if x.d() < 2 {
        return Err(Error::invalid("layer norm needs at least 2 channels"));
    }
    let sqrt_d = numeric::sqrt(x.d() as f64);
    let mut out = DMatrix::zeros(x.n(), x.d());
    for i in 0..x.n() {
        let (c, norm) = centered_row(x, i);
        if norm == 0.0 {
            return Err(Error::ConstantTokenRow(i));
        }
        for (j, v) in c.iter().enumerate() {
            out[(i, j)] = sqrt_d * v / norm;
        }
    }
    Ok(out)
}

/// Per-row layer-norm Jacobian blocks
/// L_i = (√d/‖X̃_i‖)·(I − X̃_iX̃_iᵀ/‖X̃_i‖²)·(I − 11ᵀ/d).
pub fn layer_norm_jacobian(x: &TokenMatrix) -> Result<Vec<DMatrix<f64>>, Error> {
    if x.d() < 2 {
        return Err(Error::invalid("layer norm needs at least 2 channels"));
    }
    let d = x.d();
    let sqrt_d = numeric::sqrt(d as f64);
    let centering = DMatrix::identity(d, d) - DMatrix::from_element(d, d, 1.0 / d as f64);
    let mut blocks = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let (c, norm) = centered_row(x, i);
        if norm == 0.0 {
            return Err(Error::ConstantTokenRow(i));
        }
        let cv = DMatrix::from_column_slice(d, 1, &c);
        let reject = DMatrix::identity(d, d) - &cv * cv.transpose() / (norm * norm);
        blocks.push(reject * &centering * (sqrt_d / norm));
    }
    Ok(blocks)
}

/// Row-wise RMS normalization y_i = Diag(γ)·√d·X_i/‖X_i‖₂.
pub fn rms_norm_forward(x: &TokenMatrix, gamma: &[f64]) -> Result<DMatrix<f64>, Error> {
    if gamma.len() != x.d() {
        return Err(Error::ShapeMismatch {
            expected: x.d(),
            got: gamma.len(),
        });
    }
    let sqrt_d = numeric::sqrt(x.d() as f64);
    let mut out = DMatrix::zeros(x.n(), x.d());
    for i in 0..x.n() {
        let row: Vec<f64> = x.matrix().row(i).iter().copied().collect();
        let norm = numeric::sqrt(row.iter().fold(0.0, |acc, v| acc + v * v));
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = gamma[j] * sqrt_d * v / norm;
        }
    }
    Ok(out)
}

/// Per-row RMS-norm Jacobian blocks
/// R_i = Diag(γ)·(√d/‖X_i‖)·(I − X_iX_iᵀ/‖X_i‖²).
pub fn rms_norm_jacobian(x: &TokenMatrix, gamma: &[f64]) -> Result<Vec<DMatrix<f64>>, Error> {
    if gamma.len() != x.d() {
        return Err(Error::ShapeMismatch {
            expected: x.d(),
            got: gamma.len(),
        });
    }
    let d = x.d();
    let sqrt_d = numeric::sqrt(d as f64);
    let mut blocks = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let row: Vec<f64> = x.matrix().row(i).iter().copied().collect();
        let norm = numeric::sqrt(row.iter().fold(0.0, |acc, v| acc + v * v));
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        let rv = DMatrix::from_column_slice(d, 1, &row);
        let mut block = (DMatrix::identity(d, d) - &rv * rv.transpose() / (norm * norm))
            * (sqrt_d / norm);
        for r in 0..d {
            for c in 0..d {
                block[(r, c)] *= gamma[r];
            }
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// Stacks square blocks into one block-diagonal matrix.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut offset = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((offset, offset), (k, k)).copy_from(b);
        offset += k;
    }
    out
}

/// Where normalization sits relative to the residual connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerPlacement {
    PreLn,
    PostLn,
}

/// Jacobian of one residual layer from its module Jacobians.
///
/// Pre-LN: (J_FFN·J_LN2 + I)·(J_ATT·J_LN1 + I) — the identity keeps a
/// normalization-free path. Post-LN: J_LN2·(J_FFN + I)·J_LN1·(J_ATT + I) —
/// both normalization Jacobians multiply the whole product.
pub fn assemble_layer_jacobian(
    j_att: &DMatrix<f64>,
    j_ffn: &DMatrix<f64>,
    j_ln1: &DMatrix<f64>,
    j_ln2: &DMatrix<f64>,
    placement: LayerPlacement,
) -> Result<DMatrix<f64>, Error> {
    let nd = j_att.nrows();
    for m in [j_att, j_ffn, j_ln1, j_ln2] {
        if m.nrows() != nd || m.ncols() != nd {
            return Err(Error::ShapeMismatch {
                expected: nd,
                got: m.nrows().max(m.ncols()),
            });
        }
    }
    let eye = DMatrix::identity(nd, nd);
    Ok(match placement {
        LayerPlacement::PreLn => (j_ffn * j_ln2 + &eye) * (j_att * j_ln1 + &eye),
        LayerPlacement::PostLn => j_ln2 * (j_ffn + &eye) * (j_ln1 * (j_att + &eye)),
    })
}

const SIMPLEX_TOL: f64 = 1e-9;

fn check_simplex(p: &[f64]) -> Result<(), Error> {
    if p.is_empty() {
        return Err(Error::invalid("probability vector must be nonempty"));
    }
    if !numeric::all_finite(p) {
        return Err(Error::NonFiniteInput);
    }
    if p.iter().any(|&v| v < -SIMPLEX_TOL) {
        return Err(Error::invalid("probability vector has negative entries"));
    }
    let total = numeric::pairwise_sum(p);
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid("probability vector does not sum to 1"));
    }
    Ok(())
}

/// Softmax Jacobian of one probability row: diag(p) − ppᵀ.
pub fn softmax_row_jacobian(p: &[f64]) -> Result<DMatrix<f64>, Error> {
    check_simplex(p)?;
    let d = p.len();
    let mut j = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            j[(r, c)] = if r == c { p[r] * (1.0 - p[r]) } else { -p[r] * p[c] };
        }
    }
    Ok(j)
}

/// Shannon entropy −Σ p ln p of a probability row (0·ln 0 := 0).
pub fn row_entropy(p: &[f64]) -> Result<f64, Error> {
    check_simplex(p)?;
    Ok(p.iter()
        .filter(|&&v| v > 0.0)
        .fold(0.0, |acc, &v| acc - v * numeric::ln(v)))
}

/// Query/key/value projections of single-head attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

impl AttentionConfig {
    pub fn new(
        w_q: DMatrix<f64>,
        w_k: DMatrix<f64>,
        w_v: DMatrix<f64>,
    ) -> Result<Self, Error> {
        if w_q.ncols() == 0 || w_v.ncols() == 0 {
            return Err(Error::invalid("projection widths must be at least 1"));
        }
        if w_k.shape() != w_q.shape() {
            return Err(Error::ShapeMismatch {
                expected: w_q.ncols(),
                got: w_k.ncols(),
            });
        }
        if w_v.nrows() != w_q.nrows() {
            return Err(Error::ShapeMismatch {
                expected: w_q.nrows(),
                got: w_v.nrows(),
            });
        }
        Ok(Self { w_q, w_k, w_v })
    }

    pub fn d(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_k(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn d_v(&self) -> usize {
        self.w_v.ncols()
    }

    /// Pre-softmax scores M = X·W_Q·W_Kᵀ·Xᵀ/√d_k.
    pub fn scores(&self, x: &TokenMatrix) -> Result<DMatrix<f64>, Error> {
        if x.d() != self.d() {
            return Err(Error::ShapeMismatch {
                expected: self.d(),
                got: x.d(),
            });
        }
        let m = x.matrix() * &self.w_q * self.w_k.transpose() * x.matrix().transpose();
        Ok(m / numeric::sqrt(self.d_k() as f64))
    }

    /// Row-softmax of the scores.
    pub fn attention_matrix(&self, x: &TokenMatrix) -> Result<DMatrix<f64>, Error> {
        let m = self.scores(x)?;
        let n = m.nrows();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let row_max = m.row(i).iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut total = 0.0;
            for j in 0..n {
                let e = numeric::exp(m[(i, j)] - row_max);
                p[(i, j)] = e;
                total += e;
            }
            for j in 0..n {
                p[(i, j)] /= total;
            }
        }
        Ok(p)
    }
}

/// Frobenius-norm upper bounds on the attention gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBounds {
    /// √d_v·‖P‖_F·‖X‖_F, the value-projection gradient bound.
    pub u_v: f64,
    /// √n·‖W_VXᵀ‖_F·‖∂P/∂M‖_F·‖X‖_F·‖XW_K‖_F/√d_k, the query bound.
    pub u_q: f64,
    pub p_frobenius: f64,
    /// ‖∂P/∂M‖_F over the per-row softmax Jacobians.
    pub softmax_jacobian_frobenius: f64,
}

/// Evaluates both closed-form bounds for a given attention matrix P.
pub fn attention_bounds(
    x: &TokenMatrix,
    config: &AttentionConfig,
    p: &DMatrix<f64>,
) -> Result<AttentionBounds, Error> {
    if x.d() != config.d() {
        return Err(Error::ShapeMismatch {
            expected: config.d(),
            got: x.d(),
        });
    }
    let n = x.n();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: p.nrows().max(p.ncols()),
        });
    }
    let mut jac_sq = 0.0;
    for i in 0..n {
        let row: Vec<f64> = p.row(i).iter().copied().collect();
        let j = softmax_row_jacobian(&row)
            .map_err(|_| Error::invalid(alloc::format!("row {i} of P is not row-stochastic")))?;
        jac_sq += j.iter().fold(0.0, |acc, v| acc + v * v);
    }
    let jac_frob = numeric::sqrt(jac_sq);
    let p_frob = frobenius(p);
    let x_frob = x.frobenius();
    let u_v = numeric::sqrt(config.d_v() as f64) * p_frob * x_frob;
    let wv_xt = &config.w_v.transpose() * x.matrix().transpose();
    let x_wk = x.matrix() * &config.w_k;
    let u_q = numeric::sqrt(n as f64) * frobenius(&wv_xt) * jac_frob * x_frob
        * frobenius(&x_wk)
        / numeric::sqrt(config.d_k() as f64);
    Ok(AttentionBounds {
        u_v,
        u_q,
        p_frobenius: p_frob,
        softmax_jacobian_frobenius: jac_frob,
    })
}

fn is_onehot(p: &DMatrix<f64>, tol: f64) -> bool {
    (0..p.nrows()).all(|i| p.row(i).iter().any(|&v| (v - 1.0).abs() <= tol))
}

/// Sampling report for the one-hot extremality statement.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotExtremalityReport {
    pub n: usize,
    pub trials: usize,
    pub violations: usize,
    /// max over trials of ‖P‖_F − √n; negative when the bound held strictly.
    pub max_frobenius_excess: f64,
    /// min over entropy-filtered trials of Σ_i‖diag(P_i)−P_iP_iᵀ‖_F².
    pub min_query_term: f64,
    /// Trials whose minimum row entropy was ≤ 1e-3 (too close to one-hot for
    /// the strict-positivity check).
    pub filtered_out: usize,
}

/// Samples `trials` random row-stochastic n×n matrices (uniform simplex
/// rows) and checks that none beats the one-hot extremes: ‖P‖_F ≤ √n and the
/// query term stays strictly positive away from one-hot.
pub fn onehot_extremality_check(
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<OneHotExtremalityReport, Error> {
    if n == 0 {
        return Err(Error::invalid("matrix size must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let sqrt_n = numeric::sqrt(n as f64);
    let mut violations = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    let mut min_query_term = f64::INFINITY;
    let mut filtered_out = 0usize;
    for trial in 0..trials {
        let mut stream = rng::stream(seed, "extremality.rows", trial as u64);
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let row = rng::simplex_uniform_row(&mut stream, n);
            for (j, v) in row.iter().enumerate() {
                p[(i, j)] = *v;
            }
        }
        let p_frob = frobenius(&p);
        let excess = p_frob - sqrt_n;
        max_excess = max_excess.max(excess);
        if excess > SIMPLEX_TOL {
            violations += 1;
        }
        if excess >= -SIMPLEX_TOL && !is_onehot(&p, SIMPLEX_TOL) {
            violations += 1;
        }
        let mut query_term = 0.0;
        let mut min_entropy = f64::INFINITY;
        for i in 0..n {
            let row: Vec<f64> = p.row(i).iter().copied().collect();
            let j = softmax_row_jacobian(&row)?;
            query_term += j.iter().fold(0.0, |acc, v| acc + v * v);
            min_entropy = min_entropy.min(row_entropy(&row)?);
        }
        if query_term < 0.0 {
            violations += 1;
        }
        if min_entropy > 1e-3 && n >= 2 {
            min_query_term = min_query_term.min(query_term);
            if query_term <= 0.0 {
                violations += 1;
            }
        } else {
            filtered_out += 1;
        }
    }
    Ok(OneHotExtremalityReport {
        n,
        trials,
        violations,
        max_frobenius_excess: max_excess,
        min_query_term,
        filtered_out,
    })
}

/// Mean row entropy of the given attention matrices divided by the maximum
/// possible entropy ln S (S = columns of each matrix).
pub fn attention_entropy_ratio(attention: &[DMatrix<f64>]) -> Result<f64, Error> {
    if attention.is_empty() {
        return Err(Error::invalid("entropy ratio needs at least one matrix"));
    }
    let mut total = 0.0;
    let mut rows = 0usize;
    for a in attention {
        let s = a.ncols();
        if s < 2 {
            return Err(Error::invalid("attention rows need at least 2 columns"));
        }
        let log_s = numeric::ln(s as f64);
        for i in 0..a.nrows() {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            total += row_entropy(&row)? / log_s;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::invalid("entropy ratio needs at least one row"));
    }
    Ok(total / rows as f64)
}
