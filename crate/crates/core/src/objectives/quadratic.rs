//! Block-diagonal quadratic objective L(θ) = ½θᵀHθ with per-block
//! eigendecompositions H_b = Q_b Λ_b Q_bᵀ.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::block::{BlockSpec, BlockedVector};
use crate::error::Error;
use crate::numeric;
use crate::objectives::{check_theta, Objective};
use crate::rng;

/// Eigenvalue layout of the quadratic: two fixed presets sharing the same
/// nine eigenvalues grouped differently, or caller-supplied lists.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadraticSetting {
    /// Every block mixes small and large eigenvalues:
    /// {1, 99, 4998}, {2, 100, 4999}, {3, 101, 5000}.
    Homo,
    /// Eigenvalues are sorted into blocks by magnitude:
    /// {1, 2, 3}, {99, 100, 101}, {4998, 4999, 5000}.
    Hetero,
    /// One positive eigenvalue list per block.
    Custom(Vec<Vec<f64>>),
}

impl QuadraticSetting {
    fn eigenlists(&self) -> Vec<Vec<f64>> {
        match self {
            QuadraticSetting::Homo => alloc::vec![
                alloc::vec![1.0, 99.0, 4998.0],
                alloc::vec![2.0, 100.0, 4999.0],
                alloc::vec![3.0, 101.0, 5000.0],
            ],
            QuadraticSetting::Hetero => alloc::vec![
                alloc::vec![1.0, 2.0, 3.0],
                alloc::vec![99.0, 100.0, 101.0],
                alloc::vec![4998.0, 4999.0, 5000.0],
            ],
            QuadraticSetting::Custom(lists) => lists.clone(),
        }
    }
}

/// Positive-definite quadratic with block-diagonal Hessian.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    spec: BlockSpec,
    eigenvalues: Vec<Vec<f64>>,
    q_factors: Vec<DMatrix<f64>>,
    h_blocks: Vec<DMatrix<f64>>,
}

/// Orthogonal factor from QR of a seeded Gaussian matrix, with the sign of
/// each column fixed so R has a positive diagonal.
fn seeded_orthogonal(dim: usize, seed: u64, block_index: u64) -> DMatrix<f64> {
    let mut stream = rng::stream(seed, "quadratic.q_factor", block_index);
    let entries = rng::standard_normal_vec(&mut stream, dim * dim);
    let m = DMatrix::from_row_slice(dim, dim, &entries);
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Builds the quadratic for a given eigenvalue layout and seed.
pub fn build_quadratic(setting: QuadraticSetting, seed: u64) -> Result<QuadraticObjective, Error> {
    let eigenvalues = setting.eigenlists();
    if eigenvalues.is_empty() {
        return Err(Error::invalid("quadratic needs at least one block"));
    }
    for (b, list) in eigenvalues.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::invalid(format!("block {b} has no eigenvalues")));
        }
        for &lam in list {
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(Error::invalid(format!(
                    "nonpositive eigenvalue {lam} in block {b}"
                )));
            }
        }
    }

    let spec = BlockSpec::new(
        eigenvalues
            .iter()
            .enumerate()
            .map(|(b, list)| (format!("b{}", b + 1), list.len())),
    )?;

    let mut q_factors = Vec::with_capacity(eigenvalues.len());
    let mut h_blocks = Vec::with_capacity(eigenvalues.len());
    for (b, list) in eigenvalues.iter().enumerate() {
        let dim = list.len();
        let q = seeded_orthogonal(dim, seed, b as u64);
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(list));
        let h = &q * lambda * q.transpose();
        // Round-off can leave H very slightly asymmetric; restore exact symmetry.
        let h = (&h + h.transpose()) * 0.5;
        q_factors.push(q);
        h_blocks.push(h);
    }

    Ok(QuadraticObjective {
        spec,
        eigenvalues,
        q_factors,
        h_blocks,
    })
}

impl QuadraticObjective {
    /// Eigenvalues of block `b`, in construction order.
    pub fn eigenvalues(&self, b: usize) -> &[f64] {
        &self.eigenvalues[b]
    }

    /// Orthogonal factor of block `b`.
    pub fn q_factor(&self, b: usize) -> &DMatrix<f64> {
        &self.q_factors[b]
    }

    /// Dense Hessian of block `b`.
    pub fn hessian_block(&self, b: usize) -> &DMatrix<f64> {
        &self.h_blocks[b]
    }

    /// Largest eigenvalue per block.
    pub fn block_max_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|list| list.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
            .collect()
    }

    /// Smallest eigenvalue of the full Hessian.
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, &x| m.min(x))
    }

    /// Largest eigenvalue of the full Hessian.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    fn apply_hessian(&self, v: &BlockedVector) -> BlockedVector {
        let mut out = Vec::with_capacity(v.len());
        for (b, h) in self.h_blocks.iter().enumerate() {
            let vb = nalgebra::DVector::from_row_slice(v.block(b));
            let hv = h * vb;
            out.extend(hv.iter().copied());
        }
        BlockedVector::new(self.spec.clone(), out).expect("block dims cover the full vector")
    }
}

impl Objective for QuadraticObjective {
    fn block_spec(&self) -> &BlockSpec {
        &self.spec
    }

    fn loss(&self, theta: &BlockedVector) -> Result<f64, Error> {
        check_theta(&self.spec, theta)?;
        let h_theta = self.apply_hessian(theta);
        Ok(0.5 * numeric::dot(theta.as_slice(), h_theta.as_slice()))
    }

    fn gradient(&self, theta: &BlockedVector) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        Ok(self.apply_hessian(theta))
    }

    fn hvp(&self, theta: &BlockedVector, v: &BlockedVector) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        check_theta(&self.spec, v)?;
        Ok(self.apply_hessian(v))
    }

    fn exact_block_operator_norms(&self, _theta: &BlockedVector) -> Option<Vec<f64>> {
        Some(self.block_max_eigenvalues())
    }

    fn minimum_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Loss and gradient at θ in one call.
pub fn quad_eval(
    obj: &QuadraticObjective,
    theta: &BlockedVector,
) -> Result<(f64, BlockedVector), Error> {
    Ok((obj.loss(theta)?, obj.gradient(theta)?))
}
