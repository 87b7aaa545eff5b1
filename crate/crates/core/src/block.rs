//! Blocked parameter vectors, norms, and steepest-descent directions.
//!
//! A [`BlockSpec`] partitions a flat parameter vector into named contiguous
//! blocks. All norms use pairwise summation to bound accumulation error.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::numeric;

/// Ordered partition of a parameter vector into named blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    blocks: Vec<(String, usize)>,
    total: usize,
}

impl BlockSpec {
    /// Builds a spec from (name, dim) pairs. Names must be unique and every
    /// dim must be at least 1.
    pub fn new<I, S>(blocks: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let blocks: Vec<(String, usize)> = blocks
            .into_iter()
            .map(|(name, dim)| (name.into(), dim))
            .collect();
        if blocks.is_empty() {
            return Err(Error::invalid("block spec must contain at least one block"));
        }
        for (name, dim) in &blocks {
            if *dim == 0 {
                return Err(Error::invalid(alloc::format!(
                    "block `{name}` has dimension 0"
                )));
            }
        }
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                if blocks[i].0 == blocks[j].0 {
                    return Err(Error::invalid(alloc::format!(
                        "duplicate block name `{}`",
                        blocks[i].0
                    )));
                }
            }
        }
        let total = blocks.iter().map(|(_, d)| d).sum();
        Ok(Self { blocks, total })
    }

    /// Single unnamed block covering the whole vector.
    pub fn single(dim: usize) -> Result<Self, Error> {
        Self::new([("all", dim)])
    }

    /// Total dimension P.
    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Number of blocks.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Name of block `b`.
    pub fn name(&self, b: usize) -> &str {
        &self.blocks[b].0
    }

    /// Dimension of block `b`.
    pub fn dim(&self, b: usize) -> usize {
        self.blocks[b].1
    }

    /// Half-open index range of block `b` within the flat vector.
    pub fn range(&self, b: usize) -> core::ops::Range<usize> {
        let start: usize = self.blocks[..b].iter().map(|(_, d)| d).sum();
        start..start + self.blocks[b].1
    }

    /// Iterates over (name, dim) pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.blocks.iter().map(|(n, d)| (n.as_str(), *d))
    }

    /// Position of the named block, if present.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|(n, _)| n == name)
    }
}

/// Flat parameter vector partitioned according to a [`BlockSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedVector {
    spec: BlockSpec,
    values: Vec<f64>,
}

impl BlockedVector {
    /// Wraps `values`; the length must equal `spec.total_dim()`.
    pub fn new(spec: BlockSpec, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != spec.total_dim() {
            return Err(Error::ShapeMismatch {
                expected: spec.total_dim(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    /// All-zeros vector over `spec`.
    pub fn zeros(spec: BlockSpec) -> Self {
        let n = spec.total_dim();
        Self {
            spec,
            values: alloc::vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Contiguous view of block `b`.
    pub fn block(&self, b: usize) -> &[f64] {
        &self.values[self.spec.range(b)]
    }

    /// Maps every entry, keeping the block layout.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entry-wise combination with another vector over the same spec.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, Error> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self {
            spec: self.spec.clone(),
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Inner product with another vector of the same length.
    pub fn dot(&self, other: &Self) -> Result<f64, Error> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(numeric::dot(&self.values, &other.values))
    }
}

/// Norm selector: q ∈ {1, 2, ∞}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

pub(crate) fn slice_norm(values: &[f64], q: Norm) -> f64 {
    match q {
        Norm::L1 => numeric::pairwise_sum_by(values.len(), |i| values[i].abs()),
        Norm::L2 => numeric::sqrt(numeric::pairwise_sum_by(values.len(), |i| {
            values[i] * values[i]
        })),
        Norm::Linf => values.iter().fold(0.0_f64, |m, &x| m.max(x.abs())),
    }
}

/// ‖v‖_q for q ∈ {1, 2, ∞}.
pub fn vector_norm(v: &BlockedVector, q: Norm) -> Result<f64, Error> {
    if !numeric::all_finite(v.as_slice()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(slice_norm(v.as_slice(), q))
}

/// Per-block ‖[v]_b‖_q in declaration order.
pub fn block_norms(v: &BlockedVector, q: Norm) -> Result<Vec<(&str, f64)>, Error> {
    if !numeric::all_finite(v.as_slice()) {
        return Err(Error::NonFiniteInput);
    }
    Ok((0..v.spec().num_blocks())
        .map(|b| (v.spec().name(b), slice_norm(v.block(b), q)))
        .collect())
}

pub(crate) fn sign_scalar(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Entry-wise sign with sign(0) = 0, so g·sign(g) recovers ‖g‖₁ and
/// exactly-zero coordinates stay put.
pub fn sign_vec(v: &BlockedVector) -> BlockedVector {
    v.map(sign_scalar)
}

/// Unit-norm descent direction: −g/‖g‖₂ under [`Norm::L2`], −sign(g) under
/// [`Norm::Linf`]. Either way gᵀΔ equals minus the dual norm of g.
pub fn steepest_direction(g: &BlockedVector, norm: Norm) -> Result<BlockedVector, Error> {
    match norm {
        Norm::L2 => {
            let n = vector_norm(g, Norm::L2)?;
            if n == 0.0 {
                return Err(Error::ZeroGradient);
            }
            Ok(g.map(|x| -x / n))
        }
        Norm::Linf => {
            vector_norm(g, Norm::Linf)?;
            Ok(g.map(|x| -sign_scalar(x)))
        }
        Norm::L1 => Err(Error::invalid(
            "steepest direction is defined for the L2 and Linf norms only",
        )),
    }
}

/// One steepest-descent step under ℓ_∞ smoothness with constant `l_inf`:
/// θ − (‖g‖₁ / l_inf)·sign(g).
pub fn linf_steepest_update(
    theta: &BlockedVector,
    g: &BlockedVector,
    l_inf: f64,
) -> Result<BlockedVector, Error> {
    if !(l_inf > 0.0) {
        return Err(Error::invalid("L_inf constant must be positive"));
    }
    let step = vector_norm(g, Norm::L1)? / l_inf;
    theta.zip_map(g, |t, gi| t - step * sign_scalar(gi))
}
