//! Softmax linear classifier over a fixed feature matrix: mean cross-entropy
//! with parameters θ = (V: C×h, b: C) held in two blocks.

use alloc::format;
use alloc::vec::Vec;

use crate::block::{BlockSpec, BlockedVector};
use crate::error::Error;
use crate::numeric;
use crate::objectives::{check_theta, Objective, SampledObjective};
use crate::rng;

/// Mean cross-entropy of logits f(x) = Vφ(x) + b over N fixed samples.
///
/// Labels are 0-based class indices. Parameter layout: V row-major
/// (class-major) followed by the bias vector.
#[derive(Debug, Clone)]
pub struct SoftmaxLinearObjective {
    spec: BlockSpec,
    phi: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    classes: usize,
    feature_dim: usize,
}

impl SoftmaxLinearObjective {
    /// Seeded instance: Φ entries i.i.d. standard normal, labels assigned
    /// round-robin so every class holds ⌈N/C⌉ or ⌊N/C⌋ samples.
    pub fn new(n: usize, classes: usize, feature_dim: usize, seed: u64) -> Result<Self, Error> {
        let mut stream = rng::stream(seed, "softmax.features", 0);
        let phi = rng::standard_normal_vec(&mut stream, n * feature_dim);
        let labels = (0..n).map(|i| i % classes).collect();
        Self::from_parts(phi, labels, classes, feature_dim)
    }

    /// Instance over explicit features (row-major N×h) and labels.
    pub fn from_parts(
        phi: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
        feature_dim: usize,
    ) -> Result<Self, Error> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("objective needs at least one sample"));
        }
        if classes < 2 {
            return Err(Error::invalid("objective needs at least two classes"));
        }
        if feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if phi.len() != n * feature_dim {
            return Err(Error::ShapeMismatch {
                expected: n * feature_dim,
                got: phi.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let spec = BlockSpec::new([("V", classes * feature_dim), ("b", classes)])?;
        Ok(Self {
            spec,
            phi,
            labels,
            n,
            classes,
            feature_dim,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Feature row φ(x_i).
    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.phi[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Softmax probabilities of sample `i` under parameters θ.
    pub fn probabilities(&self, theta: &BlockedVector, i: usize) -> Vec<f64> {
        let h = self.feature_dim;
        let v = theta.block(0);
        let bias = theta.block(1);
        let row = self.feature_row(i);
        let mut logits: Vec<f64> = (0..self.classes)
            .map(|k| numeric::dot(&v[k * h..(k + 1) * h], row) + bias[k])
            .collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = numeric::exp(*l - max);
            total += *l;
        }
        for l in logits.iter_mut() {
            *l /= total;
        }
        logits
    }

    fn sample_loss(&self, theta: &BlockedVector, i: usize) -> f64 {
        let p = self.probabilities(theta, i);
        -numeric::ln(p[self.labels[i]])
    }

    /// Gradient of sample `i`'s cross-entropy with respect to θ.
    pub fn per_sample_gradient(
        &self,
        theta: &BlockedVector,
        i: usize,
    ) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        if i >= self.n {
            return Err(Error::invalid(format!("sample index {i} out of range")));
        }
        let mut out = alloc::vec![0.0; self.spec.total_dim()];
        self.accumulate_sample_gradient(theta, i, 1.0, &mut out);
        BlockedVector::new(self.spec.clone(), out)
    }

    fn accumulate_sample_gradient(
        &self,
        theta: &BlockedVector,
        i: usize,
        weight: f64,
        out: &mut [f64],
    ) {
        let h = self.feature_dim;
        let p = self.probabilities(theta, i);
        let row = self.feature_row(i);
        let bias_offset = self.classes * h;
        for k in 0..self.classes {
            let delta = p[k] - if k == self.labels[i] { 1.0 } else { 0.0 };
            let w = weight * delta;
            for (l, &phi_l) in row.iter().enumerate() {
                out[k * h + l] += w * phi_l;
            }
            out[bias_offset + k] += w;
        }
    }

    fn check_indices(&self, indices: &[usize]) -> Result<(), Error> {
        if indices.is_empty() {
            return Err(Error::invalid("empty sample subset"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        Ok(())
    }
}

impl Objective for SoftmaxLinearObjective {
    fn block_spec(&self) -> &BlockSpec {
        &self.spec
    }

    fn loss(&self, theta: &BlockedVector) -> Result<f64, Error> {
        let all: Vec<usize> = (0..self.n).collect();
        self.loss_subset(theta, &all)
    }

    fn gradient(&self, theta: &BlockedVector) -> Result<BlockedVector, Error> {
        let all: Vec<usize> = (0..self.n).collect();
        self.gradient_subset(theta, &all)
    }

    fn as_sampled(&self) -> Option<&dyn SampledObjective> {
        Some(self)
    }

    fn hvp(&self, theta: &BlockedVector, v: &BlockedVector) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        check_theta(&self.spec, v)?;
        let h = self.feature_dim;
        let bias_offset = self.classes * h;
        let vw = v.block(0);
        let vb = v.block(1);
        let mut out = alloc::vec![0.0; self.spec.total_dim()];
        let scale = 1.0 / self.n as f64;
        for i in 0..self.n {
            let p = self.probabilities(theta, i);
            let row = self.feature_row(i);
            // Directional logit change df = V_v φ + b_v, then u = (diag(p) − ppᵀ)df.
            let df: Vec<f64> = (0..self.classes)
                .map(|k| numeric::dot(&vw[k * h..(k + 1) * h], row) + vb[k])
                .collect();
            let p_dot_df = numeric::dot(&p, &df);
            for k in 0..self.classes {
                let u = p[k] * (df[k] - p_dot_df) * scale;
                for (l, &phi_l) in row.iter().enumerate() {
                    out[k * h + l] += u * phi_l;
                }
                out[bias_offset + k] += u;
            }
        }
        BlockedVector::new(self.spec.clone(), out)
    }
}

impl SampledObjective for SoftmaxLinearObjective {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn loss_subset(&self, theta: &BlockedVector, indices: &[usize]) -> Result<f64, Error> {
        check_theta(&self.spec, theta)?;
        self.check_indices(indices)?;
        let losses: Vec<f64> = indices
            .iter()
            .map(|&i| self.sample_loss(theta, i))
            .collect();
        Ok(numeric::pairwise_sum(&losses) / indices.len() as f64)
    }

    fn gradient_subset(
        &self,
        theta: &BlockedVector,
        indices: &[usize],
    ) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        self.check_indices(indices)?;
        let weight = 1.0 / indices.len() as f64;
        let mut out = alloc::vec![0.0; self.spec.total_dim()];
        for &i in indices {
            self.accumulate_sample_gradient(theta, i, weight, &mut out);
        }
        BlockedVector::new(self.spec.clone(), out)
    }
}

/// Sample selector for [`softmax_ce_grad`].
#[derive(Debug, Clone, Copy)]
pub enum SampleSet<'a> {
    All,
    Subset(&'a [usize]),
}

/// Mean cross-entropy gradient over the selected samples.
pub fn softmax_ce_grad(
    obj: &SoftmaxLinearObjective,
    theta: &BlockedVector,
    samples: SampleSet<'_>,
) -> Result<BlockedVector, Error> {
    match samples {
        SampleSet::All => obj.gradient(theta),
        SampleSet::Subset(indices) => obj.gradient_subset(theta, indices),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_softmax_at_zero_parameters() {
        let obj = SoftmaxLinearObjective::from_parts(vec![1.0], vec![0], 2, 1).unwrap();
        let theta = BlockedVector::zeros(obj.block_spec().clone());
        let grad = softmax_ce_grad(&obj, &theta, SampleSet::All).unwrap();
        let bias = grad.block(1);
        assert!((bias[0] + 0.5).abs() < 1e-15);
        assert!((bias[1] - 0.5).abs() < 1e-15);
        assert!((obj.loss(&theta).unwrap() - numeric::ln(2.0)).abs() < 1e-15);
    }

    #[test]
    fn full_gradient_is_mean_of_per_sample_gradients() {
        let obj = SoftmaxLinearObjective::new(12, 3, 4, 21).unwrap();
        let mut stream = rng::stream(21, "theta0.sphere", 1);
        let theta = BlockedVector::new(
            obj.block_spec().clone(),
            rng::standard_normal_vec(&mut stream, obj.block_spec().total_dim()),
        )
        .unwrap();
        let full = obj.gradient(&theta).unwrap();
        let mut mean = alloc::vec![0.0; full.len()];
        for i in 0..obj.num_samples() {
            let gi = obj.per_sample_gradient(&theta, i).unwrap();
            for (m, g) in mean.iter_mut().zip(gi.as_slice()) {
                *m += g / obj.num_samples() as f64;
            }
        }
        let max_diff = full
            .as_slice()
            .iter()
            .zip(&mean)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(max_diff <= 1e-12);
    }

    #[test]
    fn bias_gradient_sums_to_zero_across_classes() {
        let obj = SoftmaxLinearObjective::new(9, 3, 2, 4).unwrap();
        let mut stream = rng::stream(4, "theta0.sphere", 2);
        let theta = BlockedVector::new(
            obj.block_spec().clone(),
            rng::standard_normal_vec(&mut stream, obj.block_spec().total_dim()),
        )
        .unwrap();
        let grad = obj.gradient(&theta).unwrap();
        let bias_sum: f64 = grad.block(1).iter().sum();
        assert!(bias_sum.abs() <= 1e-12);
        assert!(obj.loss(&theta).unwrap() >= 0.0);
    }

    #[test]
    fn sorted_full_subset_reproduces_full_gradient_exactly() {
        let obj = SoftmaxLinearObjective::new(8, 2, 3, 17).unwrap();
        let theta = BlockedVector::new(
            obj.block_spec().clone(),
            (0..obj.block_spec().total_dim())
                .map(|i| 0.1 * i as f64 - 0.3)
                .collect(),
        )
        .unwrap();
        let all: Vec<usize> = (0..8).collect();
        let a = obj.gradient(&theta).unwrap();
        let b = obj.gradient_subset(&theta, &all).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn subset_errors() {
        let obj = SoftmaxLinearObjective::new(4, 2, 2, 3).unwrap();
        let theta = BlockedVector::zeros(obj.block_spec().clone());
        assert!(obj.gradient_subset(&theta, &[]).is_err());
        assert!(obj.gradient_subset(&theta, &[4]).is_err());
        assert!(obj.loss_subset(&theta, &[0, 1]).is_ok());
    }

    #[test]
    fn round_robin_labels_are_balanced() {
        let obj = SoftmaxLinearObjective::new(10, 3, 2, 0).unwrap();
        let counts = obj.labels().iter().fold([0usize; 3], |mut acc, &y| {
            acc[y] += 1;
            acc
        });
        assert_eq!(counts, [4, 3, 3]);
    }
}
