use rand::Rng;

use crate::error::{Error, Result};
use crate::meanfield::{
    run_mean_field, unary_prior, FieldKernels, FieldWeights, MarginalField, MessageKernel,
};
use crate::seed;

/// Floor applied to prior marginals before taking logs.
pub const MARGINAL_FLOOR: f64 = 1e-12;

/// `N x m` Bernoulli label draws, row-major by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloLabels {
    samples: usize,
    voxels: usize,
    labels: Vec<u8>,
}

impl MonteCarloLabels {
    pub fn new(samples: usize, voxels: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != samples * voxels {
            return Err(Error::DimensionMismatch {
                expected: format!("{samples} x {voxels} labels"),
                actual: format!("{}", labels.len()),
            });
        }
        if labels.iter().any(|&h| h > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(Self {
            samples,
            voxels,
            labels,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn voxels(&self) -> usize {
        self.voxels
    }

    pub fn sample(&self, n: usize) -> &[u8] {
        &self.labels[n * self.voxels..(n + 1) * self.voxels]
    }

    /// Number of draws with `h_i = 1`, per voxel.
    pub fn ones_per_voxel(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.voxels];
        for n in 0..self.samples {
            for (c, &h) in counts.iter_mut().zip(self.sample(n)) {
                *c += h as u32;
            }
        }
        counts
    }
}

pub fn sample_labels(q: &MarginalField, samples: usize, seed: u64) -> Result<MonteCarloLabels> {
    if samples == 0 {
        return Err(Error::invalid("need at least one Monte Carlo sample"));
    }
    let mut rng = seed::rng(seed);
    let m = q.len();
    let mut labels = Vec::with_capacity(samples * m);
    for _ in 0..samples {
        labels.extend(q.q1().iter().map(|&p| u8::from(rng.gen::<f64>() < p)));
    }
    MonteCarloLabels::new(samples, m, labels)
}

/// Monte Carlo negative expected log prior,
/// `-(1/N) sum_n sum_i ln q_i(h_i^(n); w)`, with `q` the prior-field marginals.
pub fn q2_loss<K: MessageKernel>(
    weights: &FieldWeights,
    labels: &MonteCarloLabels,
    kernels: &FieldKernels<K>,
    r: usize,
) -> Result<f64> {
    let ones = labels.ones_per_voxel();
    q2_loss_counts(weights, &ones, labels.samples(), kernels, r)
}

fn q2_loss_counts<K: MessageKernel>(
    weights: &FieldWeights,
    ones: &[u32],
    samples: usize,
    kernels: &FieldKernels<K>,
    r: usize,
) -> Result<f64> {
    let m = ones.len();
    if kernels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} voxels"),
            actual: format!("{}", kernels.len()),
        });
    }
    let q = run_mean_field(&unary_prior(weights.w0, m)?, kernels, weights, r)?;
    let n = samples as f64;
    let total: f64 = q
        .q1()
        .iter()
        .zip(ones)
        .map(|(&p, &c)| {
            let c = c as f64;
            c * p.max(MARGINAL_FLOOR).ln() + (n - c) * (1.0 - p).max(MARGINAL_FLOOR).ln()
        })
        .sum();
    Ok(-total / n)
}

/// Finite-difference step for coordinate value `w`.
pub fn fd_step(w: f64) -> f64 {
    (1e-4 * w.abs()).max(1e-5)
}

/// Central-difference gradient of [`q2_loss`]; `step_scale` multiplies the
/// default per-coordinate step.
pub fn q2_gradient_scaled<K: MessageKernel>(
    weights: &FieldWeights,
    labels: &MonteCarloLabels,
    kernels: &FieldKernels<K>,
    r: usize,
    step_scale: f64,
) -> Result<[f64; 3]> {
    let ones = labels.ones_per_voxel();
    let base = weights.to_array();
    let mut grad = [0.0; 3];
    for k in 0..3 {
        let h = fd_step(base[k]) * step_scale;
        let mut plus = base;
        let mut minus = base;
        plus[k] += h;
        minus[k] -= h;
        let fp = q2_loss_counts(
            &FieldWeights::from_array(plus),
            &ones,
            labels.samples(),
            kernels,
            r,
        )?;
        let fm = q2_loss_counts(
            &FieldWeights::from_array(minus),
            &ones,
            labels.samples(),
            kernels,
            r,
        )?;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

pub fn q2_gradient<K: MessageKernel>(
    weights: &FieldWeights,
    labels: &MonteCarloLabels,
    kernels: &FieldKernels<K>,
    r: usize,
) -> Result<[f64; 3]> {
    q2_gradient_scaled(weights, labels, kernels, r, 1.0)
}
