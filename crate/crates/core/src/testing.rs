//! Step-up testing on local indices of significance, the BH baseline and
//! the exact small-instance oracle.

use serde::{Deserialize, Serialize};

use crate::em::NonNullDensity;
use crate::error::{Error, Result};
use crate::meanfield::{
    run_mean_field, unary_from_posterior, DenseKernel, FieldKernels, FieldWeights, MessageKernel,
};

/// Largest instance the exact oracle will enumerate.
pub const EXACT_LIMIT: usize = 15;

/// Per-voxel posterior null probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LisVolume {
    values: Vec<f64>,
}

impl LisVolume {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "LIS value {} at index {index} outside [0, 1]",
                values[index]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of a step-up procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub alpha: f64,
    /// Number of rejections.
    pub k: usize,
    pub rejected: Vec<bool>,
    /// Running statistic over the sorted sequence, compared against `alpha`:
    /// the running mean of sorted LIS values, or `m p_(j) / j` for BH.
    pub sorted_running_mean: Vec<f64>,
}

impl TestOutcome {
    pub fn rejections(&self) -> usize {
        self.k
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Ascending order, ties broken by index.
fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn step_up(alpha: f64, order: &[usize], running: Vec<f64>) -> TestOutcome {
    let k = running
        .iter()
        .rposition(|&s| s <= alpha)
        .map_or(0, |j| j + 1);
    let mut rejected = vec![false; order.len()];
    for &i in &order[..k] {
        rejected[i] = true;
    }
    TestOutcome {
        alpha,
        k,
        rejected,
        sorted_running_mean: running,
    }
}

/// Rejects the largest prefix of ascending LIS values whose mean is at most
/// `alpha`.
pub fn lis_test(lis: &LisVolume, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let order = sorted_order(&lis.values);
    let mut sum = 0.0;
    let running = order
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            sum += lis.values[i];
            sum / (j + 1) as f64
        })
        .collect();
    Ok(step_up(alpha, &order, running))
}

/// Benjamini-Hochberg step-up on p-values.
pub fn bh_test(pvalues: &[f64], alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if let Some(index) = pvalues.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid(format!(
            "p-value {} at index {index} outside [0, 1]",
            pvalues[index]
        )));
    }
    let m = pvalues.len() as f64;
    let order = sorted_order(pvalues);
    let running = order
        .iter()
        .enumerate()
        .map(|(j, &i)| pvalues[i] * m / (j + 1) as f64)
        .collect();
    Ok(step_up(alpha, &order, running))
}

/// `LIS_i = 1 - q_i` from the posterior mean field.
pub fn compute_lis<K: MessageKernel>(
    x: &[f64],
    kernels: &FieldKernels<K>,
    weights: &FieldWeights,
    f1: &NonNullDensity,
    r: usize,
) -> Result<LisVolume> {
    let unary = unary_from_posterior(x, f1, weights.w0)?;
    let q = run_mean_field(&unary, kernels, weights, r)?;
    LisVolume::new(q.q1().iter().map(|p| 1.0 - p).collect())
}

/// Exact marginals of the posterior field by enumerating all `2^m` states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMarginals {
    /// `p(h_i = 0 | x)`.
    pub p0: Vec<f64>,
    /// `p(h_i = 1 | x)`, accumulated separately as a self-check.
    pub p1: Vec<f64>,
}

impl ExactMarginals {
    pub fn lis(&self) -> Result<LisVolume> {
        LisVolume::new(self.p0.iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    /// `max_i |p0_i + p1_i - 1|`.
    pub fn normalization_error(&self) -> f64 {
        self.p0
            .iter()
            .zip(&self.p1)
            .map(|(a, b)| (a + b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Exact posterior marginals under the same energy the mean field
/// approximates, with dense symmetric-normalized couplings.
pub fn exact_lis_oracle(
    x: &[f64],
    kernels: &FieldKernels<DenseKernel>,
    weights: &FieldWeights,
    f1: &NonNullDensity,
) -> Result<ExactMarginals> {
    let m = x.len();
    if m > EXACT_LIMIT {
        return Err(Error::TooLarge {
            m,
            limit: EXACT_LIMIT,
        });
    }
    if kernels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} voxels"),
            actual: format!("{}", kernels.len()),
        });
    }
    let unary = unary_from_posterior(x, f1, weights.w0)?;
    let mut coupling = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let app = kernels
                .appearance
                .as_ref()
                .map_or(0.0, |k| k.coupling(i, j));
            coupling[i * m + j] = weights.w1 * app + weights.w2 * kernels.smoothness.coupling(i, j);
        }
    }
    let states = 1usize << m;
    let log_weight: Vec<f64> = (0..states)
        .map(|s| {
            let mut e = 0.0;
            for i in 0..m {
                let hi = (s >> i) & 1;
                if hi == 1 {
                    e += unary.u1()[i];
                }
                for j in i + 1..m {
                    if hi != (s >> j) & 1 {
                        e -= coupling[i * m + j];
                    }
                }
            }
            e
        })
        .collect();
    let max = log_weight.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight: Vec<f64> = log_weight.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weight.iter().sum();
    let mut p0 = vec![0.0; m];
    let mut p1 = vec![0.0; m];
    for (s, w) in weight.iter().enumerate() {
        for i in 0..m {
            if (s >> i) & 1 == 1 {
                p1[i] += w;
            } else {
                p0[i] += w;
            }
        }
    }
    Ok(ExactMarginals {
        p0: p0.into_iter().map(|v| v / total).collect(),
        p1: p1.into_iter().map(|v| v / total).collect(),
    })
}
