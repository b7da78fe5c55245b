use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ln_normal_pdf, mean_sd, normal_pdf, sorted_quantile};

/// Above this many centers, evaluation goes through a linearly binned
/// approximation instead of the exact `O(m)` sum per point.
const EXACT_LIMIT: usize = 20_000;
const BINS: usize = 4096;

/// Weighted Gaussian kernel density estimate of the non-null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonNullDensity {
    centers: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl NonNullDensity {
    /// Normalizes `weights` to sum to 1.
    pub fn new(centers: Vec<f64>, weights: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} weights", centers.len()),
                actual: format!("{}", weights.len()),
            });
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::ZeroBandwidth);
        }
        if let Some(index) = centers.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "density center",
                index,
            });
        }
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::NonFinite {
                what: "density weight",
                index,
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeights);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            centers,
            weights,
            bandwidth,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Exact density at one point.
    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * normal_pdf((x - c) / h))
            .sum::<f64>()
            / h
    }

    /// Density at many points. Exact for small inputs, binned otherwise.
    pub fn evaluate_many(&self, xs: &[f64]) -> Vec<f64> {
        if self.centers.len() <= EXACT_LIMIT {
            return xs.par_iter().map(|&x| self.evaluate(x)).collect();
        }
        let (lo, step, mass) = self.binned();
        let h = self.bandwidth;
        xs.par_iter()
            .map(|&x| {
                mass.iter()
                    .enumerate()
                    .filter(|(_, m)| **m > 0.0)
                    .map(|(k, m)| m * normal_pdf((x - (lo + k as f64 * step)) / h))
                    .sum::<f64>()
                    / h
            })
            .collect()
    }

    /// Linear binning of the weighted centers onto a regular grid.
    fn binned(&self) -> (f64, f64, Vec<f64>) {
        let lo = self.centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .centers
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let step = ((hi - lo) / (BINS - 1) as f64).max(f64::MIN_POSITIVE);
        let mut mass = vec![0.0; BINS];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let pos = ((c - lo) / step).min((BINS - 1) as f64);
            let k = (pos.floor() as usize).min(BINS - 2);
            let frac = pos - k as f64;
            mass[k] += w * (1.0 - frac);
            mass[k + 1] += w * frac;
        }
        (lo, step, mass)
    }

    /// Trapezoidal integral over `[min center - 8h, max center + 8h]`.
    pub fn integral(&self) -> f64 {
        let lo = self.centers.iter().copied().fold(f64::INFINITY, f64::min) - 8.0 * self.bandwidth;
        let hi = self
            .centers
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            + 8.0 * self.bandwidth;
        let n = (((hi - lo) / (self.bandwidth / 20.0)).ceil() as usize).clamp(200, 20_000);
        let dx = (hi - lo) / n as f64;
        let grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * dx).collect();
        let f = self.evaluate_many(&grid);
        dx * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n]))
    }
}

/// Kish effective sample size `(sum q)^2 / sum q^2`.
pub fn effective_sample_size(q: &[f64]) -> f64 {
    let s: f64 = q.iter().sum();
    let s2: f64 = q.iter().map(|v| v * v).sum();
    s * s / s2
}

/// Rule-of-thumb bandwidth `0.9 min(SD, IQR/1.34) m_eff^(-1/5)`.
pub fn rule_of_thumb_bandwidth(x: &[f64], m_eff: f64) -> f64 {
    let (_, sd) = mean_sd(x);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * m_eff.powf(-0.2)
}

/// Weighted KDE of the statistics with weights proportional to `q1`.
pub fn estimate_f1(x: &[f64], q1: &[f64]) -> Result<NonNullDensity> {
    if x.len() != q1.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} weights", x.len()),
            actual: format!("{}", q1.len()),
        });
    }
    if q1.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let h = rule_of_thumb_bandwidth(x, effective_sample_size(q1));
    if !(h > 0.0) {
        return Err(Error::ZeroBandwidth);
    }
    NonNullDensity::new(x.to_vec(), q1.to_vec(), h)
}

/// `sum_i [q_i ln f1(x_i) + (1 - q_i) ln phi(x_i)]`.
pub fn q1_value(x: &[f64], q: &[f64], f1: &NonNullDensity) -> Result<f64> {
    let f = f1.evaluate_many(x);
    let mut total = 0.0;
    for (i, ((&xi, &qi), &fi)) in x.iter().zip(q).zip(&f).enumerate() {
        let null = (1.0 - qi) * ln_normal_pdf(xi);
        if qi > 0.0 {
            if !(fi > 0.0) {
                return Err(Error::DegenerateDensity { index: i, x: xi });
            }
            total += qi * fi.ln() + null;
        } else {
            total += null;
        }
    }
    Ok(total)
}
