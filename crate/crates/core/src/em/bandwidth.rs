use rand::Rng;

use crate::error::{Error, Result};
use crate::meanfield::KernelBandwidths;
use crate::seed;
use crate::stats::mean_sd;

/// Default number of voxel pairs sampled for bandwidth estimation.
pub const DEFAULT_PAIR_BUDGET: usize = 1_000_000;

const CHANNELS: [&str; 4] = ["x", "y", "z", "delta_mu"];

/// Unordered pairs `(i, j)` with `i < j`: all of them when the budget
/// covers every pair, otherwise `budget` uniform draws.
fn sample_pairs(m: usize, budget: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = m * (m - 1) / 2;
    if budget >= total {
        return (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .collect();
    }
    let mut rng = seed::rng(seed);
    (0..budget)
        .map(|_| {
            let a = rng.gen_range(0..m);
            let mut b = rng.gen_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect()
}

/// Kernel bandwidths from the spread of pairwise differences.
///
/// Each theta is the sample SD of the signed differences `v_i - v_j`,
/// `i < j`, over the sampled pairs. Both kernels share the spatial values.
/// Without a mean-difference channel `theta_beta` is 1 and unused.
pub fn estimate_bandwidth(
    coords: &[[usize; 3]],
    delta_mu: Option<&[f64]>,
    pair_budget: usize,
    seed: u64,
) -> Result<KernelBandwidths> {
    let m = coords.len();
    if m < 3 {
        return Err(Error::invalid(format!(
            "bandwidth estimation needs at least 3 voxels (2 distinct pairs), got {m}"
        )));
    }
    if pair_budget < 1000 {
        return Err(Error::invalid(format!(
            "pair budget {pair_budget} below 1000"
        )));
    }
    if let Some(dm) = delta_mu {
        if dm.len() != m {
            return Err(Error::DimensionMismatch {
                expected: format!("{m} mean differences"),
                actual: format!("{}", dm.len()),
            });
        }
    }
    let pairs = sample_pairs(m, pair_budget, seed);
    let sd_of = |channel: usize, value: &dyn Fn(usize) -> f64| -> Result<f64> {
        let deltas: Vec<f64> = pairs.iter().map(|&(i, j)| value(i) - value(j)).collect();
        let (_, sd) = mean_sd(&deltas);
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance {
                channel: CHANNELS[channel].to_string(),
            });
        }
        Ok(sd)
    };
    let mut spatial = [0.0; 3];
    for (axis, theta) in spatial.iter_mut().enumerate() {
        *theta = sd_of(axis, &|i| coords[i][axis] as f64)?;
    }
    let theta_beta = match delta_mu {
        Some(dm) => sd_of(3, &|i| dm[i])?,
        None => 1.0,
    };
    KernelBandwidths::new(spatial, theta_beta, spatial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn line_of_three() {
        let coords = [[0, 0, 0], [1, 1, 1], [2, 3, 2]];
        let bw = estimate_bandwidth(&coords, Some(&[0.0, 1.0, 3.0]), 1000, 0).unwrap();
        // x differences: -1, -2, -1.
        assert_relative_eq!(bw.theta_alpha[0], 0.577_350_269_189_625_8, epsilon = 1e-15);
        assert_eq!(bw.theta_alpha, bw.theta_gamma);
    }

    #[test]
    fn constant_channel_is_named() {
        let coords = [[0, 0, 0], [1, 1, 1], [2, 3, 2]];
        let err = estimate_bandwidth(&coords, Some(&[0.5; 3]), 1000, 0).unwrap_err();
        assert_eq!(err.to_string(), "zero variance in delta_mu channel");
    }

    #[test]
    fn too_few_pairs() {
        assert!(estimate_bandwidth(&[[0, 0, 0], [2, 0, 0]], None, 1000, 0).is_err());
    }

    #[test]
    fn sampled_is_deterministic() {
        let coords: Vec<[usize; 3]> = (0..200).map(|i| [i % 7, i % 11, i % 13]).collect();
        let a = estimate_bandwidth(&coords, None, 1000, 9).unwrap();
        let b = estimate_bandwidth(&coords, None, 1000, 9).unwrap();
        assert_eq!(a, b);
    }
}
