//! Bandwidths, kernels, EM, LIS and the step-up test in one call.

use crate::em::{em_fit_with_kernels, estimate_bandwidth, EmConfig, EmState, NonNullDensity};
use crate::error::Result;
use crate::meanfield::{kernel_positions, FieldLattices, FieldWeights, KernelBandwidths};
use crate::seed::{purpose, split_seed};
use crate::testing::{compute_lis, lis_test, LisVolume, TestOutcome};

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub bandwidths: KernelBandwidths,
    pub weights: FieldWeights,
    pub density: NonNullDensity,
    pub state: EmState,
    pub lis: LisVolume,
    pub outcome: TestOutcome,
}

pub fn run_pipeline(
    x: &[f64],
    coords: &[[usize; 3]],
    delta_mu: Option<&[f64]>,
    config: &EmConfig,
    alpha: f64,
) -> Result<PipelineResult> {
    let bw_seed = split_seed(config.seed, purpose::BANDWIDTH, 0);
    let bandwidths = estimate_bandwidth(coords, delta_mu, config.pair_budget, bw_seed)?;
    let kernels = FieldLattices::build(&kernel_positions(coords, delta_mu, &bandwidths)?)?;
    let (weights, density, state) = em_fit_with_kernels(x, &kernels, config)?;
    let lis = compute_lis(x, &kernels, &weights, &density, config.r)?;
    let outcome = lis_test(&lis, alpha)?;
    Ok(PipelineResult {
        bandwidths,
        weights,
        density,
        state,
        lis,
        outcome,
    })
}
