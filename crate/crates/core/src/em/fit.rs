use serde::{Deserialize, Serialize};

use super::bandwidth::{estimate_bandwidth, DEFAULT_PAIR_BUDGET};
use super::density::{estimate_f1, q1_value, NonNullDensity};
use super::optim::{optimize_w, AdamW};
use super::q2::{q2_loss, sample_labels};
use crate::error::{Error, Result};
use crate::meanfield::{
    kernel_positions, run_mean_field, unary_from_posterior, FieldLattices, FieldWeights,
    KernelBandwidths,
};
use crate::seed::{purpose, split_seed};
use crate::stats::two_sided_p;

/// EM hyperparameters. Defaults follow the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Unrolled mean-field iterations.
    pub r: usize,
    /// Monte Carlo label samples per EM iteration.
    pub samples: usize,
    pub max_iterations: usize,
    pub patience: usize,
    /// Optimizer steps per EM iteration.
    pub epochs: usize,
    pub optimizer: AdamW,
    /// Start the smoothness weight at 5 instead of 1.
    pub weak_signal: bool,
    pub pair_budget: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            r: 5,
            samples: 100,
            max_iterations: 25,
            patience: 5,
            epochs: 5,
            optimizer: AdamW::default(),
            weak_signal: false,
            pair_budget: DEFAULT_PAIR_BUDGET,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.r >= 1, "R must be at least 1"),
            (self.samples >= 1, "samples must be at least 1"),
            (
                self.max_iterations >= 1,
                "max EM iterations must be at least 1",
            ),
            (self.patience >= 1, "patience must be at least 1"),
            (self.epochs >= 1, "epochs must be at least 1"),
            (
                self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite(),
                "learning rate must be positive",
            ),
            (
                self.optimizer.weight_decay >= 0.0,
                "weight decay must be nonnegative",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::invalid(*msg)),
            None => Ok(()),
        }
    }

    pub fn initial_weights(&self) -> FieldWeights {
        FieldWeights::new(0.5, 1.0, if self.weak_signal { 5.0 } else { 1.0 })
    }
}

/// Progress record of one EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    /// Completed iterations.
    pub iteration: usize,
    pub weights: FieldWeights,
    pub density: NonNullDensity,
    /// `-Q` after each completed iteration.
    pub loss_history: Vec<f64>,
    pub best_loss: f64,
    /// Iteration (1-based) at which `best_loss` was reached.
    pub best_iteration: usize,
    pub patience_counter: usize,
    pub seed: u64,
}

/// Best-loss parameters with the run that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub weights: FieldWeights,
    pub density: NonNullDensity,
    pub bandwidths: KernelBandwidths,
    pub state: EmState,
}

/// Estimates bandwidths, builds the kernels and runs EM.
pub fn em_fit(
    x: &[f64],
    coords: &[[usize; 3]],
    delta_mu: Option<&[f64]>,
    config: &EmConfig,
) -> Result<EmFit> {
    if coords.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} coordinates", x.len()),
            actual: format!("{}", coords.len()),
        });
    }
    let bw_seed = split_seed(config.seed, purpose::BANDWIDTH, 0);
    let bandwidths = estimate_bandwidth(coords, delta_mu, config.pair_budget, bw_seed)?;
    let positions = kernel_positions(coords, delta_mu, &bandwidths)?;
    let kernels = FieldLattices::build(&positions)?;
    let (weights, density, state) = em_fit_with_kernels(x, &kernels, config)?;
    Ok(EmFit {
        weights,
        density,
        bandwidths,
        state,
    })
}

/// EM on prebuilt kernels.
pub fn em_fit_with_kernels(
    x: &[f64],
    kernels: &FieldLattices,
    config: &EmConfig,
) -> Result<(FieldWeights, NonNullDensity, EmState)> {
    config.validate()?;
    if x.len() != kernels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} statistics", kernels.len()),
            actual: format!("{}", x.len()),
        });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "z statistic",
            index,
        });
    }

    let q_init: Vec<f64> = x.iter().map(|&v| 1.0 - two_sided_p(v)).collect();
    let mut weights = config.initial_weights();
    let mut density = estimate_f1(x, &q_init).map_err(|e| e.at_em_iteration(0))?;
    let mut state = EmState {
        iteration: 0,
        weights,
        density: density.clone(),
        loss_history: Vec::new(),
        best_loss: f64::INFINITY,
        best_iteration: 0,
        patience_counter: 0,
        seed: config.seed,
    };

    for t in 1..=config.max_iterations {
        let mut step = || -> Result<f64> {
            let unary = unary_from_posterior(x, &density, weights.w0)?;
            let q = run_mean_field(&unary, kernels, &weights, config.r)?;
            density = estimate_f1(x, q.q1())?;
            let label_seed = split_seed(config.seed, purpose::LABELS, t as u64);
            let labels = sample_labels(&q, config.samples, label_seed)?;
            weights = optimize_w(
                weights,
                &labels,
                kernels,
                config.r,
                config.epochs,
                &config.optimizer,
            )?;
            let q1 = q1_value(x, q.q1(), &density)?;
            let loss = q2_loss(&weights, &labels, kernels, config.r)? - q1;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: config.epochs,
                });
            }
            Ok(loss)
        };
        let loss = step().map_err(|e| e.at_em_iteration(t))?;
        state.iteration = t;
        state.loss_history.push(loss);
        if loss < state.best_loss {
            state.best_loss = loss;
            state.best_iteration = t;
            state.weights = weights;
            state.density = density.clone();
            state.patience_counter = 0;
        } else {
            state.patience_counter += 1;
            if state.patience_counter >= config.patience {
                break;
            }
        }
    }
    Ok((state.weights, state.density.clone(), state))
}
