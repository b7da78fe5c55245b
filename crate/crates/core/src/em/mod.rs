//! Mean-field EM for the non-null density and the field weights.

mod bandwidth;
mod density;
mod fit;
mod optim;
mod q2;

pub use bandwidth::{estimate_bandwidth, DEFAULT_PAIR_BUDGET};
pub use density::{
    effective_sample_size, estimate_f1, q1_value, rule_of_thumb_bandwidth, NonNullDensity,
};
pub use fit::{em_fit, em_fit_with_kernels, EmConfig, EmFit, EmState};
pub use optim::{optimize_w, project, AdamState, AdamW};
pub use q2::{
    fd_step, q2_gradient, q2_gradient_scaled, q2_loss, sample_labels, MonteCarloLabels,
    MARGINAL_FLOOR,
};
