//! Normal and Student-t helpers shared by the density, testing and
//! simulation code.

use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Below this the linear-domain tails lose precision and log-space takes over.
const TINY: f64 = 1e-280;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn ln_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `ln P(Z > x)`, finite for all finite `x`.
pub fn ln_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return normal_sf(x).ln();
    }
    // Asymptotic Mills-ratio series.
    let z2 = x * x;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - x.ln() - LN_SQRT_2PI + series.ln()
}

/// Two-sided p-value `2 P(Z > |x|)`.
pub fn two_sided_p(x: f64) -> f64 {
    (2.0 * normal_sf(x.abs())).min(1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `z > 0` with `ln P(Z > z) = ln_p`, for `ln_p < ln(1/2)`.
fn upper_quantile_from_ln(ln_p: f64) -> f64 {
    if ln_p > TINY.ln() {
        return -normal_quantile(ln_p.exp());
    }
    let mut z = (-2.0 * ln_p).sqrt();
    for _ in 0..50 {
        // d/dz ln sf(z) = -pdf/sf, roughly -z in this range.
        let f = ln_normal_sf(z) - ln_p;
        let slope = -(z + 1.0 / z);
        let step = f / slope;
        z -= step;
        if step.abs() < 1e-14 * z {
            break;
        }
    }
    z
}

/// `ln P(T > t)` for `t >= 0` under Student's t with `nu` degrees of freedom.
fn ln_t_sf(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    let (a, b) = (0.5 * nu, 0.5);
    let sf = 0.5 * beta_reg(a, b, x);
    if sf > TINY {
        return sf.ln();
    }
    // I_x(a, b) = x^a (1-x)^b / (a B(a, b)) * 2F1(a+b, 1; a+1; x), in logs.
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..10_000 {
        let n = n as f64;
        term *= (a + b + n) / (a + 1.0 + n) * x;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    let one_minus_x = t * t / (nu + t * t);
    -std::f64::consts::LN_2 + a * x.ln() + b * one_minus_x.ln() - a.ln() - ln_beta(a, b) + sum.ln()
}

/// Converts t statistics to z statistics with equal tail probability,
/// `z = Phi^-1(F_t(t; nu))`.
pub fn t_to_z(t_values: &[f64], nu: f64) -> Result<Vec<f64>> {
    if !(nu.is_finite() && nu >= 1.0) {
        return Err(Error::invalid(format!(
            "degrees of freedom must be >= 1, got {nu}"
        )));
    }
    t_values
        .iter()
        .enumerate()
        .map(|(index, &t)| {
            if !t.is_finite() {
                return Err(Error::NonFinite {
                    what: "t statistic",
                    index,
                });
            }
            if t == 0.0 {
                return Ok(0.0);
            }
            let z = upper_quantile_from_ln(ln_t_sf(t.abs(), nu));
            Ok(z.copysign(t))
        })
        .collect()
}

/// Sample mean and SD (`n - 1` denominator; 0 when `n < 2`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Linear-interpolated quantile of sorted data (type 7).
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
