//! Brute-force reference checks on random instances.
//!
//! Each suite returns one [`OracleLine`] per instance; its `Display` form is
//! a single machine-readable line.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::em::{estimate_bandwidth, estimate_f1, DEFAULT_PAIR_BUDGET};
use crate::error::{Error, Result};
use crate::lattice::{exact_gaussian_filter, PermutohedralLattice, PositionMatrix, ValueChannels};
use crate::meanfield::{
    kernel_positions, run_mean_field, FieldKernels, FieldLattices, FieldWeights, UnaryField,
};
use crate::seed::{self, purpose, split_seed};
use crate::stats::two_sided_p;
use crate::testing::{compute_lis, exact_lis_oracle};

pub const FILTER_TOLERANCE: f64 = 0.05;
pub const MEAN_FIELD_TOLERANCE: f64 = 0.02;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
pub const FILTER_INSTANCES: usize = 30;
pub const MEAN_FIELD_INSTANCES: usize = 10;
pub const LIS_INSTANCES: usize = 10;
/// Mean-field iterations used by the oracle suites.
pub const ORACLE_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Filter,
    Meanfield,
    Lis,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Filter => "filter",
            Suite::Meanfield => "meanfield",
            Suite::Lis => "lis",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filter" => Ok(Suite::Filter),
            "meanfield" => Ok(Suite::Meanfield),
            "lis" => Ok(Suite::Lis),
            other => Err(Error::invalid(format!("unknown oracle suite {other:?}"))),
        }
    }
}

/// Result for one instance. `diagnostic` values are reported, not judged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleLine {
    pub suite: Suite,
    pub instance: usize,
    pub m: usize,
    pub d: usize,
    pub metric: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub diagnostic: Option<(&'static str, f64)>,
    pub pass: bool,
}

impl fmt::Display for OracleLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} instance={} m={} d={} {}={:.6e} threshold={:e}",
            self.suite.name(),
            self.instance,
            self.m,
            self.d,
            self.metric,
            self.value,
            self.threshold
        )?;
        if let Some((name, v)) = self.diagnostic {
            write!(f, " {name}={v:.6e}")?;
        }
        write!(f, " {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn instance_rng(seed: u64, suite: Suite, instance: usize) -> ChaCha8Rng {
    let stream = split_seed(seed, purpose::ORACLE, suite as u64);
    seed::rng(split_seed(stream, purpose::ORACLE, instance as u64))
}

/// `|a - b|_2 / |b|_2`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Uniform points in `[0, side]^d` (bandwidth units, side in `[1, 16]`),
/// values in `[0, 1)`.
pub fn filter_instance(seed: u64, instance: usize) -> Result<OracleLine> {
    let mut rng = instance_rng(seed, Suite::Filter, instance);
    let m = rng.gen_range(100..=1000usize);
    let d = if rng.gen_bool(0.5) { 3 } else { 4 };
    let side = rng.gen_range(1.0..=16.0);
    let pos = PositionMatrix::new(d, (0..m * d).map(|_| rng.gen::<f64>() * side).collect())?;
    let values = ValueChannels::single((0..m).map(|_| rng.gen::<f64>()).collect());
    let approx = PermutohedralLattice::build(&pos)?.filter(&values)?;
    let exact = exact_gaussian_filter(&pos, &values)?;
    let err = relative_l2(approx.as_slice(), exact.as_slice());
    Ok(OracleLine {
        suite: Suite::Filter,
        instance,
        m,
        d,
        metric: "rel_l2",
        value: err,
        threshold: FILTER_TOLERANCE,
        diagnostic: Some(("side", side)),
        pass: err <= FILTER_TOLERANCE,
    })
}

/// Random subset of a small cube, a smooth `delta mu` blob, fitted kernel
/// bandwidths, random unaries in `[-2, 2]` and `w1, w2` in `[0, 2]`.
fn random_field(
    rng: &mut ChaCha8Rng,
    side: usize,
    m: usize,
    seed: u64,
) -> Result<(Vec<[usize; 3]>, crate::meanfield::KernelPositions)> {
    let mut all: Vec<[usize; 3]> = (0..side * side * side)
        .map(|i| [i % side, (i / side) % side, i / side / side])
        .collect();
    for i in 0..all.len() {
        let j = rng.gen_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(m.min(all.len()));
    all.sort_by_key(|c| (c[2], c[1], c[0]));
    let c = side as f64 / 2.0;
    let dm: Vec<f64> = all
        .iter()
        .map(|p| {
            let r2 = (p[0] as f64 - c).powi(2) + (p[1] as f64 - c).powi(2);
            -0.5 * (-r2 / 8.0).exp() + rng.gen::<f64>() * 0.05
        })
        .collect();
    let bw = estimate_bandwidth(&all, Some(&dm), DEFAULT_PAIR_BUDGET, seed)?;
    let pos = kernel_positions(&all, Some(&dm), &bw)?;
    Ok((all, pos))
}

pub fn mean_field_instance(seed: u64, instance: usize) -> Result<OracleLine> {
    let mut rng = instance_rng(seed, Suite::Meanfield, instance);
    let side = rng.gen_range(6..=10usize);
    let target = rng.gen_range(100..=500usize);
    let (coords, pos) = random_field(&mut rng, side, target, seed ^ instance as u64)?;
    let m = coords.len();
    let unary = UnaryField::new((0..m).map(|_| rng.gen_range(-2.0..=2.0)).collect())?;
    let w = FieldWeights::new(0.0, rng.gen_range(0.0..=2.0), rng.gen_range(0.0..=2.0));
    let lattice = run_mean_field(&unary, &FieldLattices::build(&pos)?, &w, ORACLE_ITERATIONS)?;
    let dense = run_mean_field(&unary, &FieldKernels::dense(&pos), &w, ORACLE_ITERATIONS)?;
    let gap = max_abs_gap(lattice.q1(), dense.q1());
    Ok(OracleLine {
        suite: Suite::Meanfield,
        instance,
        m,
        d: 4,
        metric: "max_abs_gap",
        value: gap,
        threshold: MEAN_FIELD_TOLERANCE,
        diagnostic: None,
        pass: gap <= MEAN_FIELD_TOLERANCE,
    })
}

/// Exact enumeration on `m <= 12`. Judged on marginal normalization; the
/// mean-field LIS gap is informational.
pub fn lis_instance(seed: u64, instance: usize) -> Result<OracleLine> {
    let mut rng = instance_rng(seed, Suite::Lis, instance);
    let m = rng.gen_range(4..=12usize);
    let (coords, pos) = random_field(&mut rng, 3, m, seed ^ instance as u64)?;
    let m = coords.len();
    let x: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if rng.gen_bool(0.4) {
                z - 2.5
            } else {
                z
            }
        })
        .collect();
    let q1: Vec<f64> = x.iter().map(|&v| 1.0 - two_sided_p(v)).collect();
    let f1 = estimate_f1(&x, &q1)?;
    let w = FieldWeights::new(
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(0.0..=2.0),
        rng.gen_range(0.0..=2.0),
    );
    let dense = FieldKernels::dense(&pos);
    let exact = exact_lis_oracle(&x, &dense, &w, &f1)?;
    let approx = compute_lis(&x, &dense, &w, &f1, ORACLE_ITERATIONS)?;
    let gap = max_abs_gap(approx.values(), &exact.p0);
    let err = exact.normalization_error();
    Ok(OracleLine {
        suite: Suite::Lis,
        instance,
        m,
        d: 4,
        metric: "normalization_error",
        value: err,
        threshold: NORMALIZATION_TOLERANCE,
        diagnostic: Some(("lis_gap", gap)),
        pass: err <= NORMALIZATION_TOLERANCE,
    })
}

type InstanceFn = fn(u64, usize) -> Result<OracleLine>;

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<OracleLine>> {
    let (count, f): (usize, InstanceFn) = match suite {
        Suite::Filter => (FILTER_INSTANCES, filter_instance),
        Suite::Meanfield => (MEAN_FIELD_INSTANCES, mean_field_instance),
        Suite::Lis => (LIS_INSTANCES, lis_instance),
    };
    (0..count).map(|i| f(seed, i)).collect()
}
