//! Synthetic volumes and replicated end-to-end runs.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::io::read_volume;
use crate::pipeline::run_pipeline;
use crate::seed::{self, purpose, split_seed};
use crate::stats::{mean_sd, two_sided_p};
use crate::testing::{bh_test, TestOutcome};
use crate::volume::{voxel_coordinates, GridDims, LabelVolume, Mask, ScalarVolume};

/// Blob attempts before giving up on a target proportion.
pub const MAX_BLOB_ATTEMPTS: usize = 1000;
/// Allowed distance from the target proportion.
pub const PROPORTION_TOLERANCE: f64 = 0.02;
/// Amplitude of the synthetic mean-difference signal.
pub const DELTA_MU_AMPLITUDE: f64 = -0.5;
pub const DELTA_MU_SMOOTHING_SD: f64 = 2.0;
pub const DELTA_MU_NOISE_SD: f64 = 0.05;

/// Where each replication's mean-difference map comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMuSource {
    /// Generated from the replication's mask by [`generate_delta_mu`].
    SignalCorrelated,
    /// One fixed volume file shared by all replications.
    External(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dims: GridDims,
    pub target_signal_proportion: f64,
    pub mu1: f64,
    pub sigma1_sq: f64,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Every voxel null; no mask is generated.
    pub all_null: bool,
    /// Reuse the first replication's mask in every replication.
    pub fixed_mask: bool,
    pub delta_mu: DeltaMuSource,
    /// EM settings; the seed is replaced per replication.
    pub em: EmConfig,
}

impl SimConfig {
    pub fn new(dims: GridDims, target_signal_proportion: f64, mu1: f64, sigma1_sq: f64) -> Self {
        Self {
            dims,
            target_signal_proportion,
            mu1,
            sigma1_sq,
            alpha: 0.1,
            replications: 1,
            seed: 0,
            all_null: false,
            fixed_mask: false,
            delta_mu: DeltaMuSource::SignalCorrelated,
            em: EmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1_sq > 0.0 && self.sigma1_sq.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma1^2 must be positive, got {}",
                self.sigma1_sq
            )));
        }
        if !self.mu1.is_finite() {
            return Err(Error::invalid("mu1 must be finite"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !self.all_null
            && !(self.target_signal_proportion > 0.01 && self.target_signal_proportion < 0.9)
        {
            return Err(Error::invalid(format!(
                "signal proportion must lie in (0.01, 0.9), got {}",
                self.target_signal_proportion
            )));
        }
        self.em.validate()
    }
}

/// Confusion counts and error proportions. `N10` counts false rejections,
/// `N01` missed signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n00: usize,
    pub n10: usize,
    pub n01: usize,
    pub n11: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: Counts,
    pub n0: usize,
    pub n1: usize,
    pub m0: usize,
    pub m1: usize,
    pub fdp: f64,
    pub fnp: f64,
    pub tp: usize,
}

pub fn score(truth: &LabelVolume, outcome: &TestOutcome) -> Result<Metrics> {
    score_labels(truth.labels(), &outcome.rejected)
}

pub fn score_labels(truth: &[u8], rejected: &[bool]) -> Result<Metrics> {
    if truth.len() != rejected.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", rejected.len()),
            actual: format!("{}", truth.len()),
        });
    }
    let mut c = Counts {
        n00: 0,
        n10: 0,
        n01: 0,
        n11: 0,
    };
    for (&h, &r) in truth.iter().zip(rejected) {
        match (h, r) {
            (0, false) => c.n00 += 1,
            (0, true) => c.n10 += 1,
            (_, false) => c.n01 += 1,
            (_, true) => c.n11 += 1,
        }
    }
    let n1 = c.n10 + c.n11;
    let n0 = c.n00 + c.n01;
    Ok(Metrics {
        counts: c,
        n0,
        n1,
        m0: c.n00 + c.n10,
        m1: c.n01 + c.n11,
        fdp: c.n10 as f64 / n1.max(1) as f64,
        fnp: c.n01 as f64 / n0.max(1) as f64,
        tp: c.n11,
    })
}

/// Clears signal voxels with no signal among their six face neighbours.
fn remove_isolated(dims: GridDims, labels: &mut [u8]) {
    let keep: Vec<bool> = (0..labels.len())
        .map(|i| {
            if labels[i] == 0 {
                return false;
            }
            let [x, y, z] = dims.coords(i);
            let neighbours = [
                (x > 0).then(|| dims.index(x - 1, y, z)),
                (x + 1 < dims.nx).then(|| dims.index(x + 1, y, z)),
                (y > 0).then(|| dims.index(x, y - 1, z)),
                (y + 1 < dims.ny).then(|| dims.index(x, y + 1, z)),
                (z > 0).then(|| dims.index(x, y, z - 1)),
                (z + 1 < dims.nz).then(|| dims.index(x, y, z + 1)),
            ];
            neighbours.iter().flatten().any(|&j| labels[j] == 1)
        })
        .collect();
    for (l, k) in labels.iter_mut().zip(keep) {
        *l = u8::from(k);
    }
}

/// Union of random axis-aligned ellipsoids with semi-axes in `[2, 6]`,
/// accepted one at a time while the cleaned proportion stays below
/// `target + 0.02`, until it reaches `target - 0.02`.
pub fn generate_signal_mask(dims: GridDims, target: f64, seed: u64) -> Result<LabelVolume> {
    if !(target > 0.01 && target < 0.9) {
        return Err(Error::invalid(format!(
            "signal proportion must lie in (0.01, 0.9), got {target}"
        )));
    }
    let mut rng = seed::rng(seed);
    let m = dims.len() as f64;
    let mut labels = vec![0u8; dims.len()];
    let mut reached = 0.0;
    for _ in 0..MAX_BLOB_ATTEMPTS {
        let center = [
            rng.gen_range(0.0..dims.nx as f64),
            rng.gen_range(0.0..dims.ny as f64),
            rng.gen_range(0.0..dims.nz as f64),
        ];
        let axes: [f64; 3] = [
            rng.gen_range(2.0..=6.0),
            rng.gen_range(2.0..=6.0),
            rng.gen_range(2.0..=6.0),
        ];
        let mut candidate = labels.clone();
        for (i, l) in candidate.iter_mut().enumerate() {
            let c = dims.coords(i);
            let r: f64 = (0..3)
                .map(|a| ((c[a] as f64 - center[a]) / axes[a]).powi(2))
                .sum();
            if r <= 1.0 {
                *l = 1;
            }
        }
        remove_isolated(dims, &mut candidate);
        let p = candidate.iter().filter(|&&l| l == 1).count() as f64 / m;
        if p > target + PROPORTION_TOLERANCE {
            continue;
        }
        labels = candidate;
        reached = p;
        if p >= target - PROPORTION_TOLERANCE {
            return LabelVolume::new(dims, labels);
        }
    }
    Err(Error::UnreachableProportion {
        target,
        reached,
        attempts: MAX_BLOB_ATTEMPTS,
    })
}

/// Nulls `N(0, 1)`; signals from `0.5 N(mu1, sigma1^2) + 0.5 N(2, 1)`.
pub fn generate_statistics(
    h: &LabelVolume,
    mu1: f64,
    sigma1_sq: f64,
    seed: u64,
) -> Result<ScalarVolume> {
    let alt = Normal::new(mu1, sigma1_sq.sqrt())
        .map_err(|e| Error::invalid(format!("signal component: {e}")))?;
    let mut rng = seed::rng(seed);
    let values = h
        .labels()
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if l == 0 {
                z
            } else if rng.gen_bool(0.5) {
                alt.sample(&mut rng)
            } else {
                2.0 + z
            }
        })
        .collect();
    ScalarVolume::new(h.dims(), values)
}

/// Normalized Gaussian taps out to four SDs.
fn gaussian_taps(sd: f64) -> Vec<f64> {
    let radius = (4.0 * sd).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sd).powi(2)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable convolution with zero padding outside the grid.
fn smooth(dims: GridDims, values: &[f64], sd: f64) -> Vec<f64> {
    let taps = gaussian_taps(sd);
    let radius = (taps.len() / 2) as i64;
    let sizes = [dims.nx, dims.ny, dims.nz];
    let mut cur = values.to_vec();
    for axis in 0..3 {
        let next: Vec<f64> = (0..cur.len())
            .into_par_iter()
            .map(|i| {
                let c = dims.coords(i);
                let mut acc = 0.0;
                for (t, w) in taps.iter().enumerate() {
                    let p = c[axis] as i64 + t as i64 - radius;
                    if p < 0 || p >= sizes[axis] as i64 {
                        continue;
                    }
                    let mut q = c;
                    q[axis] = p as usize;
                    acc += w * cur[dims.index(q[0], q[1], q[2])];
                }
                acc
            })
            .collect();
        cur = next;
    }
    cur
}

/// `-0.5 1[h]` smoothed with a 2-voxel Gaussian plus `N(0, 0.05^2)` noise.
pub fn generate_delta_mu(h: &LabelVolume, seed: u64) -> Result<ScalarVolume> {
    let dims = h.dims();
    let base: Vec<f64> = h
        .labels()
        .iter()
        .map(|&l| DELTA_MU_AMPLITUDE * l as f64)
        .collect();
    let smoothed = smooth(dims, &base, DELTA_MU_SMOOTHING_SD);
    let mut rng = seed::rng(seed);
    let values = smoothed
        .into_iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + DELTA_MU_NOISE_SD * z
        })
        .collect();
    ScalarVolume::new(dims, values)
}

/// One scored replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub signal_proportion: f64,
    pub lis: Metrics,
    pub bh: Metrics,
    pub em_iterations: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let (mean, sd) = mean_sd(&v);
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub fdp: MeanSd,
    pub fnp: MeanSd,
    pub tp: MeanSd,
    pub rejections: MeanSd,
}

impl MethodSummary {
    fn of(metrics: &[Metrics]) -> Self {
        Self {
            fdp: MeanSd::of(metrics.iter().map(|m| m.fdp)),
            fnp: MeanSd::of(metrics.iter().map(|m| m.fnp)),
            tp: MeanSd::of(metrics.iter().map(|m| m.tp as f64)),
            rejections: MeanSd::of(metrics.iter().map(|m| m.n1 as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub records: Vec<ReplicationRecord>,
    pub lis: MethodSummary,
    pub bh: MethodSummary,
    /// False with a single replication, where SDs are reported as 0.
    pub sd_defined: bool,
}

/// Seeds for one replication, all split from the master seed.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationSeeds {
    pub mask: u64,
    pub statistics: u64,
    pub delta_mu: u64,
    pub em: u64,
}

impl ReplicationSeeds {
    pub fn new(master: u64, replication: usize) -> Self {
        let rep = split_seed(master, purpose::REPLICATION, replication as u64);
        Self {
            mask: split_seed(rep, purpose::MASK, 0),
            statistics: split_seed(rep, purpose::STATISTICS, 0),
            delta_mu: split_seed(rep, purpose::DELTA_MU, 0),
            em: split_seed(rep, purpose::EM, 0),
        }
    }
}

fn run_one(
    config: &SimConfig,
    replication: usize,
    coords: &[[usize; 3]],
    external: Option<&ScalarVolume>,
) -> Result<ReplicationRecord> {
    let start = Instant::now();
    let seeds = ReplicationSeeds::new(config.seed, replication);
    let truth = if config.all_null {
        LabelVolume::zeros(config.dims)
    } else {
        let mask_seed = if config.fixed_mask {
            ReplicationSeeds::new(config.seed, 0).mask
        } else {
            seeds.mask
        };
        generate_signal_mask(config.dims, config.target_signal_proportion, mask_seed)?
    };
    let x = generate_statistics(&truth, config.mu1, config.sigma1_sq, seeds.statistics)?;
    let dm = match external {
        Some(v) => v.clone(),
        None => generate_delta_mu(&truth, seeds.delta_mu)?,
    };
    let em = EmConfig {
        seed: seeds.em,
        ..config.em.clone()
    };
    let result = run_pipeline(x.values(), coords, Some(dm.values()), &em, config.alpha)?;
    let lis = score(&truth, &result.outcome)?;
    let p: Vec<f64> = x.values().iter().map(|&v| two_sided_p(v)).collect();
    let bh = score(&truth, &bh_test(&p, config.alpha)?)?;
    Ok(ReplicationRecord {
        replication,
        signal_proportion: truth.proportion(),
        lis,
        bh,
        em_iterations: result.state.iteration,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs every replication (in parallel, each seed-isolated) and summarizes
/// in replication order.
pub fn run_replications(config: &SimConfig) -> Result<ReplicationSummary> {
    config.validate()?;
    let coords = voxel_coordinates(&Mask::full(config.dims))?;
    let external = match &config.delta_mu {
        DeltaMuSource::SignalCorrelated => None,
        DeltaMuSource::External(path) => {
            let (v, _) = read_volume(path)?;
            if v.dims() != config.dims {
                return Err(Error::DimensionMismatch {
                    expected: format!("delta-mu dims {}", config.dims),
                    actual: v.dims().to_string(),
                });
            }
            v.check_finite(&Mask::full(config.dims), "delta-mu")?;
            Some(v)
        }
    };
    let records = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            run_one(config, r, &coords, external.as_ref()).map_err(|e| Error::Replication {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lis: Vec<Metrics> = records.iter().map(|r| r.lis).collect();
    let bh: Vec<Metrics> = records.iter().map(|r| r.bh).collect();
    Ok(ReplicationSummary {
        lis: MethodSummary::of(&lis),
        bh: MethodSummary::of(&bh),
        sd_defined: records.len() > 1,
        records,
    })
}
