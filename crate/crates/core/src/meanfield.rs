//! The fully connected binary field and its parallel mean-field updates.
//!
//! Each kernel enters through symmetric-normalized couplings
//! `c_ij = k_ij / sqrt(D_i D_j)` with `D_i = sum_j k_ij`. The normalization
//! keeps the pairwise term on the scale of the unary term whatever the
//! bandwidth and voxel density, so `w1`, `w2` stay interpretable, and the
//! couplings remain symmetric so the field is a proper Gibbs distribution
//! with energy `-sum_i U_i(h_i) + sum_{i<j} (w1 c^a_ij + w2 c^s_ij) |h_i - h_j|`.
//!
//! With `U_i(0) = 0` the update reduces to one logit per voxel:
//! `logit_i = U_i(1) + sum_l w_l (nu_l(q)_i - nu_l(1 - q)_i)` where
//! `nu_l(v)_i = sum_{j != i} c_ij v_j`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::NonNullDensity;
use crate::error::{Error, Result};
use crate::lattice::{PermutohedralLattice, PositionMatrix, DEFAULT_PASSES};
use crate::stats::ln_normal_pdf;

/// Gaussian kernel bandwidths in voxel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBandwidths {
    pub theta_alpha: [f64; 3],
    pub theta_beta: f64,
    pub theta_gamma: [f64; 3],
}

impl KernelBandwidths {
    pub fn new(theta_alpha: [f64; 3], theta_beta: f64, theta_gamma: [f64; 3]) -> Result<Self> {
        let all = theta_alpha.iter().chain([&theta_beta]).chain(&theta_gamma);
        if let Some(bad) = all.copied().find(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive, got {bad}"
            )));
        }
        Ok(Self {
            theta_alpha,
            theta_beta,
            theta_gamma,
        })
    }

    /// Same bandwidth on every axis and on the mean-difference channel.
    pub fn uniform(theta: f64) -> Result<Self> {
        Self::new([theta; 3], theta, [theta; 3])
    }
}

/// `(w0, w1, w2)`: unary offset, appearance and smoothness kernel weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl FieldWeights {
    pub fn new(w0: f64, w1: f64, w2: f64) -> Self {
        Self { w0, w1, w2 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.w0, self.w1, self.w2]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Unary potentials in the gauge `U_i(0) = 0`; only `U_i(1)` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    u1: Vec<f64>,
}

impl UnaryField {
    pub fn new(u1: Vec<f64>) -> Result<Self> {
        if let Some(index) = u1.iter().position(|u| !u.is_finite()) {
            return Err(Error::NonFinite {
                what: "unary potential",
                index,
            });
        }
        Ok(Self { u1 })
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    /// `q_i = softmax(0, U_i(1))[1]`.
    pub fn softmax(&self) -> MarginalField {
        MarginalField {
            q: self.u1.iter().map(|&u| sigmoid(u)).collect(),
        }
    }
}

/// `q_i(h_i = 1)` per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalField {
    q: Vec<f64>,
}

impl MarginalField {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(index) = q.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "marginal {} at index {index} outside [0, 1]",
                q[index]
            )));
        }
        Ok(Self { q })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q1(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }
}

/// Two-state softmax of `(0, u)` evaluated without overflow.
#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Kernel feature vectors for both kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPositions {
    /// `(l / theta_alpha, delta_mu / theta_beta)`, present iff a mean
    /// difference channel was supplied.
    pub appearance: Option<PositionMatrix>,
    /// `l / theta_gamma`.
    pub smoothness: PositionMatrix,
}

impl KernelPositions {
    pub fn len(&self) -> usize {
        self.smoothness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothness.is_empty()
    }
}

pub fn kernel_positions(
    coords: &[[usize; 3]],
    delta_mu: Option<&[f64]>,
    bandwidths: &KernelBandwidths,
) -> Result<KernelPositions> {
    if let Some(dm) = delta_mu {
        if dm.len() != coords.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} mean differences", coords.len()),
                actual: format!("{}", dm.len()),
            });
        }
        if let Some(index) = dm.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "mean difference",
                index,
            });
        }
    }
    let ta = bandwidths.theta_alpha;
    let tg = bandwidths.theta_gamma;
    let smoothness = PositionMatrix::new(
        3,
        coords
            .iter()
            .flat_map(|c| (0..3).map(move |s| c[s] as f64 / tg[s]))
            .collect(),
    )?;
    let appearance = delta_mu
        .map(|dm| {
            let data = coords
                .iter()
                .zip(dm)
                .flat_map(|(c, d)| {
                    [
                        c[0] as f64 / ta[0],
                        c[1] as f64 / ta[1],
                        c[2] as f64 / ta[2],
                        d / bandwidths.theta_beta,
                    ]
                })
                .collect();
            PositionMatrix::new(4, data)
        })
        .transpose()?;
    Ok(KernelPositions {
        appearance,
        smoothness,
    })
}

fn kernel(a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2).exp()
}

/// Unnormalized pairwise weight `w1 k_app(i, j) + w2 k_sm(i, j)`.
pub fn pairwise_weight(
    i: usize,
    j: usize,
    positions: &KernelPositions,
    weights: &FieldWeights,
) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("pairwise weight undefined for i == j"));
    }
    let m = positions.len();
    if i >= m || j >= m {
        return Err(Error::invalid(format!(
            "voxel index out of range for m = {m}"
        )));
    }
    let app = positions
        .appearance
        .as_ref()
        .map_or(0.0, |p| kernel(p.row(i), p.row(j)));
    let sm = kernel(positions.smoothness.row(i), positions.smoothness.row(j));
    Ok(weights.w1 * app + weights.w2 * sm)
}

/// `U_i(1) = -(w0 + ln phi(x_i) - ln f1(x_i))`.
pub fn unary_from_posterior(x: &[f64], f1: &NonNullDensity, w0: f64) -> Result<UnaryField> {
    let f = f1.evaluate_many(x);
    let mut u1 = Vec::with_capacity(x.len());
    for (index, (&xi, &fi)) in x.iter().zip(&f).enumerate() {
        if !(fi > 0.0) {
            return Err(Error::DegenerateDensity { index, x: xi });
        }
        u1.push(-(w0 + ln_normal_pdf(xi) - fi.ln()));
    }
    UnaryField::new(u1)
}

/// `U_i(1) = -w0` for every voxel.
pub fn unary_prior(w0: f64, m: usize) -> Result<UnaryField> {
    if m == 0 {
        return Err(Error::invalid("prior field needs at least one voxel"));
    }
    UnaryField::new(vec![-w0; m])
}

/// Source of symmetric-normalized neighbour messages for one kernel.
pub trait MessageKernel: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `nu(v)_i = sum_{j != i} c_ij v_j`.
    fn message(&self, v: &[f64]) -> Result<Vec<f64>>;

    /// `nu(1)`, so that `nu(1 - v) = complement - nu(v)`.
    fn complement(&self) -> &[f64];
}

impl MessageKernel for PermutohedralLattice {
    fn len(&self) -> usize {
        PermutohedralLattice::len(self)
    }

    fn message(&self, v: &[f64]) -> Result<Vec<f64>> {
        PermutohedralLattice::message(self, v)
    }

    fn complement(&self) -> &[f64] {
        PermutohedralLattice::complement(self)
    }
}

/// Quadratic-time reference kernel for oracles.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    positions: PositionMatrix,
    inv_sqrt_mass: Vec<f64>,
    complement: Vec<f64>,
}

impl DenseKernel {
    pub fn new(positions: PositionMatrix) -> Self {
        let m = positions.len();
        let inv_sqrt_mass: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mass: f64 = (0..m)
                    .map(|j| kernel(positions.row(i), positions.row(j)))
                    .sum();
                1.0 / mass.sqrt()
            })
            .collect();
        let mut dense = Self {
            positions,
            inv_sqrt_mass,
            complement: Vec::new(),
        };
        dense.complement = dense.apply(&vec![1.0; m]);
        dense
    }

    /// Normalized coupling `c_ij`, zero on the diagonal.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        kernel(self.positions.row(i), self.positions.row(j))
            * self.inv_sqrt_mass[i]
            * self.inv_sqrt_mass[j]
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.positions.len();
        (0..m)
            .into_par_iter()
            .map(|i| (0..m).map(|j| self.coupling(i, j) * v[j]).sum())
            .collect()
    }
}

impl MessageKernel for DenseKernel {
    fn len(&self) -> usize {
        self.positions.len()
    }

    fn message(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.positions.len();
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                expected: format!("{m} rows"),
                actual: format!("{}", v.len()),
            });
        }
        Ok(self.apply(v))
    }

    fn complement(&self) -> &[f64] {
        &self.complement
    }
}

/// The two message kernels of a field; appearance is optional.
#[derive(Debug, Clone)]
pub struct FieldKernels<K> {
    pub appearance: Option<K>,
    pub smoothness: K,
}

pub type FieldLattices = FieldKernels<PermutohedralLattice>;

impl<K: MessageKernel> FieldKernels<K> {
    pub fn len(&self) -> usize {
        self.smoothness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothness.len() == 0
    }
}

impl FieldLattices {
    pub fn build(positions: &KernelPositions) -> Result<Self> {
        Self::build_with_passes(positions, DEFAULT_PASSES)
    }

    pub fn build_with_passes(positions: &KernelPositions, passes: usize) -> Result<Self> {
        Ok(Self {
            appearance: positions
                .appearance
                .as_ref()
                .map(|p| PermutohedralLattice::build_with_passes(p, passes))
                .transpose()?,
            smoothness: PermutohedralLattice::build_with_passes(&positions.smoothness, passes)?,
        })
    }
}

impl FieldKernels<DenseKernel> {
    pub fn dense(positions: &KernelPositions) -> Self {
        Self {
            appearance: positions.appearance.clone().map(DenseKernel::new),
            smoothness: DenseKernel::new(positions.smoothness.clone()),
        }
    }
}

/// Adds `w (nu(q) - nu(1 - q))` for one kernel into `acc`.
fn add_pairwise<K: MessageKernel>(acc: &mut [f64], kernel: &K, q: &[f64], w: f64) -> Result<()> {
    if w == 0.0 {
        return Ok(());
    }
    let nu = kernel.message(q)?;
    acc.par_iter_mut()
        .zip(nu.par_iter().zip(kernel.complement().par_iter()))
        .for_each(|(a, (&n, &c))| *a += w * (2.0 * n - c));
    Ok(())
}

/// One parallel mean-field update of every voxel from the previous iterate.
pub fn mean_field_step<K: MessageKernel>(
    q: &MarginalField,
    unary: &UnaryField,
    kernels: &FieldKernels<K>,
    weights: &FieldWeights,
) -> Result<MarginalField> {
    let m = unary.len();
    if q.len() != m || kernels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} voxels"),
            actual: format!("q {} / kernels {}", q.len(), kernels.len()),
        });
    }
    let mut logit = unary.u1.clone();
    if let Some(app) = &kernels.appearance {
        add_pairwise(&mut logit, app, &q.q, weights.w1)?;
    }
    add_pairwise(&mut logit, &kernels.smoothness, &q.q, weights.w2)?;
    Ok(MarginalField {
        q: logit.into_par_iter().map(sigmoid).collect(),
    })
}

/// `R` unrolled updates starting from `softmax(U)`.
pub fn run_mean_field<K: MessageKernel>(
    unary: &UnaryField,
    kernels: &FieldKernels<K>,
    weights: &FieldWeights,
    r: usize,
) -> Result<MarginalField> {
    if r == 0 {
        return Err(Error::invalid(
            "mean-field iteration count must be at least 1",
        ));
    }
    let mut q = unary.softmax();
    for _ in 0..r {
        q = mean_field_step(&q, unary, kernels, weights)?;
    }
    Ok(q)
}
