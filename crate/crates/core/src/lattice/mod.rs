//! High-dimensional Gaussian filtering on the permutohedral lattice.
//!
//! [`PermutohedralLattice::filter`] approximates
//! `v'_i = sum_j exp(-|p_i - p_j|^2 / 2) v_j` in `O(m d^2)` by splatting each
//! input onto the vertices of its enclosing lattice simplex, blurring with a
//! `(1/4, 1/2, 1/4)` stencil along each of the `d + 1` lattice directions,
//! and slicing back with the same barycentric weights. The quadratic
//! [`exact_gaussian_filter`] is kept alongside as the reference.
//!
//! Calibration: positions are scaled slightly above the textbook
//! `(d+1) sqrt(2/3)` so the blurred kernel has unit variance, cross terms are
//! divided by the lattice's volume gain, and each point's own contribution is
//! replaced by the exact value 1. The vertex set is closed under the blur
//! stencil so that no mass is lost at the edge of sparse data.

mod embedding;
mod exact;
mod table;

pub use embedding::{build_embedding, EmbeddingMatrix};
pub use exact::{exact_gaussian_filter, exact_normalized_filter};

use rayon::prelude::*;

use crate::error::{Error, Result};
use table::KeyTable;

const NONE: u32 = u32::MAX;

/// `m` points in `R^d`, row-major. Coordinates are already divided by their
/// kernel bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PositionMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("position dimension must be at least 1"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "position buffer of length {} is not a positive multiple of d = {dim}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "position",
                index: index / dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<const D: usize>(rows: &[[f64; D]]) -> Result<Self> {
        Self::new(D, rows.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows in a new order: `out.row(k) == self.row(order[k])`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let data = order.iter().flat_map(|&i| self.row(i).to_vec()).collect();
        Self {
            dim: self.dim,
            data,
        }
    }
}

/// `rows x channels` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueChannels {
    channels: usize,
    data: Vec<f64>,
}

impl ValueChannels {
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() % channels != 0 {
            return Err(Error::invalid(format!(
                "value buffer of length {} does not hold {channels} channels",
                data.len()
            )));
        }
        Ok(Self { channels, data })
    }

    pub fn single(values: Vec<f64>) -> Self {
        Self {
            channels: 1,
            data: values,
        }
    }

    /// The homogeneous channel: one row of ones per point.
    pub fn ones(rows: usize) -> Self {
        Self::single(vec![1.0; rows])
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }
}

/// Kernel variance added by splatting plus slicing, in units of one blur
/// pass. Measured from the lattice impulse response.
pub const SPLAT_SLICE_VARIANCE: f64 = 0.4733;

/// Scale applied to positions before embedding for `passes` blur passes.
///
/// One `(1/4, 1/2, 1/4)` pass along all `d + 1` directions has covariance
/// `(d+1)^2 / 2` times the identity on the lattice hyperplane; splatting and
/// slicing add [`SPLAT_SLICE_VARIANCE`] passes' worth. The scale makes the
/// total one in input units.
pub fn position_scale(dim: usize, passes: usize) -> f64 {
    (dim as f64 + 1.0) * ((passes as f64 + SPLAT_SLICE_VARIANCE) / 2.0).sqrt()
}

pub fn default_position_scale(dim: usize) -> f64 {
    position_scale(dim, DEFAULT_PASSES)
}

pub const DEFAULT_PASSES: usize = 2;

/// Ratio of raw lattice output to the Gaussian sum it approximates:
/// the lattice cell volume in input units over `(2 pi)^(d/2)`.
fn lattice_gain(dim: usize, scale: f64) -> f64 {
    let d = dim as f64;
    (d + 1.0).powf(d - 0.5) / scale.powi(dim as i32) / (2.0 * std::f64::consts::PI).powf(d / 2.0)
}

#[derive(Debug, Clone)]
pub struct PermutohedralLattice {
    dim: usize,
    n_points: usize,
    table: KeyTable,
    /// Per point, the `d + 1` vertex slots of its simplex; entry `k` is the
    /// remainder-`k` vertex.
    vertices: Vec<u32>,
    barycentric: Vec<f64>,
    /// CSR gather lists for splatting: entries of `vertices` grouped by slot,
    /// ascending within a group.
    splat_offsets: Vec<u32>,
    splat_entries: Vec<u32>,
    /// Per direction, per slot: slots of `key - t` and `key + t`.
    neighbors: Vec<[u32; 2]>,
    passes: usize,
    gain: f64,
    self_weight: Vec<f64>,
    homogeneous: Vec<f64>,
    /// `1 / sqrt(homogeneous)`.
    inv_sqrt_mass: Vec<f64>,
    /// Symmetric-normalized message of the all-ones channel.
    complement: Vec<f64>,
}

/// Per-point simplex location, computed independently for each input.
struct Located {
    keys: Vec<i32>,
    barycentric: Vec<f64>,
}

fn locate(dim: usize, embedding: &EmbeddingMatrix, scale: f64, p: &[f64]) -> Located {
    let d1 = dim + 1;
    let d1i = d1 as i64;
    let down = 1.0 / d1 as f64;
    let scaled: Vec<f64> = p.iter().map(|x| x * scale).collect();
    let mut elevated = vec![0.0; d1];
    embedding.embed(&scaled, &mut elevated);

    // Nearest remainder-0 point, coordinate-wise, then repair the sum.
    let mut rem0 = vec![0i64; d1];
    let mut sum = 0i64;
    for i in 0..d1 {
        let v = elevated[i] * down;
        let up = v.ceil() as i64 * d1i;
        let dn = v.floor() as i64 * d1i;
        rem0[i] = if up as f64 - elevated[i] < elevated[i] - dn as f64 {
            up
        } else {
            dn
        };
        sum += rem0[i];
    }
    sum /= d1i;

    // Rank coordinates by residual, largest first.
    let mut rank = vec![0i64; d1];
    for i in 0..dim {
        let di = elevated[i] - rem0[i] as f64;
        for j in i + 1..d1 {
            if di < elevated[j] - rem0[j] as f64 {
                rank[i] += 1;
            } else {
                rank[j] += 1;
            }
        }
    }
    for i in 0..d1 {
        rank[i] += sum;
        if rank[i] < 0 {
            rank[i] += d1i;
            rem0[i] += d1i;
        } else if rank[i] > dim as i64 {
            rank[i] -= d1i;
            rem0[i] -= d1i;
        }
    }

    let mut bary = vec![0.0; d1 + 1];
    for i in 0..d1 {
        let v = (elevated[i] - rem0[i] as f64) * down;
        let r = rank[i] as usize;
        bary[dim - r] += v;
        bary[dim + 1 - r] -= v;
    }
    bary[0] += 1.0 + bary[d1];
    bary.truncate(d1);
    // Remove round-off outside [0, 1].
    for b in bary.iter_mut() {
        *b = b.clamp(0.0, 1.0);
    }

    let mut keys = vec![0i32; d1 * dim];
    for remainder in 0..d1 {
        for i in 0..dim {
            let r = rank[i] as usize;
            let canonical = if r <= dim - remainder {
                remainder as i64
            } else {
                remainder as i64 - d1i
            };
            keys[remainder * dim + i] = (rem0[i] + canonical) as i32;
        }
    }
    Located {
        keys,
        barycentric: bary,
    }
}

impl PermutohedralLattice {
    pub fn build(positions: &PositionMatrix) -> Result<Self> {
        Self::build_with_passes(positions, DEFAULT_PASSES)
    }

    pub fn build_with_passes(positions: &PositionMatrix, passes: usize) -> Result<Self> {
        Self::build_with(positions, position_scale(positions.dim(), passes), passes)
    }

    pub fn build_with(positions: &PositionMatrix, scale: f64, passes: usize) -> Result<Self> {
        if passes == 0 {
            return Err(Error::invalid("lattice needs at least one blur pass"));
        }
        let dim = positions.dim();
        let d1 = dim + 1;
        let m = positions.len();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("invalid lattice scale {scale}")));
        }
        let max_abs = positions.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max_abs * scale * (d1 as f64) > 1.0e9 {
            return Err(Error::invalid(
                "positions too large for 32-bit lattice coordinates",
            ));
        }
        if m >= (u32::MAX as usize) / d1 {
            return Err(Error::invalid("too many points for one lattice"));
        }
        let embedding = build_embedding(dim);

        let located: Vec<Located> = (0..m)
            .into_par_iter()
            .map(|i| locate(dim, &embedding, scale, positions.row(i)))
            .collect();

        let mut table = KeyTable::with_capacity(dim, m.max(1) * 2);
        let mut vertices = Vec::with_capacity(m * d1);
        let mut barycentric = Vec::with_capacity(m * d1);
        for loc in &located {
            for k in 0..d1 {
                vertices.push(table.insert(&loc.keys[k * dim..(k + 1) * dim]));
            }
            barycentric.extend_from_slice(&loc.barycentric);
        }
        drop(located);
        // Close the vertex set under the blur: every stencil step from an
        // occupied vertex lands on a vertex that exists.
        for dir in (0..passes).flat_map(|_| 0..d1) {
            let n = table.len();
            let mut step = vec![0i32; dim];
            for slot in 0..n {
                for sign in [-1i32, 1] {
                    step.copy_from_slice(table.key(slot));
                    for (i, c) in step.iter_mut().enumerate() {
                        *c += sign * if i == dir { -(dim as i32) } else { 1 };
                    }
                    table.insert(&step);
                }
            }
        }
        let n_vertices = table.len();

        // Splat gather lists (counting sort keeps entries ascending).
        let mut splat_offsets = vec![0u32; n_vertices + 1];
        for &v in &vertices {
            splat_offsets[v as usize + 1] += 1;
        }
        for s in 0..n_vertices {
            splat_offsets[s + 1] += splat_offsets[s];
        }
        let mut fill = splat_offsets.clone();
        let mut splat_entries = vec![0u32; vertices.len()];
        for (e, &v) in vertices.iter().enumerate() {
            splat_entries[fill[v as usize] as usize] = e as u32;
            fill[v as usize] += 1;
        }

        let neighbors: Vec<[u32; 2]> = (0..d1 * n_vertices)
            .into_par_iter()
            .map(|idx| {
                let dir = idx / n_vertices;
                let slot = idx % n_vertices;
                let key = table.key(slot);
                let mut minus = key.to_vec();
                let mut plus = key.to_vec();
                for i in 0..dim {
                    minus[i] -= 1;
                    plus[i] += 1;
                }
                if dir < dim {
                    minus[dir] += d1 as i32;
                    plus[dir] -= d1 as i32;
                }
                [
                    table.find(&minus).unwrap_or(NONE),
                    table.find(&plus).unwrap_or(NONE),
                ]
            })
            .collect();

        let mut lattice = Self {
            dim,
            n_points: m,
            table,
            vertices,
            barycentric,
            splat_offsets,
            splat_entries,
            neighbors,
            passes,
            gain: lattice_gain(dim, scale),
            self_weight: Vec::new(),
            homogeneous: Vec::new(),
            inv_sqrt_mass: Vec::new(),
            complement: Vec::new(),
        };
        lattice.self_weight = (0..m)
            .into_par_iter()
            .map(|i| lattice.compute_self_weight(i))
            .collect();
        lattice.homogeneous = lattice.filter(&ValueChannels::ones(m))?.into_vec();
        lattice.inv_sqrt_mass = lattice.homogeneous.iter().map(|h| 1.0 / h.sqrt()).collect();
        lattice.complement = lattice.message(&vec![1.0; m])?;
        Ok(lattice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn vertex_count(&self) -> usize {
        self.table.len()
    }

    /// Full `(d+1)`-coordinate key of a vertex slot.
    pub fn vertex_key(&self, slot: usize) -> Vec<i64> {
        let key = self.table.key(slot);
        let mut full: Vec<i64> = key.iter().map(|&k| k as i64).collect();
        full.push(-full.iter().sum::<i64>());
        full
    }

    /// Vertex slots and barycentric weights of the simplex enclosing point `i`.
    pub fn simplex(&self, i: usize) -> (&[u32], &[f64]) {
        let d1 = self.dim + 1;
        (
            &self.vertices[i * d1..(i + 1) * d1],
            &self.barycentric[i * d1..(i + 1) * d1],
        )
    }

    /// Raw lattice response of point `i` to its own unit impulse.
    pub fn self_weights(&self) -> &[f64] {
        &self.self_weight
    }

    /// Raw output per unit of Gaussian mass.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Filtered all-ones channel, `sum_j k_ij` including `k_ii = 1`.
    pub fn homogeneous(&self) -> &[f64] {
        &self.homogeneous
    }

    /// Approximate Gaussian filter, self term included with weight 1.
    pub fn filter(&self, values: &ValueChannels) -> Result<ValueChannels> {
        self.check_rows(values)?;
        let c = values.channels();
        let mut out = self.raw_filter(values.as_slice(), c);
        let inv = 1.0 / self.gain;
        out.par_chunks_mut(c)
            .zip(values.as_slice().par_chunks(c))
            .zip(self.self_weight.par_iter())
            .for_each(|((row, v), &s)| {
                for (o, x) in row.iter_mut().zip(v) {
                    *o = (*o - s * x) * inv + x;
                }
            });
        Ok(ValueChannels {
            channels: c,
            data: out,
        })
    }

    /// Kernel-weighted mean: filter output divided by the filtered
    /// homogeneous channel. Constant inputs are returned unchanged.
    pub fn filter_normalized(&self, values: &ValueChannels) -> Result<ValueChannels> {
        let mut out = self.filter(values)?;
        let c = out.channels;
        out.data
            .par_chunks_mut(c)
            .zip(self.homogeneous.par_iter())
            .for_each(|(row, &h)| row.iter_mut().for_each(|v| *v /= h));
        Ok(out)
    }

    /// Symmetric-normalized neighbour message, single channel:
    /// `sum_{j != i} k_ij v_j / sqrt(D_i D_j)` with `D` the homogeneous
    /// channel.
    pub fn message(&self, values: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = values
            .iter()
            .zip(&self.inv_sqrt_mass)
            .map(|(v, s)| v * s)
            .collect();
        let filtered = self.filter(&ValueChannels::single(scaled.clone()))?;
        Ok(filtered
            .into_vec()
            .into_iter()
            .zip(&scaled)
            .zip(&self.inv_sqrt_mass)
            .map(|((f, u), s)| (f - u) * s)
            .collect())
    }

    /// [`Self::message`] of the all-ones channel.
    pub fn complement(&self) -> &[f64] {
        &self.complement
    }

    fn check_rows(&self, values: &ValueChannels) -> Result<()> {
        if values.rows() != self.n_points {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.n_points),
                actual: format!("{}", values.rows()),
            });
        }
        Ok(())
    }

    /// Splat, blur, slice without any rescaling.
    pub fn raw_filter(&self, values: &[f64], c: usize) -> Vec<f64> {
        let d1 = self.dim + 1;
        let nv = self.table.len();

        let mut grid = vec![0.0; nv * c];
        grid.par_chunks_mut(c).enumerate().for_each(|(slot, acc)| {
            let lo = self.splat_offsets[slot] as usize;
            let hi = self.splat_offsets[slot + 1] as usize;
            for &e in &self.splat_entries[lo..hi] {
                let e = e as usize;
                let b = self.barycentric[e];
                let row = &values[(e / d1) * c..(e / d1 + 1) * c];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += b * v;
                }
            }
        });

        let mut next = vec![0.0; nv * c];
        for dir in (0..self.passes).flat_map(|_| 0..d1) {
            let nb = &self.neighbors[dir * nv..(dir + 1) * nv];
            let src = &grid;
            next.par_chunks_mut(c).enumerate().for_each(|(slot, dst)| {
                let [lo, hi] = nb[slot];
                let own = &src[slot * c..(slot + 1) * c];
                for k in 0..c {
                    let mut v = 0.5 * own[k];
                    if lo != NONE {
                        v += 0.25 * src[lo as usize * c + k];
                    }
                    if hi != NONE {
                        v += 0.25 * src[hi as usize * c + k];
                    }
                    dst[k] = v;
                }
            });
            std::mem::swap(&mut grid, &mut next);
        }

        let mut out = vec![0.0; self.n_points * c];
        out.par_chunks_mut(c).enumerate().for_each(|(i, dst)| {
            let (verts, bary) = self.simplex(i);
            for (&v, &b) in verts.iter().zip(bary) {
                let src = &grid[v as usize * c..(v as usize + 1) * c];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += b * s;
                }
            }
        });
        out
    }

    /// Blur response at `to` to a unit impulse at `from`.
    ///
    /// On a vertex set closed under the blur every direction contributes an
    /// independent binomial number of net steps `e_j` in `[-n, n]`, with
    /// weight `C(2n, n + e_j) / 4^n`. The displacement is
    /// `S 1 - (d+1) e` with `S = sum(e)`.
    fn transfer(&self, from: &[i64], to: &[i64]) -> f64 {
        let d1 = (self.dim + 1) as i64;
        let n = self.passes as i64;
        let step_weight = |e: i64| binomial(2 * n, n + e) / 4f64.powi(n as i32);
        let mut total = 0.0;
        for s in -d1 * n..=d1 * n {
            let mut weight = 1.0;
            let mut sum = 0;
            for (a, b) in from.iter().zip(to) {
                let num = s - (b - a);
                if num % d1 != 0 || (num / d1).abs() > n {
                    weight = 0.0;
                    break;
                }
                sum += num / d1;
                weight *= step_weight(num / d1);
            }
            if weight > 0.0 && sum == s {
                total += weight;
            }
        }
        total
    }

    fn compute_self_weight(&self, i: usize) -> f64 {
        let (verts, bary) = self.simplex(i);
        let keys: Vec<Vec<i64>> = verts.iter().map(|&v| self.vertex_key(v as usize)).collect();
        let mut total = 0.0;
        for (a, ka) in keys.iter().enumerate() {
            for (b, kb) in keys.iter().enumerate() {
                if bary[a] != 0.0 && bary[b] != 0.0 {
                    total += bary[a] * bary[b] * self.transfer(ka, kb);
                }
            }
        }
        total
    }
}

fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_positions(m: usize, d: usize, side: f64, seed: u64) -> PositionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PositionMatrix::new(d, (0..m * d).map(|_| rng.gen::<f64>() * side).collect()).unwrap()
    }

    #[test]
    fn barycentric_weights_are_convex() {
        for d in 1..=8 {
            let pos = random_positions(200, d, 5.0, d as u64);
            let e = build_embedding(d);
            for i in 0..pos.len() {
                let loc = locate(d, &e, default_position_scale(d), pos.row(i));
                let b = &loc.barycentric;
                assert!(b.iter().all(|&w| (0.0..=1.0).contains(&w)));
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn vertices_are_zero_sum_remainder_points() {
        let d = 4;
        let pos = random_positions(100, d, 3.0, 7);
        let lat = PermutohedralLattice::build(&pos).unwrap();
        for i in 0..pos.len() {
            let (verts, _) = lat.simplex(i);
            for (k, &v) in verts.iter().enumerate() {
                let key = lat.vertex_key(v as usize);
                assert_eq!(key.iter().sum::<i64>(), 0);
                for &c in &key {
                    assert_eq!(c.rem_euclid(d as i64 + 1), k as i64, "key {key:?}");
                }
            }
        }
    }

    #[test]
    fn point_on_vertex_has_unit_weight() {
        // The origin is a remainder-0 lattice point.
        let pos = PositionMatrix::new(3, vec![0.0, 0.0, 0.0]).unwrap();
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let (_, b) = lat.simplex(0);
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!(b[1..].iter().all(|&w| w.abs() < 1e-12));
    }

    #[test]
    fn single_point_is_identity() {
        let pos = PositionMatrix::new(4, vec![0.3, -1.1, 2.0, 0.7]).unwrap();
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let out = lat.filter(&ValueChannels::single(vec![7.0])).unwrap();
        assert!((out.as_slice()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_filter_preserves_constants() {
        let pos = random_positions(300, 4, 4.0, 3);
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let out = lat
            .filter_normalized(&ValueChannels::single(vec![2.5; 300]))
            .unwrap();
        for v in out.as_slice() {
            assert!((v - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn self_weight_matches_impulse_response() {
        let pos = random_positions(60, 3, 2.0, 11);
        let lat = PermutohedralLattice::build(&pos).unwrap();
        for i in [0, 17, 59] {
            let mut v = vec![0.0; 60];
            v[i] = 1.0;
            let raw = lat.raw_filter(&v, 1);
            let rel = (raw[i] - lat.self_weights()[i]).abs() / raw[i];
            assert!(
                rel < 1e-12,
                "point {i}: impulse {} vs paths {}",
                raw[i],
                lat.self_weights()[i]
            );
        }
    }

    #[test]
    fn multichannel_matches_per_channel() {
        let pos = random_positions(120, 3, 3.0, 5);
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let a: Vec<f64> = (0..120).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..120).map(|i| (i as f64 * 0.11).cos()).collect();
        let both: Vec<f64> = a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect();
        let joint = lat.filter(&ValueChannels::new(2, both).unwrap()).unwrap();
        let fa = lat.filter(&ValueChannels::single(a)).unwrap();
        let fb = lat.filter(&ValueChannels::single(b)).unwrap();
        assert_eq!(joint.channel(0), fa.into_vec());
        assert_eq!(joint.channel(1), fb.into_vec());
    }

    #[test]
    fn rejects_row_mismatch() {
        let pos = random_positions(10, 2, 1.0, 1);
        let lat = PermutohedralLattice::build(&pos).unwrap();
        assert!(lat.filter(&ValueChannels::ones(9)).is_err());
    }

    #[test]
    fn rejects_non_finite_positions() {
        assert!(PositionMatrix::new(2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn lattice_build_is_deterministic() {
        let pos = random_positions(500, 4, 3.0, 9);
        let a = PermutohedralLattice::build(&pos).unwrap();
        let b = PermutohedralLattice::build(&pos).unwrap();
        let v = ValueChannels::single((0..500).map(|i| (i % 7) as f64).collect());
        assert_eq!(a.filter(&v).unwrap(), b.filter(&v).unwrap());
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn tracks_exact_filter() {
        for (d, side) in [(3, 2.0), (3, 8.0), (4, 4.0)] {
            let pos = random_positions(400, d, side, 21);
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let v = ValueChannels::single((0..400).map(|_| rng.gen::<f64>()).collect());
            let lat = PermutohedralLattice::build(&pos).unwrap();
            let approx = lat.filter(&v).unwrap();
            let exact = exact_gaussian_filter(&pos, &v).unwrap();
            let err = rel_l2(approx.as_slice(), exact.as_slice());
            assert!(err < 0.05, "d={d} side={side} err={err}");
        }
    }

    #[test]
    fn message_excludes_self() {
        // Far-apart points see no neighbours.
        let pos = PositionMatrix::new(1, vec![0.0, 100.0, 200.0]).unwrap();
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let msg = lat.message(&[1.0, 1.0, 1.0]).unwrap();
        assert!(msg.iter().all(|m| m.abs() < 1e-12), "{msg:?}");
        assert!(lat.complement().iter().all(|m| m.abs() < 1e-12));
    }
}
