//! Wall-time scaling of the lattice filter and one mean-field update.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{exact_gaussian_filter, PermutohedralLattice, PositionMatrix, ValueChannels};
use crate::meanfield::{mean_field_step, FieldKernels, FieldWeights, UnaryField};
use crate::seed::{self, purpose, split_seed};

/// Largest size at which the quadratic exact filter is also timed.
pub const EXACT_BENCH_LIMIT: usize = 2000;
/// Timings are the minimum over this many repeats.
pub const REPEATS: usize = 5;
/// Kernel bandwidth in voxels for the synthetic positions.
const THETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    /// Lattice construction plus one filter.
    pub lattice_filter_s: f64,
    pub mean_field_step_s: f64,
    pub exact_filter_s: Option<f64>,
    /// `time(m) / time(previous m)`, when the previous size is half of `m`.
    pub filter_ratio: Option<f64>,
    pub mean_field_ratio: Option<f64>,
}

/// The first `m` voxels of the smallest enclosing cube, scaled by the
/// bandwidth, with `d - 3` extra uniform feature channels.
pub fn bench_positions(m: usize, d: usize, seed: u64) -> Result<PositionMatrix> {
    if d < 3 {
        return Err(Error::invalid(format!(
            "bench feature dimension must be at least 3, got {d}"
        )));
    }
    let side = (m as f64).cbrt().ceil() as usize;
    let mut rng = seed::rng(seed);
    let mut data = Vec::with_capacity(m * d);
    for i in 0..m {
        let c = [i % side, (i / side) % side, i / (side * side)];
        data.extend(c.iter().map(|&v| v as f64 / THETA));
        data.extend((3..d).map(|_| rng.gen::<f64>()));
    }
    PositionMatrix::new(d, data)
}

fn min_time(mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..REPEATS {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn bench_size(m: usize, d: usize, seed: u64) -> Result<BenchRow> {
    let seed = split_seed(seed, purpose::BENCH, m as u64);
    let positions = bench_positions(m, d, seed)?;
    let smooth = PositionMatrix::new(
        3,
        (0..m)
            .flat_map(|i| positions.row(i)[..3].to_vec())
            .collect(),
    )?;
    let mut rng = seed::rng(seed ^ 1);
    let values = ValueChannels::single((0..m).map(|_| rng.gen::<f64>()).collect());

    let lattice_filter_s = min_time(|| {
        PermutohedralLattice::build(&positions)?.filter(&values)?;
        Ok(())
    })?;

    let kernels = FieldKernels {
        appearance: Some(PermutohedralLattice::build(&positions)?),
        smoothness: PermutohedralLattice::build(&smooth)?,
    };
    let unary = UnaryField::new((0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())?;
    let q = unary.softmax();
    let w = FieldWeights::new(0.5, 1.0, 1.0);
    let mean_field_step_s = min_time(|| mean_field_step(&q, &unary, &kernels, &w).map(drop))?;

    let exact_filter_s = if m <= EXACT_BENCH_LIMIT {
        Some(min_time(|| {
            exact_gaussian_filter(&positions, &values).map(drop)
        })?)
    } else {
        None
    };
    Ok(BenchRow {
        m,
        lattice_filter_s,
        mean_field_step_s,
        exact_filter_s,
        filter_ratio: None,
        mean_field_ratio: None,
    })
}

/// Sizes must be strictly ascending.
pub fn run_bench(sizes: &[usize], d: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::invalid(
            "bench sizes must be positive and strictly ascending",
        ));
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let mut row = bench_size(m, d, seed)?;
        if let Some(prev) = rows.last() {
            row.filter_ratio = Some(row.lattice_filter_s / prev.lattice_filter_s);
            row.mean_field_ratio = Some(row.mean_field_step_s / prev.mean_field_step_s);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Refusal note for sizes above [`EXACT_BENCH_LIMIT`].
pub fn exact_note(m: usize) -> Option<String> {
    (m > EXACT_BENCH_LIMIT)
        .then(|| format!("exact filter skipped at m={m} (quadratic; limit {EXACT_BENCH_LIMIT})"))
}
