use rayon::prelude::*;

use super::{PositionMatrix, ValueChannels};
use crate::error::{Error, Result};

/// `v'_i = sum_j exp(-|p_i - p_j|^2 / 2) v_j`, including `j = i`. `O(m^2 d)`.
pub fn exact_gaussian_filter(
    positions: &PositionMatrix,
    values: &ValueChannels,
) -> Result<ValueChannels> {
    let m = positions.len();
    if values.rows() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} rows"),
            actual: format!("{}", values.rows()),
        });
    }
    let c = values.channels();
    let mut out = vec![0.0; m * c];
    out.par_chunks_mut(c).enumerate().for_each(|(i, dst)| {
        let pi = positions.row(i);
        for j in 0..m {
            let pj = positions.row(j);
            let dist2: f64 = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
            let w = (-0.5 * dist2).exp();
            for (o, v) in dst.iter_mut().zip(values.row(j)) {
                *o += w * v;
            }
        }
    });
    ValueChannels::new(c, out)
}

/// Exact filter divided row-wise by the exact filter of ones.
pub fn exact_normalized_filter(
    positions: &PositionMatrix,
    values: &ValueChannels,
) -> Result<ValueChannels> {
    let num = exact_gaussian_filter(positions, values)?;
    let den = exact_gaussian_filter(positions, &ValueChannels::ones(positions.len()))?;
    let c = num.channels();
    let data = num
        .as_slice()
        .chunks(c)
        .zip(den.as_slice())
        .flat_map(|(row, d)| row.iter().map(move |v| v / d))
        .collect();
    ValueChannels::new(c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_self_weight() {
        let pos = PositionMatrix::new(3, vec![1.0, 2.0, 3.0]).unwrap();
        let out = exact_gaussian_filter(&pos, &ValueChannels::single(vec![7.0])).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn coincident_points() {
        let pos = PositionMatrix::new(2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let out = exact_gaussian_filter(&pos, &ValueChannels::single(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn two_points_distance_two() {
        let pos = PositionMatrix::new(1, vec![0.0, 2.0]).unwrap();
        let out = exact_gaussian_filter(&pos, &ValueChannels::single(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.as_slice()[0], 1.0);
        assert!((out.as_slice()[1] - 0.135_335_283_236_612_7).abs() < 1e-15);
    }
}
