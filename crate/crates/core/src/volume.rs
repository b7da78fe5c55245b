//! Dense 3D volumes, analysis masks, and the flat-index bookkeeping every
//! other module relies on.
//!
//! Voxels are stored row-major with x varying fastest: the flat index of
//! `(x, y, z)` is `x + nx * (y + ny * z)`. Masked voxel sequences always
//! follow increasing flat index, so position `i` in any per-voxel vector
//! refers to the same voxel everywhere in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::invalid("voxel count overflows usize"))?;
        Ok(Self { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

fn check_dims(expected: GridDims, actual: GridDims) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: GridDims,
    in_analysis: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn new(dims: GridDims, in_analysis: Vec<bool>) -> Result<Self> {
        if in_analysis.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} mask entries", dims.len()),
                actual: format!("{}", in_analysis.len()),
            });
        }
        let count = in_analysis.iter().filter(|&&b| b).count();
        Ok(Self {
            dims,
            in_analysis,
            count,
        })
    }

    pub fn full(dims: GridDims) -> Self {
        Self {
            dims,
            in_analysis: vec![true; dims.len()],
            count: dims.len(),
        }
    }

    /// Mask of voxels whose value is nonzero.
    pub fn from_volume(volume: &ScalarVolume) -> Self {
        let in_analysis = volume.values().iter().map(|&v| v != 0.0).collect();
        // Length always matches.
        Self::new(volume.dims(), in_analysis).expect("mask length")
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// Number of voxels in the analysis.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, index: usize) -> bool {
        self.in_analysis[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.in_analysis
    }

    /// Flat indices of masked-in voxels in canonical order.
    pub fn indices(&self) -> Vec<usize> {
        self.in_analysis
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: GridDims,
    values: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", dims.len()),
                actual: format!("{}", values.len()),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }

    /// Errors if any masked-in voxel is NaN or infinite.
    pub fn check_finite(&self, mask: &Mask, what: &'static str) -> Result<()> {
        check_dims(mask.dims, self.dims)?;
        for (index, (&v, &inside)) in self.values.iter().zip(&mask.in_analysis).enumerate() {
            if inside && !v.is_finite() {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: GridDims,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: GridDims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", dims.len()),
                actual: format!("{}", labels.len()),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!(
                "label {} at index {i} is not 0 or 1",
                labels[i]
            )));
        }
        Ok(Self { dims, labels })
    }

    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            labels: vec![0; dims.len()],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn proportion(&self) -> f64 {
        self.count_ones() as f64 / self.labels.len() as f64
    }
}

/// Masked voxels as `(flat_index, value)` pairs in canonical order.
pub fn flatten_masked(volume: &ScalarVolume, mask: &Mask) -> Result<Vec<(usize, f64)>> {
    check_dims(mask.dims, volume.dims)?;
    mask.require_nonempty()?;
    Ok(mask
        .in_analysis
        .iter()
        .zip(&volume.values)
        .enumerate()
        .filter_map(|(i, (&inside, &v))| inside.then_some((i, v)))
        .collect())
}

/// Masked values only, in canonical order.
pub fn masked_values(volume: &ScalarVolume, mask: &Mask) -> Result<Vec<f64>> {
    Ok(flatten_masked(volume, mask)?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

/// Inverse of [`flatten_masked`]: writes `values` back onto the grid and
/// fills masked-out voxels with `fill`.
pub fn scatter_masked(values: &[f64], mask: &Mask, fill: f64) -> Result<ScalarVolume> {
    if values.len() != mask.count {
        return Err(Error::DimensionMismatch {
            expected: format!("{} masked values", mask.count),
            actual: format!("{}", values.len()),
        });
    }
    let mut out = vec![fill; mask.dims.len()];
    for (slot, &v) in mask.indices().into_iter().zip(values) {
        out[slot] = v;
    }
    ScalarVolume::new(mask.dims, out)
}

/// Integer grid coordinates of masked voxels, same order as [`flatten_masked`].
pub fn voxel_coordinates(mask: &Mask) -> Result<Vec<[usize; 3]>> {
    mask.require_nonempty()?;
    Ok(mask
        .indices()
        .into_iter()
        .map(|i| mask.dims.coords(i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_applies_mask() {
        let dims = GridDims::new(2, 1, 1).unwrap();
        let vol = ScalarVolume::new(dims, vec![3.0, 5.0]).unwrap();
        let mask = Mask::new(dims, vec![true, false]).unwrap();
        assert_eq!(flatten_masked(&vol, &mask).unwrap(), vec![(0, 3.0)]);
    }

    #[test]
    fn full_mask_is_row_major() {
        let dims = GridDims::cube(2).unwrap();
        let vol = ScalarVolume::new(dims, (0..8).map(f64::from).collect()).unwrap();
        let flat = flatten_masked(&vol, &Mask::full(dims)).unwrap();
        assert_eq!(flat.len(), 8);
        for (k, (i, v)) in flat.into_iter().enumerate() {
            assert_eq!(i, k);
            assert_eq!(v, k as f64);
        }
    }

    #[test]
    fn empty_mask_is_rejected() {
        let dims = GridDims::cube(2).unwrap();
        let mask = Mask::new(dims, vec![false; 8]).unwrap();
        let vol = ScalarVolume::zeros(dims);
        assert!(matches!(flatten_masked(&vol, &mask), Err(Error::EmptyMask)));
        assert!(matches!(voxel_coordinates(&mask), Err(Error::EmptyMask)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let vol = ScalarVolume::zeros(GridDims::cube(2).unwrap());
        let mask = Mask::full(GridDims::cube(3).unwrap());
        assert!(matches!(
            flatten_masked(&vol, &mask),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coordinates_small_cases() {
        let dims = GridDims::new(2, 1, 1).unwrap();
        assert_eq!(
            voxel_coordinates(&Mask::full(dims)).unwrap(),
            vec![[0, 0, 0], [1, 0, 0]]
        );

        let dims = GridDims::cube(10).unwrap();
        let mut bits = vec![false; dims.len()];
        bits[dims.index(3, 4, 5)] = true;
        let mask = Mask::new(dims, bits).unwrap();
        assert_eq!(voxel_coordinates(&mask).unwrap(), vec![[3, 4, 5]]);
    }

    #[test]
    fn coordinates_enumerate_30_cube() {
        let dims = GridDims::cube(30).unwrap();
        let coords = voxel_coordinates(&Mask::full(dims)).unwrap();
        assert_eq!(coords.len(), 27_000);
        assert_eq!(*coords.last().unwrap(), [29, 29, 29]);
        // Exhaustive: x fastest, then y, then z.
        let mut k = 0;
        for z in 0..30 {
            for y in 0..30 {
                for x in 0..30 {
                    assert_eq!(coords[k], [x, y, z]);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn scatter_inverts_flatten() {
        let dims = GridDims::new(3, 2, 2).unwrap();
        let vol = ScalarVolume::new(dims, (0..12).map(|i| i as f64 * 0.5).collect()).unwrap();
        let mask = Mask::new(dims, (0..12).map(|i| i % 3 != 1).collect()).unwrap();
        let vals = masked_values(&vol, &mask).unwrap();
        let back = scatter_masked(&vals, &mask, 0.0).unwrap();
        for i in 0..12 {
            if mask.contains(i) {
                assert_eq!(back.values()[i], vol.values()[i]);
            } else {
                assert_eq!(back.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn labels_restricted_to_binary() {
        let dims = GridDims::new(2, 1, 1).unwrap();
        assert!(LabelVolume::new(dims, vec![0, 2]).is_err());
        assert_eq!(LabelVolume::new(dims, vec![0, 1]).unwrap().count_ones(), 1);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(GridDims::new(0, 1, 1).is_err());
    }
}
