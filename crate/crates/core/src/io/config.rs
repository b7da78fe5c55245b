//! Fit configuration and input loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::volume::{masked_values, voxel_coordinates, GridDims, Mask, ScalarVolume};

use super::volume_file::read_volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub zstats: PathBuf,
    pub delta_mu: Option<PathBuf>,
    /// Nonzero voxels are analysed; without a mask, every voxel is.
    pub mask: Option<PathBuf>,
    pub out: PathBuf,
    pub alpha: f64,
    pub em: EmConfig,
}

impl RunConfig {
    pub fn new(zstats: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            zstats: zstats.into(),
            delta_mu: None,
            mask: None,
            out: out.into(),
            alpha: 0.1,
            em: EmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        self.em.validate()
    }

    pub fn load_inputs(&self) -> Result<FitInputs> {
        FitInputs::load(&self.zstats, self.delta_mu.as_deref(), self.mask.as_deref())
    }
}

/// Masked inputs in canonical voxel order.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub dims: GridDims,
    pub mask: Mask,
    pub x: Vec<f64>,
    pub delta_mu: Option<Vec<f64>>,
    pub coords: Vec<[usize; 3]>,
}

impl FitInputs {
    pub fn load(zstats: &Path, delta_mu: Option<&Path>, mask: Option<&Path>) -> Result<Self> {
        let (z, _) = read_volume(zstats)?;
        let dims = z.dims();
        let same_dims = |v: &ScalarVolume, what: &str| {
            if v.dims() == dims {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: format!("{what} dims {dims}"),
                    actual: v.dims().to_string(),
                })
            }
        };
        let mask = match mask {
            Some(p) => {
                let (m, _) = read_volume(p)?;
                same_dims(&m, "mask")?;
                Mask::from_volume(&m)
            }
            None => Mask::full(dims),
        };
        z.check_finite(&mask, "z-statistics")?;
        let dm = match delta_mu {
            Some(p) => {
                let (v, _) = read_volume(p)?;
                same_dims(&v, "delta-mu")?;
                v.check_finite(&mask, "delta-mu")?;
                Some(masked_values(&v, &mask)?)
            }
            None => None,
        };
        Ok(Self {
            dims,
            x: masked_values(&z, &mask)?,
            delta_mu: dm,
            coords: voxel_coordinates(&mask)?,
            mask,
        })
    }
}
