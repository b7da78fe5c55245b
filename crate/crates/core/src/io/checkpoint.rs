//! Fitted parameters as one versioned JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{EmState, NonNullDensity};
use crate::error::{Error, Result};
use crate::meanfield::{FieldWeights, KernelBandwidths};

use super::atomic_write;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "fchmrf-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub weights: FieldWeights,
    pub density: NonNullDensity,
    pub bandwidths: KernelBandwidths,
    pub loss_history: Vec<f64>,
    pub state: EmState,
}

impl Checkpoint {
    pub fn new(
        weights: FieldWeights,
        density: NonNullDensity,
        bandwidths: KernelBandwidths,
        state: EmState,
    ) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            weights,
            density,
            bandwidths,
            loss_history: state.loss_history.clone(),
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found,
                supported: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    atomic_write(path, checkpoint.to_json()?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}
