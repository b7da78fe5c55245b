//! Raw little-endian `f32` payload with a `key=value` text sidecar.
//!
//! `X.hdr` holds
//!
//! ```text
//! dims=NX,NY,NZ
//! dtype=f32le
//! order=row-major
//! channel=NAME
//! ```
//!
//! and `X.raw` holds `4 NX NY NZ` bytes, voxel `(x, y, z)` at element
//! `x + NX (y + NY z)`, i.e. row-major over `[z][y][x]`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{GridDims, ScalarVolume};

use super::atomic_write;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeHeader {
    pub dims: GridDims,
    pub channel: String,
}

impl VolumeHeader {
    fn render(&self) -> String {
        format!(
            "dims={},{},{}\ndtype=f32le\norder=row-major\nchannel={}\n",
            self.dims.nx, self.dims.ny, self.dims.nz, self.channel
        )
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Header {
            path: path.to_path_buf(),
            reason,
        };
        let (mut dims, mut dtype, mut order, mut channel) = (None, None, None, None);
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "dims" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad(format!("dims {value:?}: {e}")))?;
                    let [nx, ny, nz] = parts[..] else {
                        return Err(bad(format!("dims needs three values, got {value:?}")));
                    };
                    dims = Some(GridDims::new(nx, ny, nz).map_err(|e| bad(e.to_string()))?);
                }
                "dtype" => dtype = Some(value.to_string()),
                "order" => order = Some(value.to_string()),
                "channel" => channel = Some(value.to_string()),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        match dtype.as_deref() {
            Some("f32le") => {}
            other => return Err(bad(format!("dtype must be f32le, got {other:?}"))),
        }
        match order.as_deref() {
            Some("row-major") => {}
            other => return Err(bad(format!("order must be row-major, got {other:?}"))),
        }
        Ok(Self {
            dims: dims.ok_or_else(|| bad("missing dims".into()))?,
            channel: channel.ok_or_else(|| bad("missing channel".into()))?,
        })
    }
}

/// Header and payload paths for a volume given either of them (or a stem).
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("hdr"), path.with_extension("raw"))
}

/// Values are narrowed to `f32`.
pub fn write_volume(path: &Path, volume: &ScalarVolume, channel: &str) -> Result<()> {
    if channel.contains('\n') {
        return Err(Error::invalid("channel name must be a single line"));
    }
    let (hdr, raw) = volume_paths(path);
    let payload: Vec<u8> = volume
        .values()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    let header = VolumeHeader {
        dims: volume.dims(),
        channel: channel.to_string(),
    };
    atomic_write(&raw, &payload)?;
    atomic_write(&hdr, header.render().as_bytes())
}

pub fn read_volume(path: &Path) -> Result<(ScalarVolume, VolumeHeader)> {
    let (hdr, raw) = volume_paths(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header = VolumeHeader::parse(&hdr, &text)?;
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let expected = 4 * header.dims.len();
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            path: raw,
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((ScalarVolume::new(header.dims, values)?, header))
}
