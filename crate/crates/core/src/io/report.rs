//! Output bundles for `fit` and `simulate`.
//!
//! Tables are CSV with a header row. Row counts of every table are declared
//! in `metadata.json` under `records`.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::pipeline::PipelineResult;
use crate::sim::{Metrics, ReplicationSummary, SimConfig};
use crate::volume::{scatter_masked, Mask};

use super::atomic_write;
use super::checkpoint::{write_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::volume_file::write_volume;

pub const ARTIFACT: &str = "fchmrf";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall-clock and memory figures. `None` fields are written empty, which
/// keeps outputs byte-identical across runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitTiming {
    pub runtime_s: Option<f64>,
    pub peak_memory_kb: Option<u64>,
}

/// Peak resident set size from `/proc/self/status`, where available.
pub fn peak_memory_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders a table; returns the bytes and the number of data rows.
fn table(header: &[&str], rows: Vec<Vec<String>>) -> Result<(Vec<u8>, usize)> {
    let n = rows.len();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok((bytes, n))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    atomic_write(
        path,
        (serde_json::to_string_pretty(value)? + "\n").as_bytes(),
    )
}

/// `lis`, `rejections` volumes, `summary.csv`, `loss_history.csv`,
/// `checkpoint.json` and `metadata.json`. Masked-out voxels are 0.
pub fn write_fit_bundle(
    config: &RunConfig,
    mask: &Mask,
    result: &PipelineResult,
    timing: FitTiming,
) -> Result<()> {
    let out = &config.out;
    ensure_dir(out)?;
    write_volume(
        &out.join("lis.hdr"),
        &scatter_masked(result.lis.values(), mask, 0.0)?,
        "lis",
    )?;
    let rejected: Vec<f64> = result
        .outcome
        .rejected
        .iter()
        .map(|&r| f64::from(u8::from(r)))
        .collect();
    write_volume(
        &out.join("rejections.hdr"),
        &scatter_masked(&rejected, mask, 0.0)?,
        "rejected",
    )?;

    let w = result.weights;
    let (summary, n_summary) = table(
        &[
            "scope",
            "alpha",
            "m",
            "k",
            "w0",
            "w1",
            "w2",
            "em_iterations",
            "best_loss",
            "runtime_s",
            "peak_memory_kb",
        ],
        vec![vec![
            "global".into(),
            config.alpha.to_string(),
            mask.count().to_string(),
            result.outcome.k.to_string(),
            w.w0.to_string(),
            w.w1.to_string(),
            w.w2.to_string(),
            result.state.iteration.to_string(),
            result.state.best_loss.to_string(),
            opt(timing.runtime_s),
            opt(timing.peak_memory_kb),
        ]],
    )?;
    atomic_write(&out.join("summary.csv"), &summary)?;

    let mut best = f64::INFINITY;
    let rows = result
        .state
        .loss_history
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            best = best.min(l);
            vec![(i + 1).to_string(), l.to_string(), best.to_string()]
        })
        .collect();
    let (history, n_history) = table(&["iteration", "loss", "best_loss"], rows)?;
    atomic_write(&out.join("loss_history.csv"), &history)?;

    let checkpoint = Checkpoint::new(
        w,
        result.density.clone(),
        result.bandwidths,
        result.state.clone(),
    );
    write_checkpoint(&out.join("checkpoint.json"), &checkpoint)?;

    // The output directory is not needed to reproduce a run and would make
    // otherwise identical bundles differ.
    let mut echo = serde_json::to_value(config)?;
    if let Some(obj) = echo.as_object_mut() {
        obj.remove("out");
    }
    write_json(
        &out.join("metadata.json"),
        &json!({
            "artifact": ARTIFACT,
            "version": VERSION,
            "command": "fit",
            "seed": config.em.seed,
            "config": echo,
            "dims": [mask.dims().nx, mask.dims().ny, mask.dims().nz],
            "bandwidths": result.bandwidths,
            "records": {"summary.csv": n_summary, "loss_history.csv": n_history},
        }),
    )
}

fn metric_row(index: usize, m: &Metrics, runtime: Option<f64>) -> Vec<String> {
    let mut row = vec![
        index.to_string(),
        m.fdp.to_string(),
        m.fnp.to_string(),
        m.tp.to_string(),
    ];
    if let Some(t) = runtime {
        row.push(t.to_string());
    }
    row
}

/// `replications.csv` (LIS procedure), `bh_replications.csv`, `summary.csv`
/// and `metadata.json`. With `timing` off, `runtime_s` is left empty.
pub fn write_simulation_bundle(
    out: &Path,
    config: &SimConfig,
    summary: &ReplicationSummary,
    timing: bool,
) -> Result<()> {
    ensure_dir(out)?;
    let rows = summary
        .records
        .iter()
        .map(|r| {
            let mut row = metric_row(r.replication, &r.lis, None);
            row.push(if timing {
                r.runtime_s.to_string()
            } else {
                String::new()
            });
            row
        })
        .collect();
    let (lis, n_lis) = table(&["replication", "fdp", "fnp", "tp", "runtime_s"], rows)?;
    atomic_write(&out.join("replications.csv"), &lis)?;

    let rows = summary
        .records
        .iter()
        .map(|r| metric_row(r.replication, &r.bh, None))
        .collect();
    let (bh, n_bh) = table(&["replication", "fdp", "fnp", "tp"], rows)?;
    atomic_write(&out.join("bh_replications.csv"), &bh)?;

    let mut rows = Vec::new();
    for (method, s) in [("lis", &summary.lis), ("bh", &summary.bh)] {
        for (metric, v) in [
            ("fdp", s.fdp),
            ("fnp", s.fnp),
            ("tp", s.tp),
            ("rejections", s.rejections),
        ] {
            rows.push(vec![
                method.into(),
                metric.into(),
                v.mean.to_string(),
                v.sd.to_string(),
            ]);
        }
    }
    let (table_bytes, n_summary) = table(&["method", "metric", "mean", "sd"], rows)?;
    atomic_write(&out.join("summary.csv"), &table_bytes)?;

    let per_replication: Vec<_> = summary
        .records
        .iter()
        .map(|r| {
            json!({
                "replication": r.replication,
                "signal_proportion": r.signal_proportion,
                "em_iterations": r.em_iterations,
                "lis": r.lis,
                "bh": r.bh,
            })
        })
        .collect();
    write_json(
        &out.join("metadata.json"),
        &json!({
            "artifact": ARTIFACT,
            "version": VERSION,
            "command": "simulate",
            "seed": config.seed,
            "config": config,
            "sd_defined": summary.sd_defined,
            "replications": per_replication,
            "records": {
                "replications.csv": n_lis,
                "bh_replications.csv": n_bh,
                "summary.csv": n_summary,
            },
        }),
    )
}
