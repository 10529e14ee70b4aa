//! Experiment orchestration: config, seeded cell execution and report files.

mod config;
mod histogram;
mod report;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, Overrides, ReportFormat};
pub use histogram::{emit_histograms, Histogram};
pub use report::{emit_losses, emit_report, emit_trace, run_rows, AggregateRow, FailureRow, RunRow, RunRowJson, RUN_COLUMNS};
pub use run::{
    aggregate, cell_seed, derive_seed, pool_seed, prepare_seed, run_experiment, Aggregate, CellResult, PreparedSeed,
    RunReport, Stat,
};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Everything `wildlabel run` writes, besides the report itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct Extras {
    pub trace: bool,
    pub reveal_truth: bool,
}

/// Writes report, histograms, pool columns and, on request, traces.
pub fn write_outputs(cfg: &ExperimentConfig, report: &RunReport, extras: Extras) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    let mut written = emit_report(report, dir, cfg.format)?;
    for prep in &report.pools {
        let h = emit_histograms(&prep.pool, cfg.histogram_bins)?;
        let path = dir.join(format!("histogram_seed{}.csv", prep.seed));
        h.write_csv(&path)?;
        written.push(path);
        let path = dir.join(format!("pool_seed{}.csv", prep.seed));
        prep.pool.write_columns_to(&path, extras.reveal_truth)?;
        written.push(path);
    }
    if extras.trace {
        written.push(emit_trace(report, dir)?);
        written.push(emit_losses(report, dir)?);
    }
    Ok(written)
}
