//! Report files: one row per run and one per (strategy, budget).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use super::run::{Aggregate, RunReport, Stat};
use super::write_atomic;
use crate::error::{Error, Result};

/// Flat run row; absent values become empty CSV cells or JSON nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRow {
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub ood_acc: Option<f64>,
    pub id_acc: Option<f64>,
    pub fpr95: Option<f64>,
    pub auroc: Option<f64>,
    pub n_id: Option<usize>,
    pub n_cov: Option<usize>,
    pub n_sem: Option<usize>,
    pub mu_hat: Option<f64>,
    pub unspent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRowJson {
    #[serde(flatten)]
    pub row: RunRow,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateRow {
    pub strategy: String,
    pub budget: usize,
    pub runs: usize,
    pub failed: usize,
    pub ood_acc: Option<f64>,
    pub ood_acc_se: Option<f64>,
    pub id_acc: Option<f64>,
    pub id_acc_se: Option<f64>,
    pub fpr95: Option<f64>,
    pub fpr95_se: Option<f64>,
    pub auroc: Option<f64>,
    pub auroc_se: Option<f64>,
    pub n_id: Option<f64>,
    pub n_id_se: Option<f64>,
    pub n_cov: Option<f64>,
    pub n_cov_se: Option<f64>,
    pub n_sem: Option<f64>,
    pub n_sem_se: Option<f64>,
    pub mu_hat: Option<f64>,
    pub mu_hat_se: Option<f64>,
    pub unspent: Option<f64>,
    pub unspent_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub error: String,
}

fn split(s: Option<Stat>) -> (Option<f64>, Option<f64>) {
    (s.map(|s| s.mean), s.and_then(|s| s.stderr))
}

impl From<&Aggregate> for AggregateRow {
    fn from(a: &Aggregate) -> Self {
        let (ood_acc, ood_acc_se) = split(a.ood_acc);
        let (id_acc, id_acc_se) = split(a.id_acc);
        let (fpr95, fpr95_se) = split(a.fpr95);
        let (auroc, auroc_se) = split(a.auroc);
        let (n_id, n_id_se) = split(a.n_id);
        let (n_cov, n_cov_se) = split(a.n_cov);
        let (n_sem, n_sem_se) = split(a.n_sem);
        let (mu_hat, mu_hat_se) = split(a.mu_hat);
        let (unspent, unspent_se) = split(a.unspent);
        Self {
            strategy: a.strategy.name().to_string(),
            budget: a.budget,
            runs: a.runs,
            failed: a.failed,
            ood_acc,
            ood_acc_se,
            id_acc,
            id_acc_se,
            fpr95,
            fpr95_se,
            auroc,
            auroc_se,
            n_id,
            n_id_se,
            n_cov,
            n_cov_se,
            n_sem,
            n_sem_se,
            mu_hat,
            mu_hat_se,
            unspent,
            unspent_se,
        }
    }
}

pub fn run_rows(report: &RunReport) -> Vec<RunRowJson> {
    report
        .cells
        .iter()
        .map(|c| RunRowJson {
            row: RunRow {
                strategy: c.strategy.name().to_string(),
                budget: c.budget,
                seed: c.seed,
                ood_acc: c.metrics.ood_acc,
                id_acc: c.metrics.id_acc,
                fpr95: c.metrics.fpr95,
                auroc: c.metrics.auroc,
                n_id: c.composition.map(|x| x[0]),
                n_cov: c.composition.map(|x| x[1]),
                n_sem: c.composition.map(|x| x[2]),
                mu_hat: c.mu_hat,
                unspent: c.unspent,
            },
            error: c.error.clone(),
        })
        .collect()
}

pub(crate) fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Contract(format!("csv serialisation failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Contract(format!("csv flush failed: {e}")))
}

pub const RUN_COLUMNS: [&str; 12] = [
    "strategy", "budget", "seed", "oodAcc", "idAcc", "fpr95", "auroc", "nId", "nCov", "nSem", "muHat", "unspent",
];

const AGGREGATE_COLUMNS: [&str; 22] = [
    "strategy", "budget", "runs", "failed", "oodAcc", "oodAccSe", "idAcc", "idAccSe", "fpr95", "fpr95Se", "auroc",
    "aurocSe", "nId", "nIdSe", "nCov", "nCovSe", "nSem", "nSemSe", "muHat", "muHatSe", "unspent", "unspentSe",
];

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out =
        serde_json::to_vec_pretty(value).map_err(|e| Error::Contract(format!("json serialisation failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `runs.<ext>`, `aggregate.<ext>` and `failures.csv` into `dir`.
/// Returns the written paths.
pub fn emit_report(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.cells.is_empty() {
        return Err(Error::Contract("empty report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = run_rows(report);
    let aggregates: Vec<AggregateRow> = report.aggregates.iter().map(AggregateRow::from).collect();
    let ext = format.extension();
    let runs_path = dir.join(format!("runs.{ext}"));
    let agg_path = dir.join(format!("aggregate.{ext}"));
    match format {
        ReportFormat::Csv => {
            write_atomic(&runs_path, &csv_bytes(rows.iter().map(|r| &r.row), &RUN_COLUMNS)?)?;
            write_atomic(&agg_path, &csv_bytes(&aggregates, &AGGREGATE_COLUMNS)?)?;
        }
        ReportFormat::Json => {
            write_atomic(&runs_path, &json_bytes(&rows)?)?;
            write_atomic(&agg_path, &json_bytes(&aggregates)?)?;
        }
    }
    let failures = report.failures().map(|c| FailureRow {
        strategy: c.strategy.name().to_string(),
        budget: c.budget,
        seed: c.seed,
        error: c.error.clone().unwrap_or_default(),
    });
    let failures_path = dir.join("failures.csv");
    write_atomic(&failures_path, &csv_bytes(failures, &["strategy", "budget", "seed", "error"])?)?;
    Ok(vec![runs_path, agg_path, failures_path])
}

/// Phase-1 steps of every cell, one JSON object per line.
pub fn emit_trace(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Line<'a> {
        strategy: &'a str,
        budget: usize,
        seed: u64,
        #[serde(flatten)]
        step: &'a crate::search::TraceStep,
    }
    let mut out = Vec::new();
    for c in &report.cells {
        for step in &c.trace {
            let line = Line {
                strategy: c.strategy.name(),
                budget: c.budget,
                seed: c.seed,
                step,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::Contract(e.to_string()))?;
            out.push(b'\n');
        }
    }
    let path = dir.join("trace.jsonl");
    write_atomic(&path, &out)?;
    Ok(path)
}

/// Per-epoch training losses of every cell.
pub fn emit_losses(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Row<'a> {
        strategy: &'a str,
        budget: usize,
        seed: u64,
        epoch: usize,
        ce: f64,
        detector: f64,
        total: f64,
    }
    let rows = report.cells.iter().flat_map(|c| {
        c.loss_trace.iter().map(move |l| Row {
            strategy: c.strategy.name(),
            budget: c.budget,
            seed: c.seed,
            epoch: l.epoch,
            ce: l.ce,
            detector: l.detector,
            total: l.total,
        })
    });
    let path = dir.join("losses.csv");
    write_atomic(
        &path,
        &csv_bytes(rows, &["strategy", "budget", "seed", "epoch", "ce", "detector", "total"])?,
    )?;
    Ok(path)
}
