//! Evaluation metrics. Scores are OOD-oriented: larger means more OOD.

use serde::{Deserialize, Serialize};

use super::model::{classify, ClassifierParams, DetectorParams};
use crate::error::{Error, Result};
use crate::wildgen::{LabeledPoint, TestSplits};

const COUNT_TOL: f64 = 1e-9;

fn check(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Input(format!("{name} scores are empty")));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Input(format!("{name} scores contain NaN")));
    }
    Ok(())
}

/// Smallest ID score `v` with `#{id < v} >= ceil(tpr * n)`; when no ID value
/// qualifies (ties at the top), the next float above the maximum.
pub fn tpr_threshold(id_scores: &[f64], tpr: f64) -> Result<f64> {
    check("ID", id_scores)?;
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::Input(format!("tpr must lie in (0, 1], got {tpr}")));
    }
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let need = (tpr * sorted.len() as f64 - COUNT_TOL).ceil() as usize;
    // sorted[need] has at least `need` entries before it; only strictly
    // smaller ones count, so step past a run of ties.
    let mut i = need;
    while i < sorted.len() && i > 0 && sorted[i - 1] == sorted[i] {
        i += 1;
    }
    Ok(match sorted.get(i) {
        Some(&v) if need > 0 => v,
        Some(_) => sorted[0],
        None => sorted[sorted.len() - 1].next_up(),
    })
}

/// FPR at the TPR threshold: fraction of semantic scores strictly below it.
pub fn fpr_at_tpr(id_scores: &[f64], sem_scores: &[f64], tpr: f64) -> Result<(f64, f64)> {
    check("semantic", sem_scores)?;
    let threshold = tpr_threshold(id_scores, tpr)?;
    let kept = sem_scores.iter().filter(|&&s| s < threshold).count();
    Ok((kept as f64 / sem_scores.len() as f64, threshold))
}

/// `P(sem > id) + P(sem = id) / 2`, from exact integer pair counts.
pub fn auroc(id_scores: &[f64], sem_scores: &[f64]) -> Result<f64> {
    check("ID", id_scores)?;
    check("semantic", sem_scores)?;
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut doubled: u128 = 0;
    for &s in sem_scores {
        let below = sorted.partition_point(|&v| v < s);
        let not_above = sorted.partition_point(|&v| v <= s);
        doubled += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = 2 * id_scores.len() as u128 * sem_scores.len() as u128;
    Ok(doubled as f64 / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id_acc: Option<f64>,
    pub ood_acc: Option<f64>,
    pub fpr95: Option<f64>,
    pub auroc: Option<f64>,
    /// Threshold at which `fpr95` was measured.
    pub threshold: Option<f64>,
}

fn accuracy(f: &ClassifierParams, split: &[LabeledPoint]) -> Result<Option<f64>> {
    if split.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for p in split {
        let want = p
            .label
            .class_index()
            .ok_or_else(|| Error::Input("test point without a class label".into()))?;
        if classify(f, &p.features)? as usize == want + 1 {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / split.len() as f64))
}

/// ID accuracy, covariate accuracy, and FPR95/AUROC of `-g` on ID versus
/// semantic points. A missing split leaves its metrics absent.
pub fn evaluate(f: &ClassifierParams, g: &DetectorParams, tests: &TestSplits) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        id_acc: accuracy(f, &tests.id)?,
        ood_acc: accuracy(f, &tests.covariate)?,
        ..Default::default()
    };
    if !tests.id.is_empty() && !tests.semantic.is_empty() {
        let score = |ps: &[LabeledPoint]| ps.iter().map(|p| g.ood_score(&p.features)).collect::<Result<Vec<_>>>();
        let id = score(&tests.id)?;
        let sem = score(&tests.semantic)?;
        let (fpr, thr) = fpr_at_tpr(&id, &sem, 0.95)?;
        report.fpr95 = Some(fpr);
        report.threshold = Some(thr);
        report.auroc = Some(auroc(&id, &sem)?);
    }
    Ok(report)
}
