//! Synthetic wild pools with known ground truth.
//!
//! A wild pool mixes in-distribution (ID) examples with covariate-shifted and
//! semantic OOD examples in proportions `(1 - pi_c - pi_s, pi_c, pi_s)`. Two
//! generators exist: [`sample_score_wild`] draws scalar OOD scores directly
//! from 1-D Gaussian mixtures, and [`sample_feature_wild`] draws feature
//! points from Gaussian blobs which are scored later by a classifier.
//!
//! Membership tags and class labels are hidden from the selection strategies;
//! only the [`oracle_label`] function and the oracle labeling regions read them.

mod analytic;
mod feature;
mod mixture;
mod score;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analytic::{analytic_max_ambiguity, MaxAmbiguity, MIN_GRID_RESOLUTION};
pub use feature::{sample_feature_wild, Blob, FeatureMixtureSpec, FeatureSample, LabeledPoint, TestSplits};
pub use mixture::{GaussianComponent, GaussianMixture};
pub use score::{sample_score_wild, ScoreMixtureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Id,
    Covariate,
    Semantic,
}

impl Membership {
    pub const ALL: [Membership; 3] = [Membership::Id, Membership::Covariate, Membership::Semantic];

    pub fn as_str(self) -> &'static str {
        match self {
            Membership::Id => "id",
            Membership::Covariate => "covariate",
            Membership::Semantic => "semantic",
        }
    }
}

/// A ground-truth label as a human would give it: a class in `1..=K`, or the
/// distinguished OOD symbol for semantic examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HumanLabel {
    Class(u32),
    Ood,
}

impl HumanLabel {
    pub fn is_ood(self) -> bool {
        matches!(self, HumanLabel::Ood)
    }

    /// Zero-based class index, `None` for OOD.
    pub fn class_index(self) -> Option<usize> {
        match self {
            HumanLabel::Class(c) => Some(c as usize - 1),
            HumanLabel::Ood => None,
        }
    }
}

impl std::fmt::Display for HumanLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HumanLabel::Class(c) => write!(f, "{c}"),
            HumanLabel::Ood => f.write_str("OOD"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildExample {
    pub id: usize,
    /// Feature point; `None` in score-space pools.
    pub features: Option<Vec<f64>>,
    /// Cached OOD score, larger = more semantically OOD. `None` until a
    /// feature-space pool has been scored.
    pub score: Option<f64>,
    pub membership: Membership,
    pub class_label: HumanLabel,
}

/// The generating spec of a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoolSpec {
    Score(ScoreMixtureSpec),
    Feature(FeatureMixtureSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildPool {
    pub examples: Vec<WildExample>,
    pub spec: PoolSpec,
    pub seed: u64,
}

/// Example indices of a scored pool ordered by `(score, id)` ascending.
#[derive(Debug, Clone)]
pub struct SortedScores {
    /// Pool indices in ascending score order.
    pub order: Vec<usize>,
    /// Scores in the same order.
    pub scores: Vec<f64>,
}

impl SortedScores {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Positions `[lo, hi)` of examples with `low <= score <= high`.
    pub fn range(&self, low: f64, high: f64) -> (usize, usize) {
        let lo = self.scores.partition_point(|&s| s < low);
        let hi = self.scores.partition_point(|&s| s <= high);
        (lo, hi.max(lo))
    }

    /// Number of scores `<= x`.
    pub fn rank_of(&self, x: f64) -> usize {
        self.scores.partition_point(|&s| s <= x)
    }
}

impl WildPool {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn is_feature_mode(&self) -> bool {
        matches!(self.spec, PoolSpec::Feature(_))
    }

    pub fn is_scored(&self) -> bool {
        self.examples.iter().all(|e| e.score.is_some())
    }

    pub fn score_of(&self, index: usize) -> Result<f64> {
        self.examples[index]
            .score
            .ok_or_else(|| Error::Usage(format!("example {} has not been scored", self.examples[index].id)))
    }

    /// Ascending score order, ties broken by id.
    pub fn sorted_scores(&self) -> Result<SortedScores> {
        let mut keyed = Vec::with_capacity(self.examples.len());
        for (i, e) in self.examples.iter().enumerate() {
            let s = e
                .score
                .ok_or_else(|| Error::Usage(format!("pool is not scored (example {})", e.id)))?;
            keyed.push((s, e.id, i));
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(SortedScores {
            order: keyed.iter().map(|k| k.2).collect(),
            scores: keyed.iter().map(|k| k.0).collect(),
        })
    }

    /// Counts of (ID, covariate, semantic) members.
    pub fn membership_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for e in &self.examples {
            counts[e.membership as usize] += 1;
        }
        counts
    }

    /// Writes the columnar text form: `id,score` and, when `reveal_truth`
    /// is set, `membership,class_label` as well.
    pub fn write_columns<W: Write>(&self, mut w: W, reveal_truth: bool) -> std::io::Result<()> {
        if reveal_truth {
            writeln!(w, "id,score,membership,class_label")?;
        } else {
            writeln!(w, "id,score")?;
        }
        for e in &self.examples {
            let score = e.score.map(|s| s.to_string()).unwrap_or_default();
            if reveal_truth {
                writeln!(w, "{},{},{},{}", e.id, score, e.membership.as_str(), e.class_label)?;
            } else {
                writeln!(w, "{},{}", e.id, score)?;
            }
        }
        Ok(())
    }

    pub fn write_columns_to(&self, path: &Path, reveal_truth: bool) -> Result<()> {
        let mut buf = Vec::new();
        self.write_columns(&mut buf, reveal_truth)
            .map_err(|e| Error::io(path, e))?;
        crate::harness::write_atomic(path, &buf)
    }
}

/// The simulated human: OOD for semantic examples, otherwise the hidden class.
pub fn oracle_label(example: &WildExample) -> HumanLabel {
    match example.membership {
        Membership::Semantic => HumanLabel::Ood,
        _ => example.class_label,
    }
}

/// Source of human labels for the labeling strategies.
pub trait LabelOracle {
    fn label(&self, example: &WildExample) -> HumanLabel;
}

/// Labels examples from their own hidden tags via [`oracle_label`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedOracle;

impl LabelOracle for SimulatedOracle {
    fn label(&self, example: &WildExample) -> HumanLabel {
        oracle_label(example)
    }
}

impl<F: Fn(&WildExample) -> HumanLabel> LabelOracle for F {
    fn label(&self, example: &WildExample) -> HumanLabel {
        self(example)
    }
}

pub(crate) fn check_fractions(spec_name: &str, counts: [usize; 3], pi_c: f64, pi_s: f64) {
    let n: usize = counts.iter().sum();
    if n < 1000 {
        return;
    }
    let expected = [1.0 - pi_c - pi_s, pi_c, pi_s];
    for (m, (&c, &p)) in Membership::ALL.iter().zip(counts.iter().zip(expected.iter())) {
        let frac = c as f64 / n as f64;
        if (frac - p).abs() > 0.05 {
            log::warn!(
                "{spec_name}: {} fraction {frac:.4} is more than 5 points from {p:.4}",
                m.as_str()
            );
        }
    }
}

pub(crate) fn validate_weights(prefix: &str, pi_c: f64, pi_s: f64) -> Result<()> {
    for (name, v) in [("pi_c", pi_c), ("pi_s", pi_s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config(format!("{prefix}.{name}"), format!("must lie in [0, 1], got {v}")));
        }
    }
    if pi_c + pi_s > 1.0 + 1e-12 {
        return Err(Error::config(
            format!("{prefix}.pi_s"),
            format!("pi_c + pi_s = {} exceeds 1", pi_c + pi_s),
        ));
    }
    Ok(())
}
