//! Budgeted labeling strategies over a scored wild pool. Every strategy spends
//! at most `k` labels and reports the hidden composition of what it labeled.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::tpr_threshold;
use crate::search::{phase1_search, LabeledEntry, LabeledSet, TraceStep, WindowRule};
use crate::wildgen::{LabelOracle, Membership, WildPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Aha,
    Topk,
    Boundary,
    MostCov,
    LeastSem,
    Mixed,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Aha,
        Strategy::Topk,
        Strategy::Boundary,
        Strategy::MostCov,
        Strategy::LeastSem,
        Strategy::Mixed,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Aha => "aha",
            Strategy::Topk => "topk",
            Strategy::Boundary => "boundary",
            Strategy::MostCov => "most-cov",
            Strategy::LeastSem => "least-sem",
            Strategy::Mixed => "mixed",
            Strategy::Random => "random",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{name}`")))
    }

    /// Whether the strategy reads hidden membership tags.
    pub fn uses_hidden_tags(self) -> bool {
        matches!(self, Strategy::MostCov | Strategy::LeastSem | Strategy::Mixed)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleRegion {
    MostCovariate,
    LeastSemantic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub k: usize,
    pub spent: usize,
}

impl Budget {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("budget", "must be > 0"));
        }
        Ok(Self { k, spent: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.k - self.spent
    }

    fn spend(&mut self, n: usize) {
        assert!(self.spent + n <= self.k, "budget overdrawn");
        self.spent += n;
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub labeled: LabeledSet,
    /// Hidden memberships of the labeled examples: `[id, covariate, semantic]`.
    pub composition: [usize; 3],
    pub mu_hat: Option<f64>,
    pub unspent: usize,
    /// Phase-1 draws of the adaptive strategy; empty otherwise.
    pub trace: Vec<TraceStep>,
}

/// Everything a strategy may need beyond the pool.
#[derive(Clone, Copy)]
pub struct SelectContext<'a> {
    pub oracle: &'a dyn LabelOracle,
    pub seed: u64,
    /// OOD scores of `S_in`, for the near-boundary region.
    pub labeled_id_scores: &'a [f64],
    pub window_rule: WindowRule,
}

pub fn select(strategy: Strategy, pool: &WildPool, k: usize, ctx: SelectContext<'_>) -> Result<SelectionResult> {
    match strategy {
        Strategy::Aha => aha_select(pool, k, ctx.oracle, ctx.seed, ctx.window_rule),
        Strategy::Topk => top_k_select(pool, k, ctx.oracle),
        Strategy::Boundary => near_boundary_select(pool, ctx.labeled_id_scores, k, ctx.oracle),
        Strategy::MostCov => oracle_region_select(pool, k, ctx.oracle, OracleRegion::MostCovariate),
        Strategy::LeastSem => oracle_region_select(pool, k, ctx.oracle, OracleRegion::LeastSemantic),
        Strategy::Mixed => oracle_region_select(pool, k, ctx.oracle, OracleRegion::Mixed),
        Strategy::Random => random_select(pool, k, ctx.oracle, ctx.seed),
    }
}

fn check_budget(pool: &WildPool, k: usize) -> Result<Budget> {
    let budget = Budget::new(k)?;
    if k > pool.len() {
        return Err(Error::config("budget", format!("budget {k} exceeds pool size {}", pool.len())));
    }
    Ok(budget)
}

/// Labels pool indices in order, skipping already-labeled ones.
fn label_all(
    pool: &WildPool,
    indices: impl IntoIterator<Item = usize>,
    oracle: &dyn LabelOracle,
    labeled: &mut LabeledSet,
    budget: &mut Budget,
) -> Result<()> {
    for idx in indices {
        let e = &pool.examples[idx];
        if labeled.contains(e.id) {
            continue;
        }
        labeled.insert(LabeledEntry {
            id: e.id,
            score: pool.score_of(idx)?,
            label: oracle.label(e),
        })?;
        budget.spend(1);
    }
    Ok(())
}

fn finish(pool: &WildPool, labeled: LabeledSet, budget: Budget, mu_hat: Option<f64>, trace: Vec<TraceStep>) -> SelectionResult {
    let ids: HashSet<usize> = labeled.iter().map(|e| e.id).collect();
    let mut composition = [0; 3];
    for e in pool.examples.iter().filter(|e| ids.contains(&e.id)) {
        composition[e.membership as usize] += 1;
    }
    SelectionResult {
        labeled,
        composition,
        mu_hat,
        unspent: budget.remaining(),
        trace,
    }
}

/// Splits `want = (a, b)` over sides holding `avail = (x, y)`, shifting any
/// deficit of one side to the other.
fn split_with_deficit(want: (usize, usize), avail: (usize, usize)) -> (usize, usize) {
    let total = want.0 + want.1;
    let a = want.0.min(avail.0);
    let b = (total - a).min(avail.1);
    let a = (total - b).min(avail.0);
    (a, b)
}

/// The adaptive strategy: phase-1 threshold search with `k/2` labels, then the
/// `k/4` nearest unlabeled examples on each side of the identified threshold.
/// Budget unspent in phase 1 is split evenly across the two sides.
pub fn aha_select(
    pool: &WildPool,
    k: usize,
    oracle: &dyn LabelOracle,
    seed: u64,
    rule: WindowRule,
) -> Result<SelectionResult> {
    let mut budget = check_budget(pool, k)?;
    if !k.is_multiple_of(4) {
        return Err(Error::config("budget", format!("adaptive strategy needs a budget divisible by 4, got {k}")));
    }
    let phase1 = phase1_search(pool, k / 2, oracle, seed, rule)?;
    let mut labeled = phase1.labeled;
    budget.spend(labeled.len());
    let mu_hat = phase1.mu_hat;

    let sorted = pool.sorted_scores()?;
    let split = sorted.rank_of(mu_hat);
    let unlabeled = |&&idx: &&usize| !labeled.contains(pool.examples[idx].id);
    let below: Vec<usize> = sorted.order[..split].iter().rev().filter(unlabeled).copied().collect();
    let above: Vec<usize> = sorted.order[split..].iter().filter(unlabeled).copied().collect();

    let rollover = phase1.unspent;
    let want = (k / 4 + rollover / 2, k / 4 + rollover - rollover / 2);
    let (nb, na) = split_with_deficit(want, (below.len(), above.len()));
    if (nb, na) != want {
        log::debug!("phase 2 sides short: wanted {want:?}, labeling ({nb}, {na})");
    }
    let picks: Vec<usize> = below[..nb].iter().chain(&above[..na]).copied().collect();
    label_all(pool, picks, oracle, &mut labeled, &mut budget)?;
    Ok(finish(pool, labeled, budget, Some(mu_hat), phase1.steps))
}

fn by_score_desc(pool: &WildPool) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let scores = (0..pool.len()).map(|i| pool.score_of(i)).collect::<Result<Vec<_>>>()?;
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(pool.examples[a].id.cmp(&pool.examples[b].id)));
    Ok(idx)
}

/// The `k` largest-score examples; ties go to the smaller id.
pub fn top_k_select(pool: &WildPool, k: usize, oracle: &dyn LabelOracle) -> Result<SelectionResult> {
    let mut budget = check_budget(pool, k)?;
    let order = by_score_desc(pool)?;
    let mut labeled = LabeledSet::new();
    label_all(pool, order.into_iter().take(k), oracle, &mut labeled, &mut budget)?;
    Ok(finish(pool, labeled, budget, None, Vec::new()))
}

/// Nearest examples on each side of the 95%-TPR threshold of the `S_in`
/// scores: `k/2` strictly below it and the rest at or above it.
pub fn near_boundary_select(
    pool: &WildPool,
    labeled_id_scores: &[f64],
    k: usize,
    oracle: &dyn LabelOracle,
) -> Result<SelectionResult> {
    let mut budget = check_budget(pool, k)?;
    if labeled_id_scores.is_empty() {
        return Err(Error::Input("near-boundary selection needs labeled ID scores".into()));
    }
    let lambda = tpr_threshold(labeled_id_scores, 0.95)?;
    let mut below = Vec::new();
    let mut above = Vec::new();
    for i in 0..pool.len() {
        let s = pool.score_of(i)?;
        if s < lambda {
            below.push((lambda - s, pool.examples[i].id, i));
        } else {
            above.push((s - lambda, pool.examples[i].id, i));
        }
    }
    let near = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    below.sort_by(near);
    above.sort_by(near);
    let (nb, na) = split_with_deficit((k / 2, k - k / 2), (below.len(), above.len()));
    let picks = below[..nb].iter().chain(&above[..na]).map(|t| t.2);
    let mut labeled = LabeledSet::new();
    label_all(pool, picks.collect::<Vec<_>>(), oracle, &mut labeled, &mut budget)?;
    Ok(finish(pool, labeled, budget, Some(lambda), Vec::new()))
}

fn membership_scores(pool: &WildPool, m: Membership) -> Result<Vec<f64>> {
    (0..pool.len())
        .filter(|&i| pool.examples[i].membership == m)
        .map(|i| pool.score_of(i))
        .collect()
}

/// Ranked candidates of the most-covariate region: highest scores first among
/// examples at or below the largest covariate score.
fn most_covariate_ranking(pool: &WildPool) -> Result<Vec<usize>> {
    let cov = membership_scores(pool, Membership::Covariate)?;
    let cap = cov
        .into_iter()
        .reduce(f64::max)
        .ok_or_else(|| Error::config("strategy", "most-covariate region needs covariate examples in the pool"))?;
    let order = by_score_desc(pool)?;
    let mut out = Vec::with_capacity(order.len());
    for i in order {
        if pool.score_of(i)? <= cap {
            out.push(i);
        }
    }
    Ok(out)
}

/// Ranked candidates of the least-semantic region: lowest scores first among
/// examples at or above the smallest semantic score.
fn least_semantic_ranking(pool: &WildPool) -> Result<Vec<usize>> {
    let sem = membership_scores(pool, Membership::Semantic)?;
    let floor = sem
        .into_iter()
        .reduce(f64::min)
        .ok_or_else(|| Error::config("strategy", "least-semantic region needs semantic examples in the pool"))?;
    let sorted = pool.sorted_scores()?;
    let start = sorted.scores.partition_point(|&s| s < floor);
    Ok(sorted.order[start..].to_vec())
}

/// Regions defined from hidden tags; simulator only.
pub fn oracle_region_select(
    pool: &WildPool,
    k: usize,
    oracle: &dyn LabelOracle,
    mode: OracleRegion,
) -> Result<SelectionResult> {
    let mut budget = check_budget(pool, k)?;
    let picks: Vec<usize> = match mode {
        OracleRegion::MostCovariate => most_covariate_ranking(pool)?.into_iter().take(k).collect(),
        OracleRegion::LeastSemantic => least_semantic_ranking(pool)?.into_iter().take(k).collect(),
        OracleRegion::Mixed => {
            let cov = most_covariate_ranking(pool)?;
            let sem = least_semantic_ranking(pool)?;
            let mut seen = HashSet::new();
            let mut picks: Vec<usize> = Vec::with_capacity(k);
            for &i in cov.iter().take(k / 2).chain(sem.iter().take(k - k / 2)) {
                if seen.insert(i) {
                    picks.push(i);
                }
            }
            // Backfill duplicates alternately from both rankings.
            let mut rest = [cov[(k / 2).min(cov.len())..].iter(), sem[(k - k / 2).min(sem.len())..].iter()];
            let mut side = 0;
            while picks.len() < k {
                match rest[side].find(|i| !seen.contains(*i)).or_else(|| rest[1 - side].find(|i| !seen.contains(*i))) {
                    Some(&i) => {
                        seen.insert(i);
                        picks.push(i);
                    }
                    None => break,
                }
                side = 1 - side;
            }
            picks
        }
    };
    let mut labeled = LabeledSet::new();
    label_all(pool, picks, oracle, &mut labeled, &mut budget)?;
    Ok(finish(pool, labeled, budget, None, Vec::new()))
}

/// Uniform sample of `k` examples without replacement.
pub fn random_select(pool: &WildPool, k: usize, oracle: &dyn LabelOracle, seed: u64) -> Result<SelectionResult> {
    let mut budget = check_budget(pool, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
    picks.sort_unstable();
    let mut labeled = LabeledSet::new();
    label_all(pool, picks, oracle, &mut labeled, &mut budget)?;
    Ok(finish(pool, labeled, budget, None, Vec::new()))
}

/// Number of labeled examples whose label disagrees with thresholding at `lambda`.
pub fn corrections_at(labeled: &LabeledSet, lambda: f64) -> usize {
    labeled
        .iter()
        .filter(|e| (e.score >= lambda) != e.label.is_ood())
        .count()
}
