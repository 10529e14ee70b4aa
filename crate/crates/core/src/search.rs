//! Noisy binary search for the maximum-ambiguity threshold.
//!
//! Labels are +1 (a class label) or -1 (OOD). The empirical objective at a
//! threshold `s` is the sum of those signs over labeled examples scoring at
//! most `s`; its maximiser estimates the point where semantic OOD density
//! overtakes the ID plus covariate density. The search keeps a confidence
//! interval of pool scores and shrinks its example count by a factor `c`
//! after every label, so that `k/2` labels reduce `N` examples to a handful.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::wildgen::{LabelOracle, SortedScores, WildPool};

pub use crate::wildgen::HumanLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledEntry {
    pub id: usize,
    pub score: f64,
    pub label: HumanLabel,
}

impl LabeledEntry {
    fn sign(&self) -> i64 {
        if self.label.is_ood() {
            -1
        } else {
            1
        }
    }
}

/// Human-labeled examples, kept sorted by `(score, id)`.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    entries: Vec<LabeledEntry>,
    by_id: HashMap<usize, HumanLabel>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LabeledEntry>) -> Result<Self> {
        let mut set = Self::new();
        for e in entries {
            set.insert(e)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, entry: LabeledEntry) -> Result<()> {
        if !entry.score.is_finite() {
            return Err(Error::Input(format!("example {} has non-finite score", entry.id)));
        }
        if self.by_id.insert(entry.id, entry.label).is_some() {
            return Err(Error::Contract(format!("example {} is already labeled", entry.id)));
        }
        let pos = self
            .entries
            .partition_point(|e| (e.score, e.id) < (entry.score, entry.id));
        self.entries.insert(pos, entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn label_of(&self, id: usize) -> Option<HumanLabel> {
        self.by_id.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledEntry> {
        self.entries.iter()
    }
}

/// Score interval `[low, high]`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfInterval {
    #[serde(serialize_with = "finite_or_str")]
    pub low: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub high: f64,
}

fn finite_or_str<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

impl ConfInterval {
    pub const FULL: ConfInterval = ConfInterval {
        low: f64::NEG_INFINITY,
        high: f64::INFINITY,
    };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        if low.is_nan() || high.is_nan() || low > high {
            return Err(Error::Input(format!("invalid interval [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, score: f64) -> bool {
        self.low <= score && score <= self.high
    }

    pub fn is_within(&self, outer: &ConfInterval) -> bool {
        outer.low <= self.low && self.high <= outer.high
    }
}

/// Per-update shrink factor `c = N^(2/k)`, so that `c^(k/2) = N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShrinkFactor(f64);

impl ShrinkFactor {
    /// `pool_size` is `|S_wild|`, `total_budget` the full labeling budget `k`.
    pub fn new(pool_size: usize, total_budget: usize) -> Result<Self> {
        if pool_size < 2 {
            return Err(Error::config("pool_size", "shrink factor needs at least 2 pool examples"));
        }
        if total_budget < 2 {
            return Err(Error::config("budget", "shrink factor needs a budget of at least 2"));
        }
        Ok(Self((pool_size as f64).powf(2.0 / total_budget as f64)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Width `j - i` of the next window over `m` in-interval examples.
    fn window(self, m: usize) -> usize {
        ((m as f64 / self.0 + 1e-9).floor() as usize).max(1)
    }
}

/// How `conf_update` ranks candidate windows by their endpoint objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowRule {
    /// Maximise `min(L(i), L(j))`. Only labels near the window ends can move
    /// it, so with `c` close to 1 the interval drifts to the centre on ties.
    KeepMax,
    /// Minimise `max(L(i), L(j))`: a net ID excess inside the interval trims
    /// the low end, a net OOD excess the high end.
    #[default]
    Literal,
}

impl WindowRule {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "keep-max" => Ok(WindowRule::KeepMax),
            "literal" => Ok(WindowRule::Literal),
            other => Err(Error::config("window_rule", format!("unknown rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Argmax {
    pub mu_hat: f64,
    pub value: i64,
}

/// Median of an ascending list.
pub fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Candidate thresholds and their objective values: a sentinel below the
/// lowest labeled score, midpoints between consecutive distinct labeled
/// scores, and a sentinel above the highest.
pub fn objective_candidates(labeled: &LabeledSet) -> Vec<(f64, i64)> {
    let entries = labeled.entries();
    if entries.is_empty() {
        return Vec::new();
    }
    // (distinct score, summed sign)
    let mut groups: Vec<(f64, i64)> = Vec::new();
    for e in entries {
        match groups.last_mut() {
            Some((s, v)) if *s == e.score => *v += e.sign(),
            _ => groups.push((e.score, e.sign())),
        }
    }
    let first = groups[0].0;
    let last = groups[groups.len() - 1].0;
    let pad = if groups.len() > 1 {
        0.5 * (last - first) / (groups.len() - 1) as f64
    } else {
        0.5
    };

    let mut out = Vec::with_capacity(groups.len() + 1);
    out.push((first - pad, 0));
    let mut running = 0;
    for (g, next) in groups.iter().zip(groups.iter().skip(1)) {
        running += g.1;
        out.push((0.5 * (g.0 + next.0), running));
    }
    running += groups[groups.len() - 1].1;
    out.push((last + pad, running));
    out
}

/// Maximiser of the empirical objective. Ties go to the candidate closest to
/// the median of `wild_scores` (the lower one if equidistant). An empty
/// labeled set yields `(median, 0)`.
pub fn empirical_argmax(labeled: &LabeledSet, wild_scores: &[f64]) -> Result<Argmax> {
    if let Some(w) = wild_scores.windows(2).position(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) {
        return Err(Error::Contract(format!("wild scores are not sorted at position {w}")));
    }
    let median = median_sorted(wild_scores).ok_or_else(|| Error::Input("no wild scores".into()))?;
    let candidates = objective_candidates(labeled);
    let Some(best) = candidates.iter().map(|c| c.1).max() else {
        return Ok(Argmax {
            mu_hat: median,
            value: 0,
        });
    };
    let mu_hat = candidates
        .iter()
        .filter(|c| c.1 == best)
        .map(|c| c.0)
        .min_by(|a, b| (a - median).abs().total_cmp(&(b - median).abs()).then(a.total_cmp(b)))
        .expect("at least one candidate attains the maximum");
    Ok(Argmax { mu_hat, value: best })
}

/// Shrinks `interval` using the labels inside it. The in-interval examples
/// `x_(0..m)` are ordered by score; among windows `(i, i + w)` with
/// `w = max(1, floor(m / c))` the rule picks one, ties going to the window
/// whose centre is nearest the interval centre.
pub fn conf_update(
    labeled: &LabeledSet,
    pool: &WildPool,
    interval: ConfInterval,
    c: ShrinkFactor,
    rule: WindowRule,
) -> Result<ConfInterval> {
    let sorted = pool.sorted_scores()?;
    conf_update_sorted(labeled, pool, &sorted, interval, c, rule)
}

pub(crate) fn conf_update_sorted(
    labeled: &LabeledSet,
    pool: &WildPool,
    sorted: &SortedScores,
    interval: ConfInterval,
    c: ShrinkFactor,
    rule: WindowRule,
) -> Result<ConfInterval> {
    let (lo, hi) = sorted.range(interval.low, interval.high);
    let m = hi - lo;
    if m == 0 {
        return Err(Error::IntervalExhausted {
            low: interval.low,
            high: interval.high,
        });
    }
    let w = c.window(m);
    if w >= m {
        return Ok(interval);
    }

    let mut prefix = Vec::with_capacity(m);
    let mut running = 0i64;
    for &idx in &sorted.order[lo..hi] {
        running += match labeled.label_of(pool.examples[idx].id) {
            Some(HumanLabel::Ood) => -1,
            Some(_) => 1,
            None => 0,
        };
        prefix.push(running);
    }

    // Twice the centre, to stay in integers.
    let centre2 = m - 1;
    let mut best: Option<(i64, usize, usize)> = None;
    for i in 0..m - w {
        let j = i + w;
        let key = match rule {
            WindowRule::KeepMax => prefix[i].min(prefix[j]),
            WindowRule::Literal => -prefix[i].max(prefix[j]),
        };
        let dist = (i + j).abs_diff(centre2);
        let better = match best {
            None => true,
            Some((k, d, _)) => key > k || (key == k && dist < d),
        };
        if better {
            best = Some((key, dist, i));
        }
    }
    let (_, _, i) = best.expect("at least one window");
    ConfInterval::new(sorted.scores[lo + i], sorted.scores[lo + i + w])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub drawn_id: usize,
    pub label: HumanLabel,
    pub interval: ConfInterval,
    pub in_interval: usize,
}

#[derive(Debug, Clone)]
pub struct Phase1Result {
    pub mu_hat: f64,
    pub objective: i64,
    pub labeled: LabeledSet,
    /// Interval before the first draw followed by the interval after each update.
    pub intervals: Vec<ConfInterval>,
    pub steps: Vec<TraceStep>,
    /// Budget left because the interval ran out of unlabeled examples.
    pub unspent: usize,
    pub shrink: ShrinkFactor,
}

/// Phase 1 of the adaptive strategy: draw an unlabeled example uniformly from
/// the current interval, label it, shrink the interval; repeat `budget_half`
/// times or until the interval holds no unlabeled example.
pub fn phase1_search(
    pool: &WildPool,
    budget_half: usize,
    oracle: &dyn LabelOracle,
    seed: u64,
    rule: WindowRule,
) -> Result<Phase1Result> {
    if budget_half == 0 {
        return Err(Error::config("budget", "phase-1 budget must be >= 1"));
    }
    if budget_half > pool.len() {
        return Err(Error::config(
            "budget",
            format!("phase-1 budget {budget_half} exceeds pool size {}", pool.len()),
        ));
    }
    let shrink = ShrinkFactor::new(pool.len(), 2 * budget_half)?;
    let sorted = pool.sorted_scores()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labeled = LabeledSet::new();
    let mut interval = ConfInterval::FULL;
    let mut intervals = vec![interval];
    let mut steps = Vec::with_capacity(budget_half);
    let mut candidates = Vec::new();

    for t in 1..=budget_half {
        let (lo, hi) = sorted.range(interval.low, interval.high);
        candidates.clear();
        candidates.extend(
            sorted.order[lo..hi]
                .iter()
                .copied()
                .filter(|&idx| !labeled.contains(pool.examples[idx].id)),
        );
        if candidates.is_empty() {
            log::debug!("phase 1 interval exhausted after {} labels", t - 1);
            break;
        }
        let idx = candidates[rng.random_range(0..candidates.len())];
        let example = &pool.examples[idx];
        let label = oracle.label(example);
        labeled.insert(LabeledEntry {
            id: example.id,
            score: pool.score_of(idx)?,
            label,
        })?;
        interval = conf_update_sorted(&labeled, pool, &sorted, interval, shrink, rule)?;
        let (lo, hi) = sorted.range(interval.low, interval.high);
        intervals.push(interval);
        steps.push(TraceStep {
            t,
            drawn_id: example.id,
            label,
            interval,
            in_interval: hi - lo,
        });
    }

    let Argmax { mu_hat, value } = empirical_argmax(&labeled, &sorted.scores)?;
    Ok(Phase1Result {
        mu_hat,
        objective: value,
        unspent: budget_half - labeled.len(),
        labeled,
        intervals,
        steps,
        shrink,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::wildgen::{HumanLabel::*, Membership, PoolSpec, ScoreMixtureSpec, SimulatedOracle, WildExample};
    use proptest::prelude::*;

    fn set(items: &[(f64, HumanLabel)]) -> LabeledSet {
        LabeledSet::from_entries(items.iter().enumerate().map(|(id, &(score, label))| LabeledEntry {
            id,
            score,
            label,
        }))
        .unwrap()
    }

    /// Independent oracle: direct count for each candidate threshold.
    fn brute_force(labeled: &[(f64, HumanLabel)], wild: &[f64]) -> (f64, i64) {
        let median = median_sorted(wild).unwrap();
        if labeled.is_empty() {
            return (median, 0);
        }
        let mut distinct: Vec<f64> = labeled.iter().map(|p| p.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let d = distinct.len();
        let pad = if d > 1 { 0.5 * (distinct[d - 1] - distinct[0]) / (d - 1) as f64 } else { 0.5 };
        let mut thresholds = vec![distinct[0] - pad];
        for k in 0..d - 1 {
            thresholds.push(0.5 * (distinct[k] + distinct[k + 1]));
        }
        thresholds.push(distinct[d - 1] + pad);
        let value = |t: f64| -> i64 {
            labeled
                .iter()
                .filter(|p| p.0 <= t)
                .map(|p| if p.1 == Ood { -1 } else { 1 })
                .sum()
        };
        let mut best = (f64::NAN, i64::MIN);
        for &t in &thresholds {
            let v = value(t);
            let closer = (t - median).abs() < (best.0 - median).abs()
                || ((t - median).abs() == (best.0 - median).abs() && t < best.0);
            if v > best.1 || (v == best.1 && closer) {
                best = (t, v);
            }
        }
        best
    }

    #[test]
    fn argmax_worked_example() {
        let labeled = set(&[(0.1, Class(1)), (0.2, Ood), (0.3, Class(2)), (0.4, Class(1)), (0.5, Ood)]);
        let r = empirical_argmax(&labeled, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.value, 2);
        assert!(r.mu_hat > 0.4 && r.mu_hat < 0.5, "{}", r.mu_hat);
    }

    #[test]
    fn argmax_all_ood_and_all_class() {
        let wild = [0.0, 1.0];
        let all_ood = set(&[(0.1, Ood), (0.2, Ood), (0.7, Ood)]);
        let r = empirical_argmax(&all_ood, &wild).unwrap();
        assert_eq!(r.value, 0);
        assert!(r.mu_hat < 0.1);

        let all_class = set(&[(0.1, Class(1)), (0.2, Class(2)), (0.7, Class(1))]);
        let r = empirical_argmax(&all_class, &wild).unwrap();
        assert_eq!(r.value, 3);
        assert!(r.mu_hat > 0.7);
    }

    #[test]
    fn argmax_empty_and_unsorted() {
        let r = empirical_argmax(&LabeledSet::new(), &[1.0, 2.0, 4.0, 10.0]).unwrap();
        assert_eq!((r.mu_hat, r.value), (3.0, 0));
        assert!(matches!(
            empirical_argmax(&LabeledSet::new(), &[2.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn labeled_set_rejects_duplicates_and_stays_sorted() {
        let mut s = set(&[(0.5, Ood), (0.1, Class(1))]);
        assert!(s.insert(LabeledEntry { id: 0, score: 0.3, label: Ood }).is_err());
        s.insert(LabeledEntry { id: 7, score: 0.3, label: Ood }).unwrap();
        let scores: Vec<f64> = s.iter().map(|e| e.score).collect();
        assert_eq!(scores, vec![0.1, 0.3, 0.5]);
    }

    #[test]
    fn shrink_factor_identity() {
        let c = ShrinkFactor::new(4096, 12).unwrap();
        assert!((c.value() - 4.0).abs() < 1e-12);
        assert!((c.value().powi(6) - 4096.0).abs() < 1e-6);
        assert!(ShrinkFactor::new(1, 10).is_err());
        assert!(ShrinkFactor::new(10, 1).is_err());
    }

    pub(crate) fn uniform_pool(n: usize, label_of: impl Fn(usize) -> Membership) -> WildPool {
        let examples = (0..n)
            .map(|id| {
                let membership = label_of(id);
                WildExample {
                    id,
                    features: None,
                    score: Some(id as f64),
                    membership,
                    class_label: if membership == Membership::Semantic { Ood } else { Class(1) },
                }
            })
            .collect();
        WildPool {
            examples,
            spec: PoolSpec::Score(ScoreMixtureSpec {
                pi_c: 0.0,
                pi_s: 0.0,
                in_density: crate::wildgen::GaussianMixture::single(0.0, 1.0),
                cov_density: Default::default(),
                sem_density: Default::default(),
                pool_size: n,
                num_classes: 1,
            }),
            seed: 0,
        }
    }

    fn count_in(pool: &WildPool, iv: ConfInterval) -> usize {
        pool.examples.iter().filter(|e| iv.contains(e.score.unwrap())).count()
    }

    #[test]
    fn window_arithmetic() {
        let pool = uniform_pool(100, |_| Membership::Id);
        let c = ShrinkFactor(10.0);
        let iv = conf_update(&LabeledSet::new(), &pool, ConfInterval::FULL, c, WindowRule::KeepMax).unwrap();
        assert_eq!(count_in(&pool, iv), 11);
        // no labels: centred window, positions 44..=54 or 45..=55
        assert!(iv.low == 44.0 || iv.low == 45.0, "{iv:?}");
        assert_eq!(iv.high - iv.low, 10.0);
    }

    #[test]
    fn window_not_smaller_than_interval_is_a_noop() {
        let pool = uniform_pool(3, |_| Membership::Id);
        let iv = ConfInterval::new(0.0, 2.0).unwrap();
        let out = conf_update(&LabeledSet::new(), &pool, iv, ShrinkFactor(1.0), WindowRule::KeepMax).unwrap();
        assert_eq!(out, iv);
        let err = conf_update(
            &LabeledSet::new(),
            &pool,
            ConfInterval::new(10.0, 11.0).unwrap(),
            ShrinkFactor(2.0),
            WindowRule::KeepMax,
        );
        assert!(matches!(err, Err(Error::IntervalExhausted { .. })));
    }

    /// Exhaustive window scan used as the oracle for the crossing test.
    fn scan_windows(signs: &[i64], w: usize) -> Vec<usize> {
        let prefix: Vec<i64> = signs
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let best = (0..signs.len() - w).map(|i| prefix[i].min(prefix[i + w])).max().unwrap();
        (0..signs.len() - w)
            .filter(|&i| prefix[i].min(prefix[i + w]) == best)
            .collect()
    }

    #[test]
    fn window_straddles_the_crossing() {
        for m in [10usize, 20, 31, 50] {
            let crossing = m / 2;
            let pool = uniform_pool(m, |id| if id < crossing { Membership::Id } else { Membership::Semantic });
            // label every third example
            let labeled = LabeledSet::from_entries(pool.examples.iter().step_by(3).map(|e| LabeledEntry {
                id: e.id,
                score: e.score.unwrap(),
                label: crate::wildgen::oracle_label(e),
            }))
            .unwrap();
            let c = ShrinkFactor(2.0);
            let iv = conf_update(&labeled, &pool, ConfInterval::FULL, c, WindowRule::KeepMax).unwrap();
            assert!(iv.low <= crossing as f64 && crossing as f64 - 1.0 <= iv.high, "m={m} {iv:?}");

            let signs: Vec<i64> = (0..m)
                .map(|id| match labeled.label_of(id) {
                    Some(Ood) => -1,
                    Some(_) => 1,
                    None => 0,
                })
                .collect();
            let allowed = scan_windows(&signs, c.window(m));
            assert!(allowed.contains(&(iv.low as usize)), "m={m} {iv:?} {allowed:?}");
        }
    }

    #[test]
    fn literal_rule_differs() {
        let m = 40;
        let pool = uniform_pool(m, |id| if id < 20 { Membership::Id } else { Membership::Semantic });
        let labeled = LabeledSet::from_entries(pool.examples.iter().map(|e| LabeledEntry {
            id: e.id,
            score: e.score.unwrap(),
            label: crate::wildgen::oracle_label(e),
        }))
        .unwrap();
        let c = ShrinkFactor(4.0);
        let keep = conf_update(&labeled, &pool, ConfInterval::FULL, c, WindowRule::KeepMax).unwrap();
        let literal = conf_update(&labeled, &pool, ConfInterval::FULL, c, WindowRule::Literal).unwrap();
        assert!(keep.contains(19.0));
        assert!(!literal.contains(19.0));
    }

    #[test]
    fn phase1_shrinks_by_c_each_step() {
        let pool = uniform_pool(4096, |id| if id % 3 == 0 { Membership::Semantic } else { Membership::Id });
        let r = phase1_search(&pool, 6, &SimulatedOracle, 5, WindowRule::default()).unwrap();
        assert!((r.shrink.value() - 4.0).abs() < 1e-12);
        assert_eq!(r.steps.len(), 6);
        for s in &r.steps {
            let bound = (4096.0 / 4f64.powi(s.t as i32)).ceil() as usize + 1;
            assert!(s.in_interval <= bound.max(2), "{s:?}");
        }
        assert!(r.steps.last().unwrap().in_interval <= 2);
        assert_eq!(r.unspent, 0);
    }

    #[test]
    fn phase1_without_semantic_goes_to_upper_sentinel() {
        let pool = uniform_pool(500, |_| Membership::Id);
        let r = phase1_search(&pool, 20, &SimulatedOracle, 1, WindowRule::default()).unwrap();
        let max_labeled = r.labeled.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
        assert!(r.mu_hat > max_labeled);
        assert_eq!(r.objective, r.labeled.len() as i64);
    }

    #[test]
    fn phase1_deterministic() {
        let pool = uniform_pool(1000, |id| if id > 600 { Membership::Semantic } else { Membership::Id });
        let a = phase1_search(&pool, 30, &SimulatedOracle, 9, WindowRule::default()).unwrap();
        let b = phase1_search(&pool, 30, &SimulatedOracle, 9, WindowRule::default()).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.mu_hat, b.mu_hat);
    }

    #[test]
    fn phase1_reports_unspent_when_exhausted() {
        let pool = uniform_pool(8, |id| if id >= 4 { Membership::Semantic } else { Membership::Id });
        let r = phase1_search(&pool, 8, &SimulatedOracle, 0, WindowRule::default()).unwrap();
        assert_eq!(r.labeled.len() + r.unspent, 8);
        assert!(r.unspent > 0);
        assert!(phase1_search(&pool, 0, &SimulatedOracle, 0, WindowRule::default())
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn phase1_intervals_nest_and_contain_draws() {
        let pool = uniform_pool(3000, |id| if (id * 7919) % 3000 > 2000 + id / 3 { Membership::Semantic } else { Membership::Id });
        let r = phase1_search(&pool, 40, &SimulatedOracle, 3, WindowRule::default()).unwrap();
        for w in r.intervals.windows(2) {
            assert!(w[1].is_within(&w[0]), "{w:?}");
        }
        for (step, before) in r.steps.iter().zip(&r.intervals) {
            assert!(before.contains(step.drawn_id as f64));
        }
    }

    fn labeled_strategy() -> impl Strategy<Value = Vec<(f64, bool)>> {
        proptest::collection::vec(((0i32..60).prop_map(|v| v as f64 / 4.0), any::<bool>()), 0..120)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn argmax_matches_brute_force(items in labeled_strategy(), wild in proptest::collection::vec(-5.0f64..20.0, 1..50)) {
            let items: Vec<(f64, HumanLabel)> = items.into_iter().map(|(s, o)| (s, if o { Ood } else { Class(1) })).collect();
            let mut wild = wild;
            wild.sort_by(f64::total_cmp);
            let got = empirical_argmax(&set(&items), &wild).unwrap();
            let (mu, value) = brute_force(&items, &wild);
            prop_assert_eq!(got.value, value);
            prop_assert_eq!(got.mu_hat, mu);
        }
    }
}
