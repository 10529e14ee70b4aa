//! Seeded execution of the (strategy, budget, seed) grid.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learner::{evaluate, train_classifier, train_joint, LossRecord, MetricsReport, TrainConfig};
use crate::scores::{score_pool, Logits};
use crate::search::TraceStep;
use crate::strategies::{select, SelectContext, SelectionResult, Strategy};
use crate::wildgen::{
    sample_feature_wild, sample_score_wild, HumanLabel, LabeledPoint, SimulatedOracle, TestSplits, WildPool,
};

/// Size of the synthetic `S_in` score sample in score mode.
const SCORE_MODE_LABELED_ID: usize = 1000;

/// First 8 bytes of SHA-256 over the master seed and length-prefixed parts.
pub fn derive_seed(master: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed of the pool shared by every cell with this seed value.
pub fn pool_seed(master: u64, seed: u64) -> u64 {
    derive_seed(master, &[b"pool", &seed.to_le_bytes()])
}

/// Seed of one cell. Uses the seed value, not its position in the list, so
/// editing the list leaves other cells alone.
pub fn cell_seed(master: u64, strategy: Strategy, budget: usize, seed: u64) -> u64 {
    derive_seed(
        master,
        &[strategy.name().as_bytes(), &(budget as u64).to_le_bytes(), &seed.to_le_bytes()],
    )
}

/// Pool, `S_in` and test splits for one seed value.
#[derive(Debug, Clone)]
pub struct PreparedSeed {
    pub seed: u64,
    pub pool: WildPool,
    pub s_in: Vec<LabeledPoint>,
    pub s_in_scores: Vec<f64>,
    pub tests: TestSplits,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    /// `[id, covariate, semantic]`; absent if the cell failed.
    pub composition: Option<[usize; 3]>,
    pub mu_hat: Option<f64>,
    pub unspent: Option<usize>,
    pub metrics: MetricsReport,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub trace: Vec<TraceStep>,
    #[serde(skip)]
    pub loss_trace: Vec<LossRecord>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Standard error of the mean; absent with fewer than two values.
    pub stderr: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Self { mean, stderr })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub strategy: Strategy,
    pub budget: usize,
    pub runs: usize,
    pub failed: usize,
    pub ood_acc: Option<Stat>,
    pub id_acc: Option<Stat>,
    pub fpr95: Option<Stat>,
    pub auroc: Option<Stat>,
    pub n_id: Option<Stat>,
    pub n_cov: Option<Stat>,
    pub n_sem: Option<Stat>,
    pub mu_hat: Option<Stat>,
    pub unspent: Option<Stat>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// Ordered by strategy, budget and seed as listed in the config.
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub pools: Vec<PreparedSeed>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.failed())
    }
}

fn score_mode_labeled_id(pool: &WildPool, seed: u64) -> Vec<f64> {
    let crate::wildgen::PoolSpec::Score(spec) = &pool.spec else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..SCORE_MODE_LABELED_ID).map(|_| spec.in_density.sample(&mut rng)).collect()
}

/// Builds the pool for one seed value. Feature pools are scored by a
/// classifier trained on `S_in` alone.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedSeed> {
    let ps = pool_seed(cfg.master_seed, seed);
    if let Some(spec) = &cfg.score_mixture {
        let pool = sample_score_wild(spec, ps)?;
        let s_in_scores = score_mode_labeled_id(&pool, ps);
        return Ok(PreparedSeed {
            seed,
            pool,
            s_in: Vec::new(),
            s_in_scores,
            tests: TestSplits::default(),
        });
    }
    let spec = cfg
        .feature_mixture
        .as_ref()
        .ok_or_else(|| Error::config("feature_mixture", "missing mixture"))?;
    let sample = sample_feature_wild(spec, ps)?;
    let train = TrainConfig { seed: ps, ..cfg.train.clone() };
    let classifier = train_classifier(&sample.labeled_id, &train)?;
    let pool = score_pool(&sample.pool, &classifier, cfg.score)?;
    let s_in_scores = sample
        .labeled_id
        .iter()
        .map(|p| cfg.score.apply(&Logits::new(classifier.logits(&p.features)?)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSeed {
        seed,
        pool,
        s_in: sample.labeled_id,
        s_in_scores,
        tests: sample.tests,
    })
}

struct CellOutput {
    selection: SelectionResult,
    metrics: MetricsReport,
    loss_trace: Vec<LossRecord>,
}

fn human_sets(pool: &WildPool, selection: &SelectionResult) -> Result<(Vec<LabeledPoint>, Vec<LabeledPoint>)> {
    let index: HashMap<usize, usize> = pool.examples.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    let mut cov = Vec::new();
    let mut sem = Vec::new();
    for entry in selection.labeled.iter() {
        let e = &pool.examples[index[&entry.id]];
        let features = e
            .features
            .clone()
            .ok_or_else(|| Error::Usage(format!("example {} has no features", e.id)))?;
        let point = LabeledPoint {
            features,
            label: entry.label,
        };
        match entry.label {
            HumanLabel::Ood => sem.push(point),
            HumanLabel::Class(_) => cov.push(point),
        }
    }
    Ok((cov, sem))
}

fn run_cell(cfg: &ExperimentConfig, prep: &PreparedSeed, strategy: Strategy, budget: usize) -> Result<CellOutput> {
    let seed = cell_seed(cfg.master_seed, strategy, budget, prep.seed);
    let ctx = SelectContext {
        oracle: &SimulatedOracle,
        seed,
        labeled_id_scores: &prep.s_in_scores,
        window_rule: cfg.window_rule,
    };
    let selection = select(strategy, &prep.pool, budget, ctx)?;
    if !prep.pool.is_feature_mode() {
        return Ok(CellOutput {
            selection,
            metrics: MetricsReport::default(),
            loss_trace: Vec::new(),
        });
    }
    let (cov, sem) = human_sets(&prep.pool, &selection)?;
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let out = train_joint(&prep.s_in, &cov, &sem, &train)?;
    let metrics = evaluate(&out.classifier, &out.detector, &prep.tests)?;
    Ok(CellOutput {
        selection,
        metrics,
        loss_trace: out.loss_trace,
    })
}

/// Runs every cell. Cell failures are recorded in the report, not returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let prepared: Vec<Result<PreparedSeed>> = cfg.seeds.par_iter().map(|&s| prepare_seed(cfg, s)).collect();

    let mut grid = Vec::new();
    for &strategy in &cfg.strategies {
        for &budget in &cfg.budgets {
            for (i, &seed) in cfg.seeds.iter().enumerate() {
                grid.push((strategy, budget, seed, i));
            }
        }
    }
    let cells: Vec<CellResult> = grid
        .par_iter()
        .map(|&(strategy, budget, seed, i)| {
            let start = Instant::now();
            let outcome = match &prepared[i] {
                Ok(prep) => run_cell(cfg, prep, strategy, budget),
                Err(e) => Err(Error::Contract(format!("pool preparation failed: {e}"))),
            };
            let wall_time = start.elapsed();
            match outcome {
                Ok(o) => CellResult {
                    strategy,
                    budget,
                    seed,
                    composition: Some(o.selection.composition),
                    mu_hat: o.selection.mu_hat,
                    unspent: Some(o.selection.unspent),
                    metrics: o.metrics,
                    error: None,
                    wall_time,
                    trace: o.selection.trace,
                    loss_trace: o.loss_trace,
                },
                Err(e) => {
                    log::error!("cell {strategy}/{budget}/{seed} failed: {e}");
                    CellResult {
                        strategy,
                        budget,
                        seed,
                        composition: None,
                        mu_hat: None,
                        unspent: None,
                        metrics: MetricsReport::default(),
                        error: Some(e.to_string()),
                        wall_time,
                        trace: Vec::new(),
                        loss_trace: Vec::new(),
                    }
                }
            }
        })
        .collect();
    for c in &cells {
        log::debug!("cell {}/{}/{} took {:?}", c.strategy, c.budget, c.seed, c.wall_time);
    }

    let aggregates = aggregate(cfg, &cells);
    let pools = prepared.into_iter().filter_map(Result::ok).collect();
    Ok(RunReport {
        cells,
        aggregates,
        pools,
    })
}

/// Mean and standard error per (strategy, budget) over successful cells.
pub fn aggregate(cfg: &ExperimentConfig, cells: &[CellResult]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &strategy in &cfg.strategies {
        for &budget in &cfg.budgets {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.strategy == strategy && c.budget == budget && !c.failed())
                .collect();
            let failed = cells
                .iter()
                .filter(|c| c.strategy == strategy && c.budget == budget && c.failed())
                .count();
            let stat = |f: &dyn Fn(&CellResult) -> Option<f64>| {
                let values: Vec<f64> = group.iter().filter_map(|c| f(c)).collect();
                Stat::of(&values)
            };
            let count = |k: usize| move |c: &CellResult| c.composition.map(|x| x[k] as f64);
            out.push(Aggregate {
                strategy,
                budget,
                runs: group.len(),
                failed,
                ood_acc: stat(&|c| c.metrics.ood_acc),
                id_acc: stat(&|c| c.metrics.id_acc),
                fpr95: stat(&|c| c.metrics.fpr95),
                auroc: stat(&|c| c.metrics.auroc),
                n_id: stat(&count(0)),
                n_cov: stat(&count(1)),
                n_sem: stat(&count(2)),
                mu_hat: stat(&|c| c.mu_hat),
                unspent: stat(&|c| c.unspent.map(|u| u as f64)),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    pub(crate) fn score_cfg(seeds: &[u64]) -> ExperimentConfig {
        let text = format!(
            r#"
master_seed = 11
strategies = ["aha", "topk", "boundary", "most-cov", "least-sem", "mixed", "random"]
budgets = [20]
seeds = {seeds:?}
score_mixture.pi_c = 0.2
score_mixture.pi_s = 0.3
score_mixture.in_density = [[0.0, 1.0, 1.0]]
score_mixture.cov_density = [[1.0, 1.0, 1.0]]
score_mixture.sem_density = [[3.0, 1.0, 1.0]]
score_mixture.pool_size = 400
"#
        );
        ExperimentConfig::from_toml(&text, Path::new("cfg.toml")).unwrap()
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, &[b"a"]), derive_seed(1, &[b"a"]));
        assert_ne!(derive_seed(1, &[b"a"]), derive_seed(2, &[b"a"]));
        // length prefixes keep part boundaries significant
        assert_ne!(derive_seed(1, &[b"ab", b"c"]), derive_seed(1, &[b"a", b"bc"]));
        assert_ne!(cell_seed(0, Strategy::Aha, 8, 1), cell_seed(0, Strategy::Topk, 8, 1));
    }

    #[test]
    fn one_cell_gives_one_row() {
        let mut cfg = score_cfg(&[4]);
        cfg.strategies = vec![Strategy::Topk];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.aggregates.len(), 1);
        assert!(r.aggregates[0].n_id.unwrap().stderr.is_none());
    }

    #[test]
    fn conservation_and_absent_metrics() {
        let cfg = score_cfg(&[1, 2, 3]);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.cells.len(), 7 * 3);
        assert_eq!(r.aggregates.len(), 7);
        for c in &r.cells {
            assert!(!c.failed(), "{c:?}");
            assert_eq!(c.composition.unwrap().iter().sum::<usize>() + c.unspent.unwrap(), c.budget);
            assert_eq!(c.metrics, MetricsReport::default());
        }
        assert!(r.aggregates.iter().all(|a| a.n_sem.unwrap().stderr.is_some() && a.fpr95.is_none()));
    }

    #[test]
    fn removing_a_seed_leaves_other_cells_alone() {
        let full = run_experiment(&score_cfg(&[5, 6, 7])).unwrap();
        let part = run_experiment(&score_cfg(&[5, 7])).unwrap();
        for c in &part.cells {
            let twin = full
                .cells
                .iter()
                .find(|f| f.strategy == c.strategy && f.budget == c.budget && f.seed == c.seed)
                .unwrap();
            assert_eq!(twin.composition, c.composition);
            assert_eq!(twin.mu_hat, c.mu_hat);
        }
    }

    #[test]
    fn stat_matches_hand_computation() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr.unwrap() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(Stat::of(&[]).is_none());
    }
}
