//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::scores::ScoreKind;
use crate::search::WindowRule;
use crate::strategies::Strategy;
use crate::wildgen::{FeatureMixtureSpec, ScoreMixtureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::config("format", format!("unknown format {other:?}"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

fn default_bins() -> usize {
    40
}

fn default_grid() -> usize {
    20_000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
    #[serde(default)]
    pub score: ScoreKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub window_rule: WindowRule,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Grid resolution of the analytic threshold (score mode).
    #[serde(default = "default_grid")]
    pub oracle_grid: usize,
    #[serde(default)]
    pub score_mixture: Option<ScoreMixtureSpec>,
    #[serde(default)]
    pub feature_mixture: Option<FeatureMixtureSpec>,
}

/// Command-line replacements for config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub score: Option<String>,
    pub temperature: Option<f64>,
    pub strategy: Option<String>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_width: Option<usize>,
    pub batch_size: Option<usize>,
    pub window_rule: Option<String>,
    pub detector_include_wild_id: bool,
    pub format: Option<String>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if cfg.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if o.score.is_some() || o.temperature.is_some() {
            let name = o.score.as_deref().unwrap_or(self.score.name());
            let temperature = o.temperature.or(match self.score {
                ScoreKind::Energy { temperature } => Some(temperature),
                _ => None,
            });
            self.score = ScoreKind::parse(name, temperature.unwrap_or(1.0))?;
        }
        if let Some(s) = &o.strategy {
            self.strategies = s.split(',').map(|s| Strategy::parse(s.trim())).collect::<Result<_>>()?;
        }
        if let Some(v) = o.alpha {
            self.train.alpha = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.hidden_width {
            self.train.hidden_width = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(r) = &o.window_rule {
            self.window_rule = WindowRule::parse(r)?;
        }
        if o.detector_include_wild_id {
            self.train.detector_include_wild_id = true;
        }
        if let Some(f) = &o.format {
            self.format = ReportFormat::parse(f)?;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self.validate()
    }

    pub fn pool_size(&self) -> usize {
        match (&self.score_mixture, &self.feature_mixture) {
            (Some(s), _) => s.pool_size,
            (_, Some(f)) => f.pool_size,
            _ => 0,
        }
    }

    pub fn is_feature_mode(&self) -> bool {
        self.feature_mixture.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.score_mixture, &self.feature_mixture) {
            (Some(s), None) => s.validate()?,
            (None, Some(f)) => {
                f.validate()?;
                if f.labeled_id_size == 0 {
                    return Err(Error::config("feature_mixture.labeled_id_size", "must be > 0"));
                }
            }
            _ => {
                return Err(Error::config(
                    "score_mixture",
                    "exactly one of score_mixture and feature_mixture must be given",
                ))
            }
        }
        if self.strategies.is_empty() {
            return Err(Error::config("strategies", "at least one strategy is required"));
        }
        if self.budgets.is_empty() {
            return Err(Error::config("budgets", "at least one budget is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        for (name, dup) in [
            ("strategies", has_duplicates(&self.strategies)),
            ("budgets", has_duplicates(&self.budgets)),
            ("seeds", has_duplicates(&self.seeds)),
        ] {
            if dup {
                return Err(Error::config(name, "duplicate entries"));
            }
        }
        let n = self.pool_size();
        for &k in &self.budgets {
            if k == 0 || k > n {
                return Err(Error::config("budgets", format!("budget {k} must lie in 1..={n}")));
            }
            if self.strategies.contains(&Strategy::Aha) && k % 4 != 0 {
                return Err(Error::config("budgets", format!("budget {k} is not divisible by 4 (required by aha)")));
            }
        }
        if self.histogram_bins < 10 {
            return Err(Error::config("histogram_bins", "must be >= 10"));
        }
        if self.is_feature_mode() {
            self.train.validate()?;
        }
        if let ScoreKind::Energy { temperature } = self.score {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::config("score.temperature", "must be > 0"));
            }
        }
        Ok(())
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCORE_CFG: &str = r#"
master_seed = 3
strategies = ["aha", "topk"]
budgets = [8, 16]
seeds = [0, 1]
output_dir = "results"

score_mixture.pi_c = 0.0
score_mixture.pi_s = 0.3
score_mixture.in_density = [[0.0, 1.0, 1.0]]
score_mixture.sem_density = [[3.0, 1.0, 1.0]]
score_mixture.pool_size = 500
"#;

    #[test]
    fn parses_dotted_keys_and_resolves_output() {
        let cfg = ExperimentConfig::from_toml(SCORE_CFG, Path::new("/tmp/exp/run.toml")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/exp/results"));
        assert_eq!(cfg.strategies, vec![Strategy::Aha, Strategy::Topk]);
        assert_eq!(cfg.score, ScoreKind::default());
        assert_eq!(cfg.window_rule, WindowRule::Literal);
        assert!(!cfg.is_feature_mode());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |edit: &str| {
            let text = format!("{SCORE_CFG}\n{edit}");
            let r = ExperimentConfig::from_toml(&text, Path::new("c.toml")).and_then(|c| c.validate());
            assert!(r.unwrap_err().is_config(), "{edit}");
        };
        bad("histogram_bins = 5");
        bad("unknown_key = 1");
        let replaced = SCORE_CFG.replace("budgets = [8, 16]", "budgets = [6]");
        assert!(ExperimentConfig::from_toml(&replaced, Path::new("c.toml")).unwrap().validate().unwrap_err().is_config());
        let replaced = SCORE_CFG.replace("seeds = [0, 1]", "seeds = []");
        assert!(ExperimentConfig::from_toml(&replaced, Path::new("c.toml")).unwrap().validate().unwrap_err().is_config());
        let replaced = SCORE_CFG.replace("score_mixture.pi_s = 0.3", "score_mixture.pi_s = 1.3");
        assert!(ExperimentConfig::from_toml(&replaced, Path::new("c.toml")).unwrap().validate().unwrap_err().is_config());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = ExperimentConfig::from_toml(SCORE_CFG, Path::new("c.toml")).unwrap();
        let o = Overrides {
            score: Some("msp".into()),
            strategy: Some("random".into()),
            alpha: Some(2.0),
            window_rule: Some("keep-max".into()),
            ..Default::default()
        };
        cfg.apply(&o).unwrap();
        assert_eq!(cfg.score, ScoreKind::Msp);
        assert_eq!(cfg.strategies, vec![Strategy::Random]);
        assert_eq!(cfg.train.alpha, 2.0);
        assert_eq!(cfg.window_rule, WindowRule::KeepMax);
        let o = Overrides {
            temperature: Some(-1.0),
            score: Some("energy".into()),
            ..Default::default()
        };
        assert!(cfg.apply(&o).unwrap_err().is_config());
        let o = Overrides {
            strategy: Some("aha".into()),
            ..Default::default()
        };
        let mut odd = ExperimentConfig::from_toml(&SCORE_CFG.replace("[8, 16]", "[10]"), Path::new("c.toml")).unwrap();
        odd.strategies = vec![Strategy::Topk];
        odd.validate().unwrap();
        assert!(odd.apply(&o).unwrap_err().is_config());
    }
}
