use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_fractions, validate_weights, GaussianMixture, HumanLabel, Membership, PoolSpec, WildExample, WildPool};
use crate::error::{Error, Result};

/// Analytic description of a score-space wild mixture: each component's
/// OOD score follows a 1-D Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMixtureSpec {
    pub pi_c: f64,
    pub pi_s: f64,
    pub in_density: GaussianMixture,
    /// May be empty when `pi_c == 0`.
    #[serde(default)]
    pub cov_density: GaussianMixture,
    /// May be empty when `pi_s == 0`.
    #[serde(default)]
    pub sem_density: GaussianMixture,
    pub pool_size: usize,
    /// Class count used for the hidden labels of non-semantic examples.
    #[serde(default = "default_classes")]
    pub num_classes: u32,
}

fn default_classes() -> u32 {
    2
}

impl ScoreMixtureSpec {
    pub fn id_weight(&self) -> f64 {
        1.0 - self.pi_c - self.pi_s
    }

    /// Weighted densities `(id, covariate, semantic)` that are in play.
    pub(crate) fn weighted(&self) -> [(f64, &GaussianMixture); 3] {
        [
            (self.id_weight(), &self.in_density),
            (self.pi_c, &self.cov_density),
            (self.pi_s, &self.sem_density),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        const P: &str = "score_mixture";
        validate_weights(P, self.pi_c, self.pi_s)?;
        for ((w, density), name) in self.weighted().into_iter().zip(["in_density", "cov_density", "sem_density"]) {
            if w > 0.0 || !density.is_empty() {
                density.validate(&format!("{P}.{name}"))?;
            }
        }
        if self.pool_size == 0 {
            return Err(Error::config(format!("{P}.pool_size"), "must be > 0"));
        }
        if self.num_classes == 0 {
            return Err(Error::config(format!("{P}.num_classes"), "must be >= 1"));
        }
        Ok(())
    }

    /// CDF of the full wild mixture.
    pub fn wild_cdf(&self, x: f64) -> f64 {
        self.weighted()
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, d)| w * d.cdf(x))
            .sum()
    }

    /// `(1 - pi_c - pi_s) p_in + pi_c p_cov - pi_s p_sem`.
    pub fn signed_density(&self, x: f64) -> f64 {
        let [(wi, din), (wc, dcov), (ws, dsem)] = self.weighted();
        let part = |w: f64, d: &GaussianMixture| if w > 0.0 { w * d.pdf(x) } else { 0.0 };
        part(wi, din) + part(wc, dcov) - part(ws, dsem)
    }
}

/// Draws a score-space pool: membership first, then the score from that
/// component's density. Deterministic in `seed`.
pub fn sample_score_wild(spec: &ScoreMixtureSpec, seed: u64) -> Result<WildPool> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id_w = spec.id_weight();
    let examples: Vec<WildExample> = (0..spec.pool_size)
        .map(|id| {
            let u: f64 = rng.random();
            let membership = if u < id_w {
                Membership::Id
            } else if u < id_w + spec.pi_c {
                Membership::Covariate
            } else {
                Membership::Semantic
            };
            let density = match membership {
                Membership::Id => &spec.in_density,
                Membership::Covariate => &spec.cov_density,
                Membership::Semantic => &spec.sem_density,
            };
            let score = density.sample(&mut rng);
            let class_label = match membership {
                Membership::Semantic => HumanLabel::Ood,
                _ => HumanLabel::Class(rng.random_range(1..=spec.num_classes)),
            };
            WildExample {
                id,
                features: None,
                score: Some(score),
                membership,
                class_label,
            }
        })
        .collect();
    let pool = WildPool {
        examples,
        spec: PoolSpec::Score(spec.clone()),
        seed,
    };
    check_fractions("score pool", pool.membership_counts(), spec.pi_c, spec.pi_s);
    Ok(pool)
}
