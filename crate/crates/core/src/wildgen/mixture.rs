//! One-dimensional Gaussian mixtures with closed-form density and CDF.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Tolerance on the sum of component weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A single weighted normal component. Serialized as `[mean, std_dev, weight]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct GaussianComponent {
    pub mean: f64,
    pub std_dev: f64,
    pub weight: f64,
}

impl From<[f64; 3]> for GaussianComponent {
    fn from([mean, std_dev, weight]: [f64; 3]) -> Self {
        Self {
            mean,
            std_dev,
            weight,
        }
    }
}

impl From<GaussianComponent> for [f64; 3] {
    fn from(c: GaussianComponent) -> Self {
        [c.mean, c.std_dev, c.weight]
    }
}

impl GaussianComponent {
    pub fn new(mean: f64, std_dev: f64, weight: f64) -> Self {
        Self {
            mean,
            std_dev,
            weight,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std_dev;
        (-0.5 * z * z).exp() / (self.std_dev * (2.0 * PI).sqrt())
    }

    fn cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-(x - self.mean) / (self.std_dev * SQRT_2))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn single(mean: f64, std_dev: f64) -> Self {
        Self::new(vec![GaussianComponent::new(mean, std_dev, 1.0)])
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Checks positivity of every standard deviation and that weights are a
    /// probability vector. `field` prefixes error messages.
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::config(field, "mixture has no components"));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if !c.mean.is_finite() {
                return Err(Error::config(format!("{field}[{i}].mean"), "must be finite"));
            }
            if !(c.std_dev > 0.0 && c.std_dev.is_finite()) {
                return Err(Error::config(
                    format!("{field}[{i}].std_dev"),
                    format!("must be > 0, got {}", c.std_dev),
                ));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::config(
                    format!("{field}[{i}].weight"),
                    format!("must be >= 0, got {}", c.weight),
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::config(
                field,
                format!("component weights sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(x)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.cdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("validated mixture is nonempty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        chosen.mean + chosen.std_dev * z
    }

    /// `(min(mean - k*sd), max(mean + k*sd))` over components with nonzero weight.
    pub fn span(&self, k: f64) -> Option<(f64, f64)> {
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| (c.mean - k * c.std_dev, c.mean + k * c.std_dev))
            .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_values() {
        let g = GaussianMixture::single(0.0, 1.0);
        assert!((g.pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((g.cdf(0.0) - 0.5).abs() < 1e-15);
        let p = g.cdf(1.959_963_984_540_054);
        assert!((p - 0.975).abs() < 1e-10, "{p}");
    }

    #[test]
    fn validation_names_the_field() {
        let g = GaussianMixture::new(vec![GaussianComponent::new(0.0, -1.0, 1.0)]);
        let err = g.validate("in_density").unwrap_err().to_string();
        assert!(err.contains("in_density[0].std_dev"), "{err}");

        let g = GaussianMixture::new(vec![
            GaussianComponent::new(0.0, 1.0, 0.5),
            GaussianComponent::new(1.0, 1.0, 0.4),
        ]);
        assert!(g.validate("x").is_err());
    }

    #[test]
    fn sample_moments() {
        let g = GaussianMixture::new(vec![
            GaussianComponent::new(-2.0, 0.5, 0.25),
            GaussianComponent::new(2.0, 0.5, 0.75),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mean = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }
}
