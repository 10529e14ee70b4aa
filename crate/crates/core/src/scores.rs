//! OOD scores computed from classifier logits.
//!
//! Every score uses one orientation: larger means more likely semantic OOD.
//! A detector built on any of them declares OOD iff `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::ClassifierParams;
use crate::wildgen::WildPool;

/// Unnormalised class scores of one example. At least two classes, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Input(format!("need at least 2 logits, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite logit {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn softmax(&self) -> Vec<f64> {
        let m = self.max();
        let exps: Vec<f64> = self.0.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// `T * ln sum exp(l / T)`, stable for large magnitudes.
    pub fn log_sum_exp(&self, temperature: f64) -> f64 {
        let m = self.max() / temperature;
        let s: f64 = self.0.iter().map(|v| (v / temperature - m).exp()).sum();
        temperature * (m + s.ln())
    }
}

impl TryFrom<Vec<f64>> for Logits {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Logits::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoreKind {
    Msp,
    Entropy,
    Margin,
    Energy { temperature: f64 },
}

impl Default for ScoreKind {
    fn default() -> Self {
        ScoreKind::Energy { temperature: 1.0 }
    }
}

impl ScoreKind {
    /// Parses `msp`, `entropy`, `margin` or `energy`.
    pub fn parse(name: &str, temperature: f64) -> Result<Self> {
        match name {
            "msp" => Ok(ScoreKind::Msp),
            "entropy" => Ok(ScoreKind::Entropy),
            "margin" => Ok(ScoreKind::Margin),
            "energy" => {
                check_temperature(temperature)?;
                Ok(ScoreKind::Energy { temperature })
            }
            other => Err(Error::config(
                "score",
                format!("unknown score kind {other:?} (expected msp, entropy, margin or energy)"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::Entropy => "entropy",
            ScoreKind::Margin => "margin",
            ScoreKind::Energy { .. } => "energy",
        }
    }

    pub fn apply(&self, logits: &Logits) -> Result<f64> {
        match *self {
            ScoreKind::Msp => Ok(msp_score(logits)),
            ScoreKind::Entropy => Ok(entropy_score(logits)),
            ScoreKind::Margin => Ok(margin_score(logits)),
            ScoreKind::Energy { temperature } => energy_score(logits, temperature),
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::config("temperature", format!("must be > 0, got {t}")))
    }
}

/// `1 - max softmax probability`.
pub fn msp_score(l: &Logits) -> f64 {
    let p = l.softmax();
    1.0 - p.iter().copied().fold(0.0, f64::max)
}

/// Shannon entropy of the softmax, with `0 ln 0 = 0`.
pub fn entropy_score(l: &Logits) -> f64 {
    -l.softmax()
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Negated gap between the two largest softmax probabilities, in `[-1, 0]`.
pub fn margin_score(l: &Logits) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in l.softmax() {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    -(first - second)
}

/// Free energy `-T ln sum exp(l / T)`.
pub fn energy_score(l: &Logits, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(-l.log_sum_exp(temperature))
}

/// Returns a copy of a feature-space pool with every score filled in.
pub fn score_pool(pool: &WildPool, classifier: &ClassifierParams, kind: ScoreKind) -> Result<WildPool> {
    if !pool.is_feature_mode() {
        return Err(Error::Usage(
            "score-space pools carry intrinsic scores and cannot be rescored".into(),
        ));
    }
    let mut out = pool.clone();
    for e in &mut out.examples {
        let x = e
            .features
            .as_deref()
            .ok_or_else(|| Error::Usage(format!("example {} has no features", e.id)))?;
        let logits = Logits::new(classifier.logits(x)?)?;
        e.score = Some(kind.apply(&logits)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(v: &[f64]) -> Logits {
        Logits::new(v.to_vec()).unwrap()
    }

    const ALL: [ScoreKind; 4] = [
        ScoreKind::Msp,
        ScoreKind::Entropy,
        ScoreKind::Margin,
        ScoreKind::Energy { temperature: 1.0 },
    ];

    #[test]
    fn msp_values() {
        assert!((msp_score(&l(&[0.0, 0.0])) - 0.5).abs() < 1e-15);
        // 1 - sigmoid(20), evaluated independently
        let expected = 2.061_153_692_167_75e-9;
        let got = msp_score(&l(&[10.0, -10.0]));
        assert!((got - expected).abs() < 1e-15, "{got}");
    }

    #[test]
    fn entropy_values() {
        assert!((entropy_score(&l(&[0.5; 4])) - 4f64.ln()).abs() < 1e-12);
        assert!(entropy_score(&l(&[100.0, 0.0, 0.0, 0.0])) < 1e-40);
        assert!((entropy_score(&l(&[1.0, 0.0])) - 0.582_203_108_888_217_9).abs() < 1e-12);
    }

    #[test]
    fn margin_values() {
        assert_eq!(margin_score(&l(&[2.0, 2.0, 2.0])), 0.0);
        assert!((margin_score(&l(&[10.0, -10.0])) + 1.0).abs() < 1e-8);
        assert!((margin_score(&l(&[1.0, 0.0])) + 0.462_117_157_260_009_8).abs() < 1e-12);
    }

    #[test]
    fn energy_values() {
        assert!((energy_score(&l(&[0.0, 0.0]), 1.0).unwrap() + 2f64.ln()).abs() < 1e-15);
        assert!((energy_score(&l(&[3.0, 0.0]), 1.0).unwrap() + 3.048_587_351_573_742).abs() < 1e-12);
        assert!(energy_score(&l(&[3.0, 0.0]), 0.0).unwrap_err().is_config());
        assert!(energy_score(&l(&[3.0, 0.0]), -1.0).is_err());
    }

    #[test]
    fn invalid_logits() {
        assert!(matches!(Logits::new(vec![1.0]), Err(Error::Input(_))));
        assert!(matches!(Logits::new(vec![1.0, f64::NAN]), Err(Error::Input(_))));
        assert!(Logits::new(vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn large_magnitudes_stay_finite() {
        for v in [[1e4, -1e4, 0.0], [-1e4, -1e4, -1e4], [1e4, 1e4, -1e4]] {
            for k in ALL {
                assert!(k.apply(&l(&v)).unwrap().is_finite(), "{k:?} {v:?}");
            }
        }
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(ScoreKind::parse("margin", 1.0).unwrap(), ScoreKind::Margin);
        assert_eq!(
            ScoreKind::parse("energy", 2.0).unwrap(),
            ScoreKind::Energy { temperature: 2.0 }
        );
        assert!(ScoreKind::parse("gradient", 1.0).unwrap_err().is_config());
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| proptest::collection::vec(-20.0f64..20.0, k))
    }

    proptest! {
        #[test]
        fn shift_invariance(v in logits_strategy(), c in -50.0f64..50.0) {
            let a = l(&v);
            let b = l(&v.iter().map(|x| x + c).collect::<Vec<_>>());
            prop_assert!((msp_score(&a) - msp_score(&b)).abs() < 1e-12);
            prop_assert!((entropy_score(&a) - entropy_score(&b)).abs() < 1e-12);
            prop_assert!((margin_score(&a) - margin_score(&b)).abs() < 1e-12);
            let ea = energy_score(&a, 1.0).unwrap();
            let eb = energy_score(&b, 1.0).unwrap();
            prop_assert!((eb - (ea - c)).abs() < 1e-12 * (1.0 + ea.abs() + c.abs()));
        }

        #[test]
        fn flattening_towards_uniform_never_lowers_score(v in logits_strategy(), t in 0.0f64..1.0) {
            // A convex combination of the softmax with uniform, expressed as logits.
            let base = l(&v);
            let p = base.softmax();
            let k = p.len() as f64;
            let mixed: Vec<f64> = p.iter().map(|pi| ((1.0 - t) * pi + t / k).ln()).collect();
            let flat = l(&mixed);
            let orig: Vec<f64> = p.iter().map(|pi| pi.ln()).collect();
            let orig = l(&orig);
            for kind in [ScoreKind::Msp, ScoreKind::Entropy, ScoreKind::Margin] {
                let before = kind.apply(&orig).unwrap();
                let after = kind.apply(&flat).unwrap();
                prop_assert!(after >= before - 1e-12, "{kind:?}: {before} -> {after}");
            }
        }

        #[test]
        fn energy_rises_as_logits_shrink_to_their_mean(v in logits_strategy(), t in 0.0f64..1.0) {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let shrunk: Vec<f64> = v.iter().map(|x| (1.0 - t) * x + t * mean).collect();
            let before = energy_score(&l(&v), 1.0).unwrap();
            let after = energy_score(&l(&shrunk), 1.0).unwrap();
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn msp_range(v in logits_strategy()) {
            let k = v.len() as f64;
            let s = msp_score(&l(&v));
            prop_assert!(s >= -1e-15 && s <= 1.0 - 1.0 / k + 1e-12);
        }
    }
}
