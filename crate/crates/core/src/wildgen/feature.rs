use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_fractions, validate_weights, HumanLabel, Membership, PoolSpec, WildExample, WildPool};
use crate::error::{Error, Result};

/// Isotropic Gaussian blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub mean: Vec<f64>,
    pub std_dev: f64,
    /// Relative weight among sibling blobs; normalised on use.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Blob {
    pub fn new(mean: Vec<f64>, std_dev: f64) -> Self {
        Self {
            mean,
            std_dev,
            weight: 1.0,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, offset: Option<&[f64]>, scale: f64) -> Vec<f64> {
        self.mean
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let z: f64 = rng.sample(StandardNormal);
                m + offset.map_or(0.0, |o| o[j]) + self.std_dev * scale * z
            })
            .collect()
    }
}

/// Feature-space wild mixture. Covariate examples are ID class blobs moved by
/// a per-class offset with their spread inflated by `covariate_noise`; they
/// keep their class labels. Semantic blobs carry the OOD label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMixtureSpec {
    pub pi_c: f64,
    pub pi_s: f64,
    /// One blob per class; `K = classes.len()`.
    pub classes: Vec<Blob>,
    /// Per-class mean offsets of the covariate component (zeros if empty).
    #[serde(default)]
    pub covariate_offsets: Vec<Vec<f64>>,
    /// Standard-deviation multiplier of the covariate component.
    #[serde(default = "one")]
    pub covariate_noise: f64,
    #[serde(default)]
    pub semantic_blobs: Vec<Blob>,
    pub pool_size: usize,
    pub labeled_id_size: usize,
    /// Held-out test sizes `[id, covariate, semantic]`.
    #[serde(default)]
    pub held_out: [usize; 3],
}

impl FeatureMixtureSpec {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        const P: &str = "feature_mixture";
        validate_weights(P, self.pi_c, self.pi_s)?;
        if self.classes.len() < 2 {
            return Err(Error::config(
                format!("{P}.classes"),
                format!("need at least 2 classes, got {}", self.classes.len()),
            ));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::config(format!("{P}.classes[0].mean"), "dimension must be >= 1"));
        }
        let check_blob = |b: &Blob, field: String| -> Result<()> {
            if b.mean.len() != d {
                return Err(Error::config(
                    format!("{field}.mean"),
                    format!("dimension {} differs from {d}", b.mean.len()),
                ));
            }
            if b.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("{field}.mean"), "must be finite"));
            }
            if !(b.std_dev > 0.0 && b.std_dev.is_finite()) {
                return Err(Error::config(format!("{field}.std_dev"), "must be > 0"));
            }
            if !(b.weight > 0.0 && b.weight.is_finite()) {
                return Err(Error::config(format!("{field}.weight"), "must be > 0"));
            }
            Ok(())
        };
        for (i, b) in self.classes.iter().enumerate() {
            check_blob(b, format!("{P}.classes[{i}]"))?;
        }
        for (i, b) in self.semantic_blobs.iter().enumerate() {
            check_blob(b, format!("{P}.semantic_blobs[{i}]"))?;
        }
        if self.semantic_blobs.is_empty() && (self.pi_s > 0.0 || self.held_out[2] > 0) {
            return Err(Error::config(
                format!("{P}.semantic_blobs"),
                "empty while semantic examples are requested",
            ));
        }
        if !self.covariate_offsets.is_empty() {
            if self.covariate_offsets.len() != self.classes.len() {
                return Err(Error::config(
                    format!("{P}.covariate_offsets"),
                    format!("need one offset per class ({})", self.classes.len()),
                ));
            }
            if let Some(i) = self.covariate_offsets.iter().position(|o| o.len() != d) {
                return Err(Error::config(
                    format!("{P}.covariate_offsets[{i}]"),
                    format!("dimension differs from {d}"),
                ));
            }
        }
        if !(self.covariate_noise > 0.0 && self.covariate_noise.is_finite()) {
            return Err(Error::config(format!("{P}.covariate_noise"), "must be > 0"));
        }
        if self.pool_size == 0 {
            return Err(Error::config(format!("{P}.pool_size"), "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: HumanLabel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestSplits {
    pub id: Vec<LabeledPoint>,
    pub covariate: Vec<LabeledPoint>,
    pub semantic: Vec<LabeledPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    /// `S_in`: labeled ID examples with visible class labels.
    pub labeled_id: Vec<LabeledPoint>,
    pub pool: WildPool,
    pub tests: TestSplits,
}

fn pick<R: Rng + ?Sized>(rng: &mut R, blobs: &[Blob]) -> usize {
    let total: f64 = blobs.iter().map(|b| b.weight).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, b) in blobs.iter().enumerate() {
        acc += b.weight;
        if u < acc {
            return i;
        }
    }
    blobs.len() - 1
}

struct Sampler<'a> {
    spec: &'a FeatureMixtureSpec,
}

impl Sampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, membership: Membership) -> LabeledPoint {
        let spec = self.spec;
        match membership {
            Membership::Id => {
                let c = pick(rng, &spec.classes);
                LabeledPoint {
                    features: spec.classes[c].sample(rng, None, 1.0),
                    label: HumanLabel::Class(c as u32 + 1),
                }
            }
            Membership::Covariate => {
                let c = pick(rng, &spec.classes);
                let offset = spec.covariate_offsets.get(c).map(Vec::as_slice);
                LabeledPoint {
                    features: spec.classes[c].sample(rng, offset, spec.covariate_noise),
                    label: HumanLabel::Class(c as u32 + 1),
                }
            }
            Membership::Semantic => {
                let b = pick(rng, &spec.semantic_blobs);
                LabeledPoint {
                    features: spec.semantic_blobs[b].sample(rng, None, 1.0),
                    label: HumanLabel::Ood,
                }
            }
        }
    }
}

/// Draws `S_in`, the wild pool and the held-out test splits. Each part uses
/// its own RNG stream so resizing one part leaves the others unchanged.
/// Pool scores stay unset until the pool is scored.
pub fn sample_feature_wild(spec: &FeatureMixtureSpec, seed: u64) -> Result<FeatureSample> {
    spec.validate()?;
    let sampler = Sampler { spec };
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        rng
    };

    let mut rng = stream(0);
    let labeled_id = (0..spec.labeled_id_size)
        .map(|_| sampler.draw(&mut rng, Membership::Id))
        .collect();

    let mut rng = stream(1);
    let id_w = 1.0 - spec.pi_c - spec.pi_s;
    let examples = (0..spec.pool_size)
        .map(|id| {
            let u: f64 = rng.random();
            let membership = if u < id_w {
                Membership::Id
            } else if u < id_w + spec.pi_c {
                Membership::Covariate
            } else {
                Membership::Semantic
            };
            let p = sampler.draw(&mut rng, membership);
            WildExample {
                id,
                features: Some(p.features),
                score: None,
                membership,
                class_label: p.label,
            }
        })
        .collect();
    let pool = WildPool {
        examples,
        spec: PoolSpec::Feature(spec.clone()),
        seed,
    };
    check_fractions("feature pool", pool.membership_counts(), spec.pi_c, spec.pi_s);

    let mut tests = TestSplits::default();
    for (split, m, n, s) in [
        (&mut tests.id, Membership::Id, spec.held_out[0], 2),
        (&mut tests.covariate, Membership::Covariate, spec.held_out[1], 3),
        (&mut tests.semantic, Membership::Semantic, spec.held_out[2], 4),
    ] {
        let mut rng = stream(s);
        *split = (0..n).map(|_| sampler.draw(&mut rng, m)).collect();
    }

    Ok(FeatureSample {
        labeled_id,
        pool,
        tests,
    })
}
