//! Joint objective: cross-entropy of the classifier on `S_in` plus the
//! class-labeled human examples, and `alpha` times the sigmoid-smoothed
//! level-set risk of the detector,
//!
//! ```text
//! mean_{x in S_in} sigmoid(-g(x)) + mean_{x in S_human^s} sigmoid(g(x))
//! ```
//!
//! which replaces the 0/1 indicators `1{g(x) <= 0}` and `1{g(x) > 0}`.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ClassifierParams, DetectorParams, JointParams};
use crate::error::{Error, Result};
use crate::wildgen::{HumanLabel, LabeledPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Detector hidden width; 0 gives a linear detector.
    pub hidden_width: usize,
    pub cosine_decay: bool,
    /// Also use class-labeled wild examples as positives of the detector term.
    pub detector_include_wild_id: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            learning_rate: 0.1,
            epochs: 300,
            batch_size: 0,
            seed: 0,
            hidden_width: 0,
            cosine_decay: false,
            detector_include_wild_id: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("train.alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub ce: f64,
    /// Unweighted detector risk.
    pub detector: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: ClassifierParams,
    pub detector: DetectorParams,
    pub loss_trace: Vec<LossRecord>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn stack(points: &[&[f64]], dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((points.len(), dim));
    for (mut row, p) in out.rows_mut().into_iter().zip(points) {
        row.assign(&ndarray::ArrayView1::from(*p));
    }
    out
}

/// The joint loss over fixed data, with analytic gradients.
#[derive(Debug, Clone)]
pub struct JointObjective {
    ce_x: Array2<f64>,
    ce_y: Vec<usize>,
    pos_x: Array2<f64>,
    neg_x: Array2<f64>,
    alpha: f64,
    num_classes: usize,
}

impl JointObjective {
    /// `human_cov` must carry class labels and `human_sem` the OOD label.
    pub fn new(
        s_in: &[LabeledPoint],
        human_cov: &[LabeledPoint],
        human_sem: &[LabeledPoint],
        alpha: f64,
        include_wild_in_detector: bool,
    ) -> Result<Self> {
        let first = s_in.first().ok_or_else(|| Error::Input("S_in is empty".into()))?;
        let dim = first.features.len();
        let all = s_in.iter().chain(human_cov).chain(human_sem);
        if let Some(p) = all.clone().find(|p| p.features.len() != dim) {
            return Err(Error::Input(format!(
                "feature dimension {} differs from {dim}",
                p.features.len()
            )));
        }
        if all.flat_map(|p| &p.features).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature".into()));
        }

        let mut ce_points = Vec::new();
        let mut ce_y = Vec::new();
        for p in s_in.iter().chain(human_cov) {
            let class = p
                .label
                .class_index()
                .ok_or_else(|| Error::Input("OOD label in a class-labeled training set".into()))?;
            ce_points.push(p.features.as_slice());
            ce_y.push(class);
        }
        if human_sem.iter().any(|p| p.label != HumanLabel::Ood) {
            return Err(Error::Input("class label in the semantic training set".into()));
        }
        let num_classes = ce_y.iter().max().map_or(0, |m| m + 1).max(2);

        let mut pos: Vec<&[f64]> = s_in.iter().map(|p| p.features.as_slice()).collect();
        if include_wild_in_detector {
            pos.extend(human_cov.iter().map(|p| p.features.as_slice()));
        }
        let neg: Vec<&[f64]> = human_sem.iter().map(|p| p.features.as_slice()).collect();

        Ok(Self {
            ce_x: stack(&ce_points, dim),
            ce_y,
            pos_x: stack(&pos, dim),
            neg_x: stack(&neg, dim),
            alpha,
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.ce_x.ncols()
    }

    /// Whether the detector term contributes at all.
    pub fn detector_active(&self) -> bool {
        self.alpha > 0.0 && self.neg_x.nrows() > 0
    }

    fn subset(&self, ce: &[usize], pos: &[usize], neg: &[usize]) -> Self {
        Self {
            ce_x: self.ce_x.select(Axis(0), ce),
            ce_y: ce.iter().map(|&i| self.ce_y[i]).collect(),
            pos_x: self.pos_x.select(Axis(0), pos),
            neg_x: self.neg_x.select(Axis(0), neg),
            alpha: self.alpha,
            num_classes: self.num_classes,
        }
    }

    pub fn loss(&self, p: &JointParams) -> LossRecord {
        self.evaluate(p, false).0
    }

    /// Loss and its gradient, flattened in [`JointParams::to_vec`] order.
    pub fn loss_and_gradient(&self, p: &JointParams) -> (LossRecord, Vec<f64>) {
        let (loss, grad) = self.evaluate(p, true);
        (loss, grad.expect("requested").to_vec())
    }

    fn evaluate(&self, p: &JointParams, with_grad: bool) -> (LossRecord, Option<JointParams>) {
        let mut grad = with_grad.then(|| JointParams {
            classifier: ClassifierParams::zeros(p.classifier.num_classes(), p.classifier.dim()),
            detector: DetectorParams::zeros(p.detector.dim(), p.detector.hidden_width()),
        });

        // Cross-entropy.
        let n = self.ce_x.nrows();
        let mut ce = 0.0;
        if n > 0 {
            let logits = p.classifier.logits_batch(&self.ce_x);
            let mut dlogits = Array2::<f64>::zeros(logits.raw_dim());
            for (r, row) in logits.rows().into_iter().enumerate() {
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                let lse = m + z.ln();
                ce += lse - row[self.ce_y[r]];
                if with_grad {
                    for (k, v) in row.iter().enumerate() {
                        dlogits[[r, k]] = (v - lse).exp() / n as f64;
                    }
                    dlogits[[r, self.ce_y[r]]] -= 1.0 / n as f64;
                }
            }
            ce /= n as f64;
            if let Some(g) = grad.as_mut() {
                g.classifier.weights = dlogits.t().dot(&self.ce_x);
                g.classifier.biases = dlogits.sum_axis(Axis(0));
            }
        }

        // Level-set detector risk.
        let mut det = 0.0;
        if self.detector_active() {
            let mut parts = Vec::with_capacity(2);
            for (xs, sign) in [(&self.pos_x, -1.0), (&self.neg_x, 1.0)] {
                if xs.nrows() == 0 {
                    continue;
                }
                let (h, g) = p.detector.forward_batch(xs);
                let m = xs.nrows() as f64;
                let s = g.mapv(|v| sigmoid(sign * v));
                det += s.sum() / m;
                // d sigmoid(sign * g) / dg = sign * s (1 - s)
                let dg = s.mapv(|v| sign * v * (1.0 - v) * self.alpha / m);
                parts.push((xs, h, dg));
            }
            if let Some(gr) = grad.as_mut() {
                let d = &mut gr.detector;
                for (xs, h, dg) in parts {
                    d.output_weights = &d.output_weights + &h.t().dot(&dg);
                    d.output_bias += dg.sum();
                    if p.detector.hidden_width() > 0 {
                        // dZ = (dg v^T) * (1 - h^2)
                        let dz = dg.view().insert_axis(Axis(1)).dot(&p.detector.output_weights.view().insert_axis(Axis(0)))
                            * h.mapv(|a| 1.0 - a * a);
                        d.hidden_weights = &d.hidden_weights + &dz.t().dot(xs);
                        d.hidden_biases = &d.hidden_biases + &dz.sum_axis(Axis(0));
                    }
                }
            }
        }

        let loss = LossRecord {
            epoch: 0,
            ce,
            detector: det,
            total: ce + self.alpha * det,
        };
        (loss, grad)
    }
}

fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.cosine_decay {
        cfg.learning_rate * 0.5 * (1.0 + (PI * epoch as f64 / cfg.epochs as f64).cos())
    } else {
        cfg.learning_rate
    }
}

fn chunk(perm: &[usize], b: usize, batches: usize) -> &[usize] {
    let n = perm.len();
    &perm[b * n / batches..(b + 1) * n / batches]
}

fn optimise(objective: &JointObjective, mut params: JointParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = [objective.ce_x.nrows(), objective.pos_x.nrows(), objective.neg_x.nrows()];
    let largest = sizes.into_iter().max().unwrap_or(0);
    let batches = if cfg.batch_size == 0 || cfg.batch_size >= largest {
        1
    } else {
        largest.div_ceil(cfg.batch_size)
    };
    let mut perms: Vec<Vec<usize>> = sizes.iter().map(|&n| (0..n).collect()).collect();
    let mut flat = params.to_vec();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = learning_rate(cfg, epoch - 1);
        if batches > 1 {
            for p in &mut perms {
                p.shuffle(&mut rng);
            }
        }
        for b in 0..batches {
            let (_, g) = if batches == 1 {
                objective.loss_and_gradient(&params)
            } else {
                objective
                    .subset(chunk(&perms[0], b, batches), chunk(&perms[1], b, batches), chunk(&perms[2], b, batches))
                    .loss_and_gradient(&params)
            };
            for (w, gi) in flat.iter_mut().zip(&g) {
                *w -= lr * gi;
            }
            params.assign(&flat);
        }
        let mut rec = objective.loss(&params);
        rec.epoch = epoch;
        if !rec.total.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: rec.total });
        }
        trace.push(rec);
    }

    Ok(TrainOutcome {
        classifier: params.classifier,
        detector: params.detector,
        loss_trace: trace,
    })
}

/// Trains classifier and detector on `S_in`, the class-labeled human examples
/// and the OOD-labeled human examples. Deterministic in `cfg.seed`.
pub fn train_joint(
    s_in: &[LabeledPoint],
    human_cov: &[LabeledPoint],
    human_sem: &[LabeledPoint],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let objective = JointObjective::new(s_in, human_cov, human_sem, cfg.alpha, cfg.detector_include_wild_id)?;
    if human_sem.is_empty() && cfg.alpha > 0.0 {
        log::warn!("no OOD-labeled human examples: detector term skipped");
    }
    let params = JointParams {
        classifier: ClassifierParams::zeros(objective.num_classes(), objective.dim()),
        detector: DetectorParams::init(objective.dim(), cfg.hidden_width, cfg.seed),
    };
    optimise(&objective, params, cfg)
}

/// Cross-entropy-only fit on `S_in`: the initial scoring model.
pub fn train_classifier(s_in: &[LabeledPoint], cfg: &TrainConfig) -> Result<ClassifierParams> {
    let cfg = TrainConfig {
        alpha: 0.0,
        hidden_width: 0,
        ..cfg.clone()
    };
    Ok(train_joint(s_in, &[], &[], &cfg)?.classifier)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: &[f64], label: HumanLabel) -> LabeledPoint {
        LabeledPoint {
            features: x.to_vec(),
            label,
        }
    }

    #[test]
    fn zero_detector_risk_is_one() {
        let s_in = vec![pt(&[1.0, 0.0], HumanLabel::Class(1)), pt(&[-1.0, 0.0], HumanLabel::Class(2))];
        let sem = vec![pt(&[0.0, 5.0], HumanLabel::Ood)];
        let obj = JointObjective::new(&s_in, &[], &sem, 1.0, false).unwrap();
        let p = JointParams {
            classifier: ClassifierParams::zeros(2, 2),
            detector: DetectorParams::zeros(2, 0),
        };
        let loss = obj.loss(&p);
        assert!((loss.detector - 1.0).abs() < 1e-15);
        assert!((loss.ce - 2f64.ln()).abs() < 1e-15);
        assert!((loss.total - (2f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_leaves_detector_untouched() {
        let s_in = vec![pt(&[1.0, 0.0], HumanLabel::Class(1)), pt(&[-1.0, 0.0], HumanLabel::Class(2))];
        let sem = vec![pt(&[0.0, 5.0], HumanLabel::Ood)];
        for h in [0, 3] {
            let cfg = TrainConfig {
                alpha: 0.0,
                hidden_width: h,
                epochs: 20,
                ..Default::default()
            };
            let out = train_joint(&s_in, &[], &sem, &cfg).unwrap();
            assert_eq!(out.detector, DetectorParams::init(2, h, cfg.seed));
            assert_ne!(out.classifier, ClassifierParams::zeros(2, 2));
        }
    }

    #[test]
    fn label_partition_is_enforced() {
        let s_in = vec![pt(&[1.0], HumanLabel::Class(1))];
        assert!(JointObjective::new(&s_in, &[pt(&[0.0], HumanLabel::Ood)], &[], 1.0, false).is_err());
        assert!(JointObjective::new(&s_in, &[], &[pt(&[0.0], HumanLabel::Class(2))], 1.0, false).is_err());
        assert!(JointObjective::new(&[], &[], &[], 1.0, false).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let s_in: Vec<_> = (0..20)
            .map(|i| pt(&[1e3 * (i as f64 - 10.0)], HumanLabel::Class(1 + (i % 2) as u32)))
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 10,
            ..Default::default()
        };
        match train_joint(&s_in, &[], &[], &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn minibatch_training_is_deterministic() {
        let s_in: Vec<_> = (0..40)
            .map(|i| pt(&[(i as f64).sin() * 3.0, (i as f64).cos()], HumanLabel::Class(1 + (i % 2) as u32)))
            .collect();
        let sem: Vec<_> = (0..15).map(|i| pt(&[0.1 * i as f64, 4.0], HumanLabel::Ood)).collect();
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 5,
            hidden_width: 4,
            seed: 3,
            cosine_decay: true,
            ..Default::default()
        };
        let a = train_joint(&s_in, &[], &sem, &cfg).unwrap();
        let b = train_joint(&s_in, &[], &sem, &cfg).unwrap();
        assert_eq!(a.classifier, b.classifier);
        assert_eq!(a.detector, b.detector);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    fn blobs(n: usize, seed: u64) -> (Vec<LabeledPoint>, Vec<LabeledPoint>) {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = |c: f64| c + rng.sample::<f64, _>(StandardNormal);
        let s_in = (0..n)
            .map(|i| pt(&[noise(-3.0), noise(if i % 2 == 0 { 1.5 } else { -1.5 })], HumanLabel::Class(1 + (i % 2) as u32)))
            .collect();
        let sem = (0..n).map(|_| pt(&[noise(3.0), noise(0.0)], HumanLabel::Ood)).collect();
        (s_in, sem)
    }

    fn random_params(obj: &JointObjective, hidden: usize, seed: u64) -> JointParams {
        use rand::Rng;
        let mut p = JointParams {
            classifier: ClassifierParams::zeros(obj.num_classes(), obj.dim()),
            detector: DetectorParams::zeros(obj.dim(), hidden),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..p.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.assign(&flat);
        p
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (s_in, sem) = blobs(15, 7);
        let cov = vec![pt(&[0.5, 0.2], HumanLabel::Class(2))];
        for hidden in [0, 8] {
            let obj = JointObjective::new(&s_in, &cov, &sem, 2.5, true).unwrap();
            for seed in 0..5 {
                let p = random_params(&obj, hidden, seed);
                let (_, analytic) = obj.loss_and_gradient(&p);
                let base = p.to_vec();
                let h = 1e-5;
                let mut q = p.clone();
                let numeric: Vec<f64> = (0..base.len())
                    .map(|i| {
                        let mut v = base.clone();
                        v[i] += h;
                        q.assign(&v);
                        let up = obj.loss(&q).total;
                        v[i] -= 2.0 * h;
                        q.assign(&v);
                        (up - obj.loss(&q).total) / (2.0 * h)
                    })
                    .collect();
                for (a, n) in analytic.iter().zip(&numeric) {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                    assert!(rel < 1e-4, "H={hidden}: analytic {a} vs numeric {n}");
                }
            }
        }
    }

    #[test]
    fn full_batch_loss_is_monotone_for_linear_detector() {
        let (s_in, sem) = blobs(60, 1);
        let cfg = TrainConfig {
            alpha: 1.0,
            learning_rate: 0.05,
            epochs: 200,
            ..Default::default()
        };
        let out = train_joint(&s_in, &[], &sem, &cfg).unwrap();
        for w in out.loss_trace.windows(2) {
            assert!(w[1].total <= w[0].total + 1e-12, "{:?}", w);
        }
    }

    #[test]
    fn surrogate_approaches_zero_one_risk() {
        let (s_in, sem) = blobs(40, 2);
        let obj = JointObjective::new(&s_in, &[], &sem, 1.0, false).unwrap();
        let p = random_params(&obj, 0, 11);
        let zero_one = |p: &JointParams| {
            let g = |x: &LabeledPoint| p.detector.g(&x.features).unwrap();
            s_in.iter().filter(|x| g(x) <= 0.0).count() as f64 / s_in.len() as f64
                + sem.iter().filter(|x| g(x) > 0.0).count() as f64 / sem.len() as f64
        };
        let target = zero_one(&p);
        let mut gaps = Vec::new();
        for scale in [1.0, 10.0, 100.0] {
            let mut q = p.clone();
            q.detector.output_weights = &p.detector.output_weights * scale;
            q.detector.output_bias = p.detector.output_bias * scale;
            assert_eq!(zero_one(&q), target);
            gaps.push((obj.loss(&q).detector - target).abs());
        }
        assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.02, "{gaps:?}");
    }

    #[test]
    fn separable_blobs_give_low_detector_risk() {
        let (s_in, sem) = blobs(200, 3);
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let out = train_joint(&s_in, &[], &sem, &cfg).unwrap();
        assert!(out.loss_trace.last().unwrap().detector < 0.05);
    }
}
