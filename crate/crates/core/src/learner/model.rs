use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Multinomial logistic classifier: `logits = W x + b` with `W` of shape `K x d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierParams {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl ClassifierParams {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((num_classes, dim)),
            biases: Array1::zeros(num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.dim())?;
        let x = ArrayView1::from(x);
        Ok((self.weights.dot(&x) + &self.biases).to_vec())
    }

    pub(crate) fn logits_batch(&self, xs: &Array2<f64>) -> Array2<f64> {
        xs.dot(&self.weights.t()) + self.biases.view().insert_axis(Axis(0))
    }
}

/// Predicted class in `1..=K`; ties go to the smallest class.
pub fn classify(f: &ClassifierParams, x: &[f64]) -> Result<u32> {
    let logits = f.logits(x)?;
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(best as u32 + 1)
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Input(format!("feature dimension {} does not match model dimension {dim}", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite feature {v}")));
    }
    Ok(())
}

/// Binary detector `g(x)`, positive on the ID side. With `H = 0` it is linear,
/// `g(x) = v . x + c`; otherwise `g(x) = v . tanh(U x + a) + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorParams {
    pub hidden_weights: Array2<f64>,
    pub hidden_biases: Array1<f64>,
    pub output_weights: Array1<f64>,
    pub output_bias: f64,
}

impl DetectorParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        let width = if hidden == 0 { dim } else { hidden };
        Self {
            hidden_weights: Array2::zeros((hidden, dim)),
            hidden_biases: Array1::zeros(hidden),
            output_weights: Array1::zeros(width),
            output_bias: 0.0,
        }
    }

    /// Zeros for the linear detector, `U(-0.1, 0.1)` otherwise.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(dim, hidden);
        if hidden > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || rng.random_range(-0.1..0.1);
            p.hidden_weights.mapv_inplace(|_| draw());
            p.hidden_biases.mapv_inplace(|_| draw());
            p.output_weights.mapv_inplace(|_| draw());
            p.output_bias = draw();
        }
        p
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_biases.len()
    }

    pub fn dim(&self) -> usize {
        if self.hidden_width() == 0 {
            self.output_weights.len()
        } else {
            self.hidden_weights.ncols()
        }
    }

    /// ID-oriented output; the detector says ID when it is positive.
    pub fn g(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        let x = ArrayView1::from(x);
        let h = if self.hidden_width() == 0 {
            x.to_owned()
        } else {
            (self.hidden_weights.dot(&x) + &self.hidden_biases).mapv(f64::tanh)
        };
        Ok(self.output_weights.dot(&h) + self.output_bias)
    }

    /// OOD-oriented score `-g(x)`, comparable with the other OOD scores.
    pub fn ood_score(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.g(x)?)
    }

    /// Hidden activations (or the inputs themselves when linear) and outputs.
    pub(crate) fn forward_batch(&self, xs: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let h = if self.hidden_width() == 0 {
            xs.clone()
        } else {
            (xs.dot(&self.hidden_weights.t()) + self.hidden_biases.view().insert_axis(Axis(0))).mapv(f64::tanh)
        };
        let g = h.dot(&self.output_weights) + self.output_bias;
        (h, g)
    }
}

/// Classifier and detector parameters, flattenable for optimisation and
/// finite-difference checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointParams {
    pub classifier: ClassifierParams,
    pub detector: DetectorParams,
}

impl JointParams {
    pub fn len(&self) -> usize {
        let c = &self.classifier;
        let d = &self.detector;
        c.weights.len() + c.biases.len() + d.hidden_weights.len() + d.hidden_biases.len() + d.output_weights.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let c = &self.classifier;
        let d = &self.detector;
        c.weights
            .iter()
            .chain(c.biases.iter())
            .chain(d.hidden_weights.iter())
            .chain(d.hidden_biases.iter())
            .chain(d.output_weights.iter())
            .chain(std::iter::once(&d.output_bias))
            .copied()
            .collect()
    }

    /// Overwrites every parameter from `flat` (same order as [`Self::to_vec`]).
    pub fn assign(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut it = flat.iter().copied();
        let c = &mut self.classifier;
        let d = &mut self.detector;
        for slot in c
            .weights
            .iter_mut()
            .chain(c.biases.iter_mut())
            .chain(d.hidden_weights.iter_mut())
            .chain(d.hidden_biases.iter_mut())
            .chain(d.output_weights.iter_mut())
            .chain(std::iter::once(&mut d.output_bias))
        {
            *slot = it.next().expect("length checked");
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_model_predicts_first_class() {
        let f = ClassifierParams::zeros(3, 2);
        assert_eq!(classify(&f, &[1.0, -2.0]).unwrap(), 1);
    }

    #[test]
    fn one_hot_direction() {
        let mut f = ClassifierParams::zeros(3, 3);
        for k in 0..3 {
            f.weights[[k, k]] = 1.0;
        }
        for k in 0..3 {
            let mut x = vec![0.0; 3];
            x[k] = 2.0;
            assert_eq!(classify(&f, &x).unwrap(), k as u32 + 1);
        }
    }

    #[test]
    fn classify_matches_direct_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let (k, d) = (rng.random_range(2..6), rng.random_range(1..5));
            let mut f = ClassifierParams::zeros(k, d);
            f.weights.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            f.biases.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut best = (0, f64::NEG_INFINITY);
            for row in 0..k {
                let mut v = f.biases[row];
                for (col, xc) in x.iter().enumerate() {
                    v += f.weights[[row, col]] * xc;
                }
                if v > best.1 {
                    best = (row, v);
                }
            }
            assert_eq!(classify(&f, &x).unwrap(), best.0 as u32 + 1);
        }
    }

    #[test]
    fn input_errors() {
        let f = ClassifierParams::zeros(2, 2);
        assert!(matches!(classify(&f, &[f64::NAN, 0.0]), Err(Error::Input(_))));
        assert!(matches!(classify(&f, &[0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn flatten_roundtrip_and_batch_agreement() {
        let mut p = JointParams {
            classifier: ClassifierParams::zeros(3, 2),
            detector: DetectorParams::init(2, 4, 1),
        };
        let flat: Vec<f64> = (0..p.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        p.assign(&flat);
        assert_eq!(p.to_vec(), flat);
        let xs = Array2::from_shape_vec((2, 2), vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let (_, g) = p.detector.forward_batch(&xs);
        let lb = p.classifier.logits_batch(&xs);
        for r in 0..2 {
            let x = xs.row(r).to_vec();
            assert!((p.detector.g(&x).unwrap() - g[r]).abs() < 1e-14);
            let l = p.classifier.logits(&x).unwrap();
            for k in 0..3 {
                assert!((l[k] - lb[[r, k]]).abs() < 1e-14);
            }
        }
    }
}
