//! Linear-logistic outcome classifier with an optional calibrator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::calibration::{sigmoid, Isotonic, Platt};
use super::features::SparseFeatures;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    #[serde(alias = "None")]
    None,
    #[serde(alias = "Sigmoid")]
    Sigmoid,
    #[serde(alias = "Isotonic")]
    Isotonic,
}

impl CalibrationKind {
    pub const ALL: [CalibrationKind; 3] = [CalibrationKind::None, CalibrationKind::Sigmoid, CalibrationKind::Isotonic];

    pub fn as_str(&self) -> &'static str {
        match self {
            CalibrationKind::None => "none",
            CalibrationKind::Sigmoid => "sigmoid",
            CalibrationKind::Isotonic => "isotonic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Some(CalibrationKind::None),
            "sigmoid" | "platt" => Some(CalibrationKind::Sigmoid),
            "isotonic" => Some(CalibrationKind::Isotonic),
            _ => None,
        }
    }
}

impl std::fmt::Display for CalibrationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Calibrator {
    None,
    Platt(Platt),
    Isotonic(Isotonic),
}

impl Calibrator {
    pub fn kind(&self) -> CalibrationKind {
        match self {
            Calibrator::None => CalibrationKind::None,
            Calibrator::Platt(_) => CalibrationKind::Sigmoid,
            Calibrator::Isotonic(_) => CalibrationKind::Isotonic,
        }
    }

    pub fn apply(&self, raw_score: f64) -> f64 {
        let p = match self {
            Calibrator::None => sigmoid(raw_score),
            Calibrator::Platt(p) => p.apply(raw_score),
            Calibrator::Isotonic(iso) => iso.apply(raw_score),
        };
        p.clamp(0.0, 1.0)
    }
}

/// Gradient-descent settings for the logistic fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { learning_rate: 0.5, l2: 1e-4, max_iterations: 2000, gradient_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityModel {
    /// `feature_dim + 1` entries, bias last.
    pub weights: Vec<f64>,
    pub calibrator: Calibrator,
    pub converged: bool,
}

/// Anything that maps an encoded `(t, s, a)` tuple to a probability.
pub trait Scorer {
    fn probability(&self, features: &SparseFeatures) -> f64;
}

impl ProbabilityModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    /// Linear score `w . x + bias`, accumulated over non-zero entries in
    /// index order.
    pub fn raw_score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_dim() {
            return Err(Error::Usage(format!(
                "feature vector has {} entries, model expects {}",
                features.len(),
                self.feature_dim()
            )));
        }
        let mut z = 0.0;
        for (&x, &w) in features.iter().zip(&self.weights) {
            if x != 0.0 {
                z += w * x;
            }
        }
        Ok(z + self.weights[self.feature_dim()])
    }

    pub fn raw_score_sparse(&self, features: &SparseFeatures) -> f64 {
        debug_assert_eq!(features.dim, self.feature_dim());
        let mut z = 0.0;
        for &(i, x) in &features.entries {
            if x != 0.0 {
                z += self.weights[i] * x;
            }
        }
        z + self.weights[self.feature_dim()]
    }
}

impl Scorer for ProbabilityModel {
    fn probability(&self, features: &SparseFeatures) -> f64 {
        self.calibrator.apply(self.raw_score_sparse(features))
    }
}

pub fn predict_probability(model: &ProbabilityModel, features: &[f64]) -> Result<f64> {
    Ok(model.calibrator.apply(model.raw_score(features)?))
}

fn check_classes(labels: &[bool], what: &str) -> Result<()> {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Dataset(format!(
            "{what} split has a single label class ({pos} positive of {})",
            labels.len()
        )));
    }
    Ok(())
}

/// Full-batch gradient descent on mean log-loss plus `l2/2 * |w|^2` (bias
/// unpenalised). Weights start at small seeded values. The calibrator, if
/// any, is fitted on the held-out rows' raw scores.
pub fn train_probability_model(
    train_features: &[Vec<f64>],
    train_labels: &[bool],
    holdout_features: &[Vec<f64>],
    holdout_labels: &[bool],
    calibration: CalibrationKind,
    seed: u64,
    settings: &TrainSettings,
) -> Result<ProbabilityModel> {
    if train_features.len() != train_labels.len() || holdout_features.len() != holdout_labels.len() {
        return Err(Error::Usage("features and labels differ in length".into()));
    }
    check_classes(train_labels, "training")?;
    let dim = train_features[0].len();
    if let Some(bad) = train_features.iter().chain(holdout_features).find(|x| x.len() != dim) {
        return Err(Error::Usage(format!("ragged feature matrix: {} vs {dim} columns", bad.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<f64> = (0..=dim).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let n = train_features.len() as f64;
    let mut grad = vec![0.0; dim + 1];
    let mut converged = false;

    for _ in 0..settings.max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in train_features.iter().zip(train_labels) {
            let mut z = weights[dim];
            for (&xi, &wi) in x.iter().zip(&weights) {
                if xi != 0.0 {
                    z += wi * xi;
                }
            }
            let err = sigmoid(z) - if y { 1.0 } else { 0.0 };
            for (g, &xi) in grad.iter_mut().zip(x) {
                if xi != 0.0 {
                    *g += err * xi;
                }
            }
            grad[dim] += err;
        }
        for (i, g) in grad.iter_mut().enumerate() {
            *g /= n;
            if i < dim {
                *g += settings.l2 * weights[i];
            }
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < settings.gradient_tolerance {
            converged = true;
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= settings.learning_rate * g;
        }
    }

    let mut model = ProbabilityModel { weights, calibrator: Calibrator::None, converged };
    if calibration != CalibrationKind::None {
        if holdout_features.is_empty() {
            return Err(Error::Dataset("calibration needs a non-empty held-out split".into()));
        }
        let scores: Vec<f64> = holdout_features.iter().map(|x| model.raw_score(x)).collect::<Result<_>>()?;
        model.calibrator = match calibration {
            CalibrationKind::Sigmoid => Calibrator::Platt(Platt::fit(&scores, holdout_labels)),
            CalibrationKind::Isotonic => Calibrator::Isotonic(Isotonic::fit(&scores, holdout_labels)),
            CalibrationKind::None => unreachable!(),
        };
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            xs.push(vec![0.0]);
            ys.push(false);
            xs.push(vec![1.0]);
            ys.push(true);
        }
        (xs, ys)
    }

    #[test]
    fn separable_toy_is_learned() {
        let (xs, ys) = separable();
        let m =
            train_probability_model(&xs, &ys, &xs, &ys, CalibrationKind::None, 0, &TrainSettings::default()).unwrap();
        assert!(predict_probability(&m, &[1.0]).unwrap() > 0.9);
        assert!(predict_probability(&m, &[0.0]).unwrap() < 0.1);
    }

    #[test]
    fn single_class_is_dataset_error() {
        let xs = vec![vec![0.0], vec![1.0]];
        let err = train_probability_model(
            &xs,
            &[true, true],
            &xs,
            &[true, true],
            CalibrationKind::None,
            0,
            &TrainSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
    }

    #[test]
    fn zero_weights_predict_half() {
        let m = ProbabilityModel { weights: vec![0.0; 4], calibrator: Calibrator::None, converged: true };
        assert_eq!(predict_probability(&m, &[3.0, -1.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let m = ProbabilityModel { weights: vec![0.0; 4], calibrator: Calibrator::None, converged: true };
        assert!(matches!(predict_probability(&m, &[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn same_seed_same_model() {
        let (xs, ys) = separable();
        let s = TrainSettings { max_iterations: 50, ..TrainSettings::default() };
        let a = train_probability_model(&xs, &ys, &xs, &ys, CalibrationKind::Isotonic, 9, &s).unwrap();
        let b = train_probability_model(&xs, &ys, &xs, &ys, CalibrationKind::Isotonic, 9, &s).unwrap();
        assert_eq!(a, b);
        assert!(!a.converged);
    }
}
