//! Semi-supervised anomaly detector built on an OS-ELM autoencoder.
//!
//! The autoencoder is fitted to normal data (`t = x`), and the anomaly score
//! of a sample is its reconstruction mean squared error. Each streamed sample
//! is scored first and then learned with the forgetting rank-1 update, so the
//! model follows a drifting notion of "normal".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Activation, Matrix};
use crate::oselm::{check_ff, InitRange, OselmModel, UpdateStatus};

/// Default stability guard threshold on `1 + h·(P/ff²)·hᵀ`.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Hyperparameters shared by the detector, the testbeds and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub init_range: InitRange,
    /// Forgetting factor used when a step does not supply one.
    pub ff: f64,
    pub epsilon: f64,
    pub theta: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hidden: 16,
            activation: Activation::Sigmoid,
            init_range: InitRange::UNIT,
            ff: 1.0,
            epsilon: DEFAULT_EPSILON,
            theta: f64::INFINITY,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden must be at least 1".into()));
        }
        check_ff(self.ff)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if self.theta.is_nan() {
            return Err(Error::InvalidArgument("theta must not be NaN".into()));
        }
        Ok(())
    }
}

/// Result of one predict-then-train step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// `None` when the stability guard skipped the sample.
    pub score: Option<f64>,
    pub is_anomaly: bool,
    pub trained: UpdateStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnladDetector {
    model: OselmModel,
    epsilon: f64,
    theta: f64,
    default_ff: f64,
}

impl OnladDetector {
    pub fn new(n: usize, config: &DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let model = OselmModel::with_init_range(n, config.hidden, n, config.activation, config.init_range, seed)?;
        Self::from_model(model, config.epsilon, config.theta, config.ff)
    }

    /// Wraps an existing model; it must be an autoencoder (`m == n`).
    pub fn from_model(model: OselmModel, epsilon: f64, theta: f64, default_ff: f64) -> Result<Self> {
        if model.m() != model.n() {
            return Err(Error::dims("OnladDetector", format!("m == n ({})", model.n()), model.m()));
        }
        let config = DetectorConfig {
            hidden: model.n_hidden(),
            activation: model.activation(),
            init_range: InitRange::UNIT,
            ff: default_ff,
            epsilon,
            theta,
        };
        config.validate()?;
        Ok(OnladDetector {
            model,
            epsilon,
            theta,
            default_ff,
        })
    }

    pub fn model(&self) -> &OselmModel {
        &self.model
    }

    /// Direct access for tooling that needs to load or perturb state. The
    /// autoencoder shape cannot change through this handle.
    pub fn model_mut(&mut self) -> &mut OselmModel {
        &mut self.model
    }

    pub fn into_model(self) -> OselmModel {
        self.model
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn default_ff(&self) -> f64 {
        self.default_ff
    }

    pub fn set_theta(&mut self, theta: f64) -> Result<()> {
        if theta.is_nan() {
            return Err(Error::InvalidArgument("theta must not be NaN".into()));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<()> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be > 0")));
        }
        self.epsilon = epsilon;
        Ok(())
    }

    pub fn set_default_ff(&mut self, ff: f64) -> Result<()> {
        check_ff(ff)?;
        self.default_ff = ff;
        Ok(())
    }

    /// Batch initialisation on normal data (`t₀ = x₀`).
    pub fn init(&mut self, x0: &Matrix) -> Result<()> {
        self.model.init_batch(x0, x0)
    }

    /// Reconstruction MSE of one sample.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if !self.model.is_initialized() {
            return Err(Error::NotInitialized);
        }
        let h = self.model.hidden_row(x)?;
        Ok(self.score_hidden(x, &h))
    }

    pub fn score_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.rows()).map(|r| self.score(x.row(r))).collect()
    }

    fn score_hidden(&self, x: &[f64], h: &[f64]) -> f64 {
        let y = self.model.output_from_hidden(h);
        mse(x, &y)
    }

    /// Guard, score, then train on `x` with forgetting factor `ff` (or the
    /// detector default).
    pub fn train_step(&mut self, x: &[f64], ff: Option<f64>) -> Result<StepReport> {
        if !self.model.is_initialized() {
            return Err(Error::NotInitialized);
        }
        let ff = ff.unwrap_or(self.default_ff);
        check_ff(ff)?;
        let h = self.model.hidden_row(x)?;
        let denom = self.model.guard_denominator(&h, ff);
        if !(denom >= self.epsilon) {
            return Ok(StepReport {
                score: None,
                is_anomaly: false,
                trained: UpdateStatus::SkippedSingular,
            });
        }
        let score = self.score_hidden(x, &h);
        let trained = self.model.rank1_from_hidden(&h, x, ff, self.epsilon);
        Ok(StepReport {
            score: Some(score),
            is_anomaly: score > self.theta,
            trained,
        })
    }

    /// Sets `theta` to the `percentile`-th percentile (linear interpolation)
    /// of the scores of `x0`. This is a convenience for deployments that have
    /// no labelled anomalies; returns the chosen threshold.
    pub fn calibrate_theta(&mut self, x0: &Matrix, percentile: f64) -> Result<f64> {
        if !(0.0..=100.0).contains(&percentile) {
            return Err(Error::InvalidArgument(format!("percentile {percentile} outside [0, 100]")));
        }
        let mut scores = self.score_batch(x0)?;
        if scores.is_empty() {
            return Err(Error::InvalidArgument("cannot calibrate on an empty chunk".into()));
        }
        scores.sort_by(f64::total_cmp);
        let theta = percentile_sorted(&scores, percentile);
        self.theta = theta;
        Ok(theta)
    }
}

pub fn mse(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

pub(crate) fn percentile_sorted(sorted: &[f64], percentile: f64) -> f64 {
    let pos = percentile / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Box-Muller
    fn normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn config(hidden: usize, activation: Activation) -> DetectorConfig {
        DetectorConfig {
            hidden,
            activation,
            ..DetectorConfig::default()
        }
    }

    fn identity_detector(n: usize) -> OnladDetector {
        let model = OselmModel::from_parts(
            Activation::Identity,
            Matrix::identity(n),
            Matrix::zeros(1, n),
            Matrix::zeros(n, n),
            Matrix::zeros(n, n),
            false,
        )
        .unwrap();
        OnladDetector::from_model(model, DEFAULT_EPSILON, f64::INFINITY, 1.0).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 0.0]), 0.5);
        assert_eq!(mse(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn rejects_non_autoencoder() {
        let model = OselmModel::new_random(3, 2, 4, Activation::Identity, 1).unwrap();
        assert!(OnladDetector::from_model(model, DEFAULT_EPSILON, 1.0, 1.0).is_err());
    }

    #[test]
    fn score_requires_init() {
        let det = OnladDetector::new(4, &config(2, Activation::Sigmoid), 1).unwrap();
        assert!(matches!(det.score(&[0.0; 4]), Err(Error::NotInitialized)));
    }

    #[test]
    fn exact_fit_scores_zero() {
        let mut det = identity_detector(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = Matrix::random_uniform(4, 4, 0.0, 1.0, &mut rng);
        det.init(&x0).unwrap();
        for s in det.score_batch(&x0).unwrap() {
            assert!(s < 1e-12, "score {s}");
        }
    }

    #[test]
    fn init_too_small_propagates() {
        let mut det = OnladDetector::new(4, &config(6, Activation::Sigmoid), 1).unwrap();
        assert!(matches!(det.init(&Matrix::zeros(5, 4)), Err(Error::InitTooSmall { .. })));
    }

    #[test]
    fn repeated_sample_score_decreases() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut det = OnladDetector::new(6, &config(4, Activation::Sigmoid), seed).unwrap();
            det.init(&Matrix::random_uniform(30, 6, 0.0, 1.0, &mut rng)).unwrap();
            let x: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
            let first = det.train_step(&x, Some(1.0)).unwrap().score.unwrap();
            let second = det.train_step(&x, Some(1.0)).unwrap().score.unwrap();
            assert!(second < first, "seed {seed}: {second} !< {first}");
        }
    }

    #[test]
    fn guard_trigger_leaves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut det = OnladDetector::new(5, &config(3, Activation::Sigmoid), 3).unwrap();
        det.init(&Matrix::random_uniform(20, 5, 0.0, 1.0, &mut rng)).unwrap();
        det.model_mut().set_p(Matrix::identity(3).scale(-5.0)).unwrap();
        let snapshot = det.clone();
        let report = det.train_step(&[0.5; 5], None).unwrap();
        assert_eq!(report.trained, UpdateStatus::SkippedSingular);
        assert_eq!(report.score, None);
        assert!(!report.is_anomaly);
        assert_eq!(det, snapshot);
    }

    #[test]
    fn infinite_theta_never_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut det = OnladDetector::new(5, &config(3, Activation::Sigmoid), 4).unwrap();
        det.init(&Matrix::random_uniform(20, 5, 0.0, 1.0, &mut rng)).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect();
            assert!(!det.train_step(&x, None).unwrap().is_anomaly);
        }
    }

    #[test]
    fn train_step_never_moves_alpha_or_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut det = OnladDetector::new(5, &config(3, Activation::Sigmoid), 5).unwrap();
        det.init(&Matrix::random_uniform(20, 5, 0.0, 1.0, &mut rng)).unwrap();
        let alpha = det.model().alpha().clone();
        let bias = det.model().bias().clone();
        for _ in 0..100 {
            let x = Matrix::random_uniform(1, 5, 0.0, 1.0, &mut rng);
            let report = det.train_step(x.as_slice(), Some(0.97)).unwrap();
            assert!(report.score.unwrap() >= 0.0);
        }
        assert_eq!(det.model().alpha(), &alpha);
        assert_eq!(det.model().bias(), &bias);
    }

    #[test]
    fn outlier_scores_above_cluster_percentile() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let sigma = 0.05;
        let centre = [0.5, 0.4, 0.6, 0.5];
        let mut sample = |shift: f64| -> Vec<f64> {
            (0..n).map(|i| centre[i] + shift + sigma * normal(&mut rng)).collect()
        };
        let rows: Vec<Vec<f64>> = (0..200).map(|_| sample(0.0)).collect();
        let x0 = Matrix::from_rows(&rows).unwrap();
        let mut det = OnladDetector::new(n, &config(3, Activation::Sigmoid), 6).unwrap();
        det.init(&x0).unwrap();
        let held_out: Vec<Vec<f64>> = (0..500).map(|_| sample(0.0)).collect();
        let mut scores: Vec<f64> = held_out.iter().map(|x| det.score(x).unwrap()).collect();
        scores.sort_by(f64::total_cmp);
        let p99 = percentile_sorted(&scores, 99.0);
        let far: Vec<f64> = centre.iter().enumerate().map(|(i, c)| c + if i % 2 == 0 { 10.0 } else { -10.0 } * sigma).collect();
        assert!(det.score(&far).unwrap() > p99);
    }

    #[test]
    fn calibrate_theta_percentile() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut det = OnladDetector::new(5, &config(3, Activation::Sigmoid), 7).unwrap();
        let x0 = Matrix::random_uniform(40, 5, 0.0, 1.0, &mut rng);
        det.init(&x0).unwrap();
        let theta = det.calibrate_theta(&x0, 100.0).unwrap();
        let max = det.score_batch(&x0).unwrap().into_iter().fold(f64::MIN, f64::max);
        assert_eq!(theta, max);
        assert_eq!(det.theta(), max);
        assert!(det.calibrate_theta(&x0, 101.0).is_err());
        assert_eq!(percentile_sorted(&[0.0, 1.0, 2.0, 3.0], 50.0), 1.5);
    }

    #[test]
    fn identical_streams_are_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut det = OnladDetector::new(6, &config(4, Activation::Sigmoid), 99).unwrap();
            det.init(&Matrix::random_uniform(30, 6, 0.0, 1.0, &mut rng)).unwrap();
            (0..200)
                .map(|_| {
                    let x = Matrix::random_uniform(1, 6, 0.0, 1.0, &mut rng);
                    det.train_step(x.as_slice(), Some(0.95)).unwrap().score.unwrap().to_bits()
                })
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }
}
