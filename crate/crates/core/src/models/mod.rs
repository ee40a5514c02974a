//! Linear and LSTM regressors from IMU features to pelvis-frame COP.

mod adam;
mod io;
mod linear;
mod lstm;

use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureMatrix, Standardizer, TargetMatrix};
use crate::error::{Error, Result};

pub use adam::Adam;
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use linear::{fine_tune_linear, fit_linear_exact, fit_linear_gd, predict_linear, LinearModel, DEFAULT_RIDGE};
pub use lstm::{
    fine_tune_lstm, fit_lstm, lstm_forward, lstm_gradient, lstm_loss, predict_lstm, window_ends, LstmCache,
    LstmGradient, LstmModel, TargetScaler,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a train-MSE improvement of at least `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// LSTM hidden units.
    pub units: usize,
    /// LSTM window length, samples.
    pub window: usize,
    /// Strength of the pull toward prior weights when fine-tuning a linear model.
    pub prior_strength: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            min_delta: 1e-6,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            units: 100,
            window: 10,
            prior_strength: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.patience == 0 || self.batch_size == 0 || self.units == 0 || self.window == 0 {
            return bad("patience, batch_size, units and window must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon be positive");
        }
        if !(self.prior_strength >= 0.0) || !(self.min_delta >= 0.0) {
            return bad("prior_strength and min_delta must be ≥ 0");
        }
        Ok(())
    }
}

/// Per-epoch mean train loss, in standardized target units for the LSTM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epoch_loss: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainingCurve {
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.epoch_loss
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

/// Any trained regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Lstm(LstmModel),
}

impl Model {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<TargetMatrix> {
        match self {
            Model::Linear(m) => predict_linear(m, x),
            Model::Lstm(m) => predict_lstm(m, x),
        }
    }

    /// Continues training on calibration data.
    pub fn fine_tune(&self, x: &FeatureMatrix, y: &TargetMatrix, cfg: &TrainConfig) -> Result<Model> {
        match self {
            Model::Linear(m) => fine_tune_linear(m, x, y, cfg).map(Model::Linear),
            Model::Lstm(m) => fine_tune_lstm(m, x, y, cfg).map(|(m, _)| Model::Lstm(m)),
        }
    }

    pub fn stats(&self) -> &Standardizer {
        match self {
            Model::Linear(m) => &m.stats,
            Model::Lstm(m) => &m.stats,
        }
    }
}

/// Input matrix in the model's standardized space.
pub(crate) fn standardized<'a>(
    x: &'a FeatureMatrix,
    stats: &Standardizer,
) -> Result<std::borrow::Cow<'a, FeatureMatrix>> {
    if x.cols != stats.dim() {
        return Err(Error::DimensionMismatch { expected: stats.dim(), found: x.cols });
    }
    match &x.stats {
        Some(s) if s == stats => Ok(std::borrow::Cow::Borrowed(x)),
        Some(_) => Err(Error::ShapeMismatch("matrix was standardized with different statistics".into())),
        None => stats.apply(x).map(std::borrow::Cow::Owned),
    }
}

pub(crate) fn check_rows(x: &FeatureMatrix, y: &TargetMatrix) -> Result<()> {
    if x.rows != y.rows() {
        return Err(Error::ShapeMismatch(format!("{} feature rows vs {} target rows", x.rows, y.rows())));
    }
    if x.rows == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    Ok(())
}
