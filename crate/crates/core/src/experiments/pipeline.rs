use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{mean_squared_error, rms_error, RmsReport};
use crate::dataio::{
    build_features_blocks, split, standardize, ChannelKinds, ChannelSelection, FeatureMatrix, SplitSpec, TargetMatrix,
};
use crate::error::{Error, Result};
use crate::models::{fit_linear_exact, fit_linear_gd, fit_lstm, Model, TrainConfig, TrainingCurve, DEFAULT_RIDGE};
use crate::types::{Constellation, Frame, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    LinearGd,
    Lstm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::LinearGd => "linear-gd",
            ModelKind::Lstm => "lstm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "linear-gd" => Ok(ModelKind::LinearGd),
            "lstm" => Ok(ModelKind::Lstm),
            _ => Err(Error::ConfigInvalid(format!("unknown model {s:?} (expected linear, linear-gd or lstm)"))),
        }
    }
}

/// Everything needed to fit and score one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub model: ModelKind,
    pub channels: ChannelKinds,
    /// Past samples per channel for the linear models; the LSTM always sees
    /// single samples and gets its memory from the window.
    pub history: usize,
    pub constellation: Constellation,
    pub ridge: f64,
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: ModelKind::Linear,
            channels: ChannelKinds::GAM,
            history: 0,
            constellation: Constellation::FULL,
            ridge: DEFAULT_RIDGE,
            train: TrainConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn selection(&self) -> ChannelSelection {
        let history = if self.model == ModelKind::Lstm { 0 } else { self.history };
        ChannelSelection::new(self.channels, history)
    }

    /// Short label such as `linear GAM+hist10` or `lstm GA`.
    pub fn label(&self) -> String {
        let h = self.selection().history;
        let mut s = format!("{} {}", self.model, self.channels.to_string().to_uppercase());
        if h > 0 {
            s.push_str(&format!("+hist{h}"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    /// Train mean squared error, mm², averaged over both components.
    pub train_mse: f64,
    pub curve: Option<TrainingCurve>,
}

pub(crate) fn pelvis(rec: &Recording) -> Result<Recording> {
    if rec.cop_frame() == Frame::Pelvis {
        Ok(rec.clone())
    } else {
        rec.clone().into_pelvis_frame()
    }
}

/// Builds features for train and test blocks, standardized with train statistics.
pub fn prepare(
    train: &[Recording],
    test: &[Recording],
    cfg: &EvalConfig,
) -> Result<((FeatureMatrix, TargetMatrix), Option<(FeatureMatrix, TargetMatrix)>)> {
    let sel = cfg.selection();
    let (xtr, ytr) = build_features_blocks(train, cfg.constellation, sel)?;
    if test.is_empty() {
        let (xs, _, _) = standardize(&xtr, &[])?;
        return Ok(((xs, ytr), None));
    }
    let (xte, yte) = build_features_blocks(test, cfg.constellation, sel)?;
    let (xs, mut others, _) = standardize(&xtr, &[&xte])?;
    Ok(((xs, ytr), Some((others.remove(0), yte))))
}

pub fn fit_matrices(x: &FeatureMatrix, y: &TargetMatrix, cfg: &EvalConfig) -> Result<Fitted> {
    let (model, curve) = match cfg.model {
        ModelKind::Linear => (Model::Linear(fit_linear_exact(x, y, cfg.ridge)?), None),
        ModelKind::LinearGd => (Model::Linear(fit_linear_gd(x, y, cfg.ridge, &cfg.train)?), None),
        ModelKind::Lstm => {
            let (m, c) = fit_lstm(x, y, &cfg.train)?;
            (Model::Lstm(m), Some(c))
        }
    };
    let train_mse = mean_squared_error(&model.predict(x)?, y)?;
    Ok(Fitted { model, train_mse, curve })
}

/// Outcome of fitting on one part of the data and scoring on another.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub fitted: Fitted,
    pub test: RmsReport,
    pub prediction: TargetMatrix,
    pub truth: TargetMatrix,
}

pub fn fit_and_evaluate(train: &[Recording], test: &[Recording], cfg: &EvalConfig) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Empty("no test data".into()));
    }
    let ((xtr, ytr), te) = prepare(train, test, cfg)?;
    let (xte, yte) = te.expect("test blocks present");
    let fitted = fit_matrices(&xtr, &ytr, cfg)?;
    let prediction = fitted.model.predict(&xte)?;
    let test = rms_error(&prediction, &yte)?;
    Ok(Evaluation { fitted, test, prediction, truth: yte })
}

/// Trains on the first half of every protocol step and tests on the second half.
pub fn run_intra_subject(rec: &Recording, cfg: &EvalConfig) -> Result<Evaluation> {
    let rec = pelvis(rec)?;
    let (train, test) = split(&rec, &SplitSpec::half_of_each_step())?;
    fit_and_evaluate(&train.blocks, &test.blocks, cfg)
}
