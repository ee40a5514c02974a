use serde::{Deserialize, Serialize};

use crate::dataio::TargetMatrix;
use crate::error::{Error, Result};

/// RMS errors in mm. `total` pools both components: total² = (lat² + ant²)/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsReport {
    pub total: f64,
    pub lateral: f64,
    pub anterior: f64,
}

impl RmsReport {
    pub fn from_components(lateral: f64, anterior: f64) -> Self {
        RmsReport { total: pooled_total(lateral, anterior), lateral, anterior }
    }
}

pub fn pooled_total(lateral: f64, anterior: f64) -> f64 {
    ((lateral * lateral + anterior * anterior) / 2.0).sqrt()
}

pub fn rms_error(pred: &TargetMatrix, truth: &TargetMatrix) -> Result<RmsReport> {
    if pred.rows() != truth.rows() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} targets", pred.rows(), truth.rows())));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("cannot score an empty prediction".into()));
    }
    let n = pred.rows() as f64;
    let (mut ant, mut lat) = (0.0, 0.0);
    for (p, t) in pred.data.iter().zip(&truth.data) {
        ant += (p[0] - t[0]).powi(2);
        lat += (p[1] - t[1]).powi(2);
    }
    Ok(RmsReport::from_components((lat / n).sqrt(), (ant / n).sqrt()))
}

/// Mean over rows and both components of the squared error, mm².
pub fn mean_squared_error(pred: &TargetMatrix, truth: &TargetMatrix) -> Result<f64> {
    let r = rms_error(pred, truth)?;
    Ok(r.total * r.total)
}
