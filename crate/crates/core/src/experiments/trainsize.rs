use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::RmsReport;
use super::pipeline::{fit_and_evaluate, pelvis, EvalConfig};
use crate::dataio::{split, SplitSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::Recording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSizePoint {
    pub seconds: f64,
    pub repeats: Vec<RmsReport>,
    pub mean_total: f64,
    /// Population standard deviation of the total RMS across repeats.
    pub std_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSizeCurve {
    pub points: Vec<TrainSizePoint>,
}

/// For every size, `repeats` random draws of contiguous training blocks; each
/// model is scored on the complement of its draw.
pub fn run_train_size_curve(
    rec: &Recording,
    sizes: &[f64],
    repeats: usize,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<TrainSizeCurve> {
    if repeats < 3 {
        return Err(Error::ConfigInvalid(format!("need at least 3 repeats per size, got {repeats}")));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] <= 0.0 {
        return Err(Error::ConfigInvalid("sizes must be positive and strictly increasing".into()));
    }
    let rec = pelvis(rec)?;
    let duration = rec.duration();
    if let Some(&max) = sizes.last() {
        if max >= duration {
            return Err(Error::SpecTooLarge { requested_s: max, available_s: duration });
        }
    }
    let jobs: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|i| (0..repeats).map(move |r| (i, r))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(i, r)| {
            let spec = SplitSpec::contiguous(sizes[i], derive_seed(seed, "train-size", (i * repeats + r) as u64));
            let (train, test) = split(&rec, &spec)?;
            let run_cfg = EvalConfig {
                train: crate::models::TrainConfig {
                    seed: derive_seed(seed, "train-size-fit", (i * repeats + r) as u64),
                    ..cfg.train.clone()
                },
                ..cfg.clone()
            };
            let ev = fit_and_evaluate(&train.blocks, &test.blocks, &run_cfg)?;
            log::debug!("train size {} s repeat {r}: {:.3} mm", sizes[i], ev.test.total);
            Ok(ev.test)
        })
        .collect::<Result<Vec<_>>>()?;
    let points = sizes
        .iter()
        .enumerate()
        .map(|(i, &seconds)| {
            let reps = reports[i * repeats..(i + 1) * repeats].to_vec();
            let n = reps.len() as f64;
            let mean_total = reps.iter().map(|r| r.total).sum::<f64>() / n;
            let std_total = (reps.iter().map(|r| (r.total - mean_total).powi(2)).sum::<f64>() / n).sqrt();
            TrainSizePoint { seconds, repeats: reps, mean_total, std_total }
        })
        .collect();
    Ok(TrainSizeCurve { points })
}
