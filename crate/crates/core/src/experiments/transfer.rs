use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rms_error, RmsReport};
use super::pipeline::{fit_matrices, pelvis, EvalConfig};
use crate::dataio::{build_features_blocks, split, standardize, SplitSpec};
use crate::error::{Error, Result};
use crate::types::Recording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub eval: EvalConfig,
    /// Seconds of the target's standing data used for calibration; 0 disables it.
    pub calib_seconds: f64,
    /// Also train on the target's own training halves (leakage control).
    pub include_target: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { eval: EvalConfig::default(), calib_seconds: 30.0, include_target: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub target: String,
    /// Pooled model, no target data.
    pub uncalibrated: RmsReport,
    /// Pooled model fine-tuned on the target's standing data.
    pub calibrated: RmsReport,
    pub calib_samples: usize,
}

/// First `samples` standing samples of the recording, as contiguous blocks.
fn standing_blocks(rec: &Recording, samples: usize) -> Vec<Recording> {
    let mut left = samples;
    let mut out = Vec::new();
    for (label, run) in rec.step_runs() {
        if left == 0 {
            break;
        }
        if rec.manifest.protocol_steps.get(label).is_some_and(|s| s.is_standing()) {
            let take = run.len().min(left);
            out.push(rec.slice(run.start..run.start + take));
            left -= take;
        }
    }
    out
}

/// Second halves of the walking steps.
fn walking_test_blocks(rec: &Recording) -> Result<(Vec<Recording>, Vec<Recording>)> {
    let (train, test) = split(rec, &SplitSpec::half_of_each_step())?;
    let walking = |b: &Recording| !b.is_standing_sample(0);
    Ok((train.blocks, test.blocks.into_iter().filter(walking).collect()))
}

/// Leave-one-subject-out transfer for `target`.
pub fn run_transfer(recordings: &[Recording], target: &str, cfg: &TransferConfig) -> Result<TransferResult> {
    if recordings.len() < 2 {
        return Err(Error::ConfigInvalid("transfer needs at least 2 subjects".into()));
    }
    let idx = recordings
        .iter()
        .position(|r| r.manifest.subject_id == target)
        .ok_or_else(|| Error::ConfigInvalid(format!("subject {target:?} not among the recordings")))?;
    let recs = recordings.iter().map(pelvis).collect::<Result<Vec<_>>>()?;
    let (target_train, test_blocks) = walking_test_blocks(&recs[idx])?;
    if test_blocks.is_empty() {
        return Err(Error::Empty(format!("subject {target:?} has no walking steps to test on")));
    }
    let mut train_blocks: Vec<Recording> =
        recs.iter().enumerate().filter(|(i, _)| *i != idx).map(|(_, r)| r.clone()).collect();
    if cfg.include_target {
        train_blocks.extend(target_train);
    }

    let sel = cfg.eval.selection();
    let c = cfg.eval.constellation;
    let (xtr, ytr) = build_features_blocks(&train_blocks, c, sel)?;
    let (xte, yte) = build_features_blocks(&test_blocks, c, sel)?;
    let (xtr, others, stats) = standardize(&xtr, &[&xte])?;
    let fitted = fit_matrices(&xtr, &ytr, &cfg.eval)?;
    let uncalibrated = rms_error(&fitted.model.predict(&others[0])?, &yte)?;

    let samples = (cfg.calib_seconds * recs[idx].manifest.sample_rate).round() as usize;
    let calib = standing_blocks(&recs[idx], samples);
    let calib_len: usize = calib.iter().map(Recording::len).sum();
    let calibrated = if calib_len == 0 {
        uncalibrated
    } else {
        let (xc, yc) = build_features_blocks(&calib, c, sel)?;
        let xc = stats.apply(&xc)?;
        let tuned = fitted.model.fine_tune(&xc, &yc, &cfg.eval.train)?;
        rms_error(&tuned.predict(&others[0])?, &yte)?
    };
    Ok(TransferResult { target: target.to_string(), uncalibrated, calibrated, calib_samples: calib_len })
}

/// Transfer with every subject in turn as the target.
pub fn run_transfer_all(recordings: &[Recording], cfg: &TransferConfig) -> Result<Vec<TransferResult>> {
    recordings
        .par_iter()
        .map(|r| run_transfer(recordings, &r.manifest.subject_id, cfg))
        .collect()
}
