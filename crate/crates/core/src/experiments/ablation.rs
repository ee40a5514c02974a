use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rms_error, RmsReport};
use super::pipeline::{fit_matrices, pelvis, prepare, EvalConfig};
use crate::dataio::{split, FeatureLayout, FeatureMatrix, SplitSpec, Standardizer};
use crate::error::{Error, Result};
use crate::types::{Constellation, Recording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub constellation: Constellation,
    pub test: RmsReport,
    /// Train mean squared error, mm².
    pub train_mse: f64,
}

/// Best and worst constellation for one sensor count, by test total RMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub count: usize,
    pub best: AblationEntry,
    pub worst: AblationEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    /// In canonical constellation order.
    pub entries: Vec<AblationEntry>,
}

impl AblationResult {
    pub fn get(&self, c: Constellation) -> Option<&AblationEntry> {
        self.entries.iter().find(|e| e.constellation == c)
    }

    /// Ties go to the canonically smaller constellation.
    pub fn extremes(&self) -> Vec<Extremes> {
        (1..=7)
            .filter_map(|count| {
                let group: Vec<&AblationEntry> = self.entries.iter().filter(|e| e.constellation.len() == count).collect();
                let best = group.iter().copied().reduce(|a, b| {
                    if b.test.total < a.test.total || (b.test.total == a.test.total && b.constellation < a.constellation) {
                        b
                    } else {
                        a
                    }
                })?;
                let worst = group.iter().copied().reduce(|a, b| {
                    if b.test.total > a.test.total || (b.test.total == a.test.total && b.constellation < a.constellation) {
                        b
                    } else {
                        a
                    }
                })?;
                Some(Extremes { count, best: best.clone(), worst: worst.clone() })
            })
            .collect()
    }

    /// Pairs `(c, c′)` with `c ⊂ c′` whose train MSE grows by more than `tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> Vec<(Constellation, Constellation)> {
        let mut out = Vec::new();
        for small in &self.entries {
            for big in &self.entries {
                if small.constellation != big.constellation
                    && small.constellation.is_subset_of(big.constellation)
                    && big.train_mse > small.train_mse + tol
                {
                    out.push((small.constellation, big.constellation));
                }
            }
        }
        out
    }
}

/// Columns of `x` (built for a superset constellation) that belong to `sub`.
fn select_columns(x: &FeatureMatrix, sub: Constellation) -> FeatureMatrix {
    let full = x.layout.constellation;
    let per_sensor = x.cols / full.len();
    let mut cols = Vec::with_capacity(sub.len() * per_sensor);
    for (pos, s) in full.sensors().enumerate() {
        if sub.contains(s) {
            cols.extend(pos * per_sensor..(pos + 1) * per_sensor);
        }
    }
    let data = (0..x.rows).flat_map(|r| cols.iter().map(move |&c| x.data[r * x.cols + c])).collect();
    FeatureMatrix {
        rows: x.rows,
        cols: cols.len(),
        data,
        layout: FeatureLayout::new(sub, x.layout.selection),
        times: x.times.clone(),
        segments: x.segments.clone(),
        stats: x.stats.as_ref().map(|s| Standardizer {
            mean: cols.iter().map(|&c| s.mean[c]).collect(),
            scale: cols.iter().map(|&c| s.scale[c]).collect(),
        }),
    }
}

/// Evaluates every non-empty subset of the recording's sensors with the same
/// per-step half split. `cfg.constellation` is ignored.
pub fn run_ablation(rec: &Recording, cfg: &EvalConfig) -> Result<AblationResult> {
    let rec = pelvis(rec)?;
    let available = rec.constellation().ok_or_else(|| Error::Empty("recording has no IMU series".into()))?;
    if available != Constellation::FULL {
        return Err(Error::ConfigInvalid(format!("ablation needs all 7 sensors, recording has {available}")));
    }
    let (train, test) = split(&rec, &SplitSpec::half_of_each_step())?;
    let full_cfg = EvalConfig { constellation: Constellation::FULL, ..cfg.clone() };
    let ((xtr, ytr), te) = prepare(&train.blocks, &test.blocks, &full_cfg)?;
    let (xte, yte) = te.ok_or_else(|| Error::Empty("no test data".into()))?;
    let all: Vec<Constellation> = {
        let mut v: Vec<_> = Constellation::all().collect();
        v.sort();
        v
    };
    let entries = all
        .par_iter()
        .map(|&c| {
            let cfg_c = EvalConfig { constellation: c, ..cfg.clone() };
            let fitted = fit_matrices(&select_columns(&xtr, c), &ytr, &cfg_c)?;
            let pred = fitted.model.predict(&select_columns(&xte, c))?;
            log::debug!("ablation {c}: train mse {:.4}", fitted.train_mse);
            Ok(AblationEntry { constellation: c, test: rms_error(&pred, &yte)?, train_mse: fitted.train_mse })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationResult { entries })
}
