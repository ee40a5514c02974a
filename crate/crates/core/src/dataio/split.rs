//! Leakage-free train/test partitions of a recording.

use std::ops::Range;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Recording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    /// The first `train_fraction` of every protocol step trains, the rest tests.
    PerStepFraction { train_fraction: f64 },
    /// `seconds` of training data as non-overlapping contiguous blocks of
    /// `block_seconds` (the last one shorter), placed at random by `seed`; the
    /// complement tests.
    ContiguousSeconds {
        seconds: f64,
        seed: u64,
        #[serde(default = "default_block_seconds")]
        block_seconds: f64,
    },
}

pub const DEFAULT_BLOCK_SECONDS: f64 = 10.0;

fn default_block_seconds() -> f64 {
    DEFAULT_BLOCK_SECONDS
}

impl SplitSpec {
    pub fn half_of_each_step() -> Self {
        SplitSpec::PerStepFraction { train_fraction: 0.5 }
    }

    pub fn contiguous(seconds: f64, seed: u64) -> Self {
        SplitSpec::ContiguousSeconds { seconds, seed, block_seconds: DEFAULT_BLOCK_SECONDS }
    }
}

/// One side of a split: sample ranges of the source recording and the
/// corresponding contiguous sub-recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPart {
    pub ranges: Vec<Range<usize>>,
    pub blocks: Vec<Recording>,
}

impl SplitPart {
    fn from_ranges(rec: &Recording, ranges: Vec<Range<usize>>) -> Self {
        let ranges: Vec<_> = ranges.into_iter().filter(|r| !r.is_empty()).collect();
        let blocks = ranges.iter().map(|r| rec.slice(r.clone())).collect();
        SplitPart { ranges, blocks }
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }
}

/// Splits `rec` into disjoint train and test parts covering every sample.
pub fn split(rec: &Recording, spec: &SplitSpec) -> Result<(SplitPart, SplitPart)> {
    let n = rec.len();
    match *spec {
        SplitSpec::PerStepFraction { train_fraction } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::InvalidSplit(format!("train fraction {train_fraction} not in (0, 1)")));
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (_, run) in rec.step_runs() {
                let cut = run.start + (run.len() as f64 * train_fraction).round() as usize;
                train.push(run.start..cut);
                test.push(cut..run.end);
            }
            Ok((SplitPart::from_ranges(rec, train), SplitPart::from_ranges(rec, test)))
        }
        SplitSpec::ContiguousSeconds { seconds, seed, block_seconds } => {
            if !(seconds >= 0.0) {
                return Err(Error::InvalidSplit(format!("train seconds {seconds} must be ≥ 0")));
            }
            if !(block_seconds > 0.0) {
                return Err(Error::InvalidSplit(format!("block length {block_seconds} s must be > 0")));
            }
            let rate = rec.manifest.sample_rate;
            let len = (seconds * rate).round() as usize;
            if len > n {
                return Err(Error::SpecTooLarge { requested_s: seconds, available_s: rec.duration() });
            }
            let block = ((block_seconds * rate).round() as usize).max(1);
            let count = len.div_ceil(block);
            // uniform placement of `count` ordered blocks: sorted offsets into the free samples
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut offsets: Vec<usize> = (0..count).map(|_| rng.random_range(0..=n - len)).collect();
            offsets.sort_unstable();
            let mut train: Vec<Range<usize>> = Vec::with_capacity(count);
            let mut used = 0;
            for (i, off) in offsets.into_iter().enumerate() {
                let l = if i + 1 == count { len - block * (count - 1) } else { block };
                let start = off + used;
                match train.last_mut() {
                    Some(prev) if prev.end == start => prev.end += l,
                    _ => train.push(start..start + l),
                }
                used += l;
            }
            let mut test = Vec::with_capacity(train.len() + 1);
            let mut cursor = 0;
            for r in &train {
                test.push(cursor..r.start);
                cursor = r.end;
            }
            test.push(cursor..n);
            Ok((SplitPart::from_ranges(rec, train), SplitPart::from_ranges(rec, test)))
        }
    }
}
