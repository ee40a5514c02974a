//! Model inputs and targets assembled from recordings.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Constellation, Frame, Recording};

/// Which of the gyroscope, accelerometer and magnetometer triplets feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelKinds {
    pub gyro: bool,
    pub accel: bool,
    pub mag: bool,
}

impl ChannelKinds {
    pub const GAM: ChannelKinds = ChannelKinds { gyro: true, accel: true, mag: true };
    pub const GA: ChannelKinds = ChannelKinds { gyro: true, accel: true, mag: false };

    pub fn count(self) -> usize {
        3 * (self.gyro as usize + self.accel as usize + self.mag as usize)
    }

    /// Indices into [`crate::GamTriplet::channels`] of the selected channels.
    pub fn channel_indices(self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(9);
        for (on, base) in [(self.gyro, 0), (self.accel, 3), (self.mag, 6)] {
            if on {
                idx.extend(base..base + 3);
            }
        }
        idx
    }
}

impl fmt::Display for ChannelKinds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (on, c) in [(self.gyro, 'g'), (self.accel, 'a'), (self.mag, 'm')] {
            if on {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for ChannelKinds {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut k = ChannelKinds { gyro: false, accel: false, mag: false };
        for c in s.trim().chars() {
            match c.to_ascii_lowercase() {
                'g' => k.gyro = true,
                'a' => k.accel = true,
                'm' => k.mag = true,
                _ => return Err(Error::parse("channels", format!("unknown channel kind {c:?} in {s:?}"))),
            }
        }
        if k.count() == 0 {
            return Err(Error::parse("channels", "at least one of g, a, m is required"));
        }
        Ok(k)
    }
}

/// Channel kinds plus the number of past samples appended per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSelection {
    pub kinds: ChannelKinds,
    /// Past lags per channel; the span is `history × 10 ms`.
    pub history: usize,
}

impl ChannelSelection {
    pub fn new(kinds: ChannelKinds, history: usize) -> Self {
        ChannelSelection { kinds, history }
    }

    pub fn gam() -> Self {
        ChannelSelection::new(ChannelKinds::GAM, 0)
    }
}

/// Column layout of a feature matrix: sensor-major, channel-minor, lag innermost
/// with lag 0 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub constellation: Constellation,
    pub selection: ChannelSelection,
}

impl FeatureLayout {
    pub fn new(constellation: Constellation, selection: ChannelSelection) -> Self {
        FeatureLayout { constellation, selection }
    }

    pub fn dim(&self) -> usize {
        self.constellation.len() * self.selection.kinds.count() * (self.selection.history + 1)
    }

    pub fn column_names(&self) -> Vec<String> {
        const NAMES: [&str; 9] = ["g_x", "g_y", "g_z", "a_x", "a_y", "a_z", "m_x", "m_y", "m_z"];
        let mut out = Vec::with_capacity(self.dim());
        for s in self.constellation.sensors() {
            for c in self.selection.kinds.channel_indices() {
                for lag in 0..=self.selection.history {
                    out.push(format!("imu{}_{}_lag{lag}", s.label(), NAMES[c]));
                }
            }
        }
        out
    }
}

/// Per-column z-score statistics estimated on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Column standard deviation, or 1 for columns whose deviation is below 1e-12.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn fit(x: &FeatureMatrix) -> Result<Self> {
        if x.rows == 0 {
            return Err(Error::Empty("cannot standardize an empty training matrix".into()));
        }
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        for row in x.data.chunks_exact(x.cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for row in x.data.chunks_exact(x.cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Applies the statistics to a raw matrix.
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.stats.is_some() {
            return Err(Error::ShapeMismatch("matrix is already standardized".into()));
        }
        if x.cols != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.cols });
        }
        let mut out = x.clone();
        self.apply_in_place(&mut out.data);
        out.stats = Some(self.clone());
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, data: &mut [f64]) {
        if self.dim() == 0 {
            return;
        }
        for row in data.chunks_exact_mut(self.dim()) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Row-major model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub layout: FeatureLayout,
    /// Timestamp of each row's lag-0 sample.
    pub times: Vec<f64>,
    /// Row ranges that are contiguous in time; windows never cross them.
    pub segments: Vec<Range<usize>>,
    /// Set when `data` has been standardized with these statistics.
    pub stats: Option<Standardizer>,
}

impl FeatureMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Builds a matrix from raw rows, as one contiguous segment.
    pub fn from_rows(layout: FeatureLayout, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 && !data.is_empty() || cols > 0 && data.len() % cols != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not fill rows of {cols}", data.len())));
        }
        let rows = if cols == 0 { 0 } else { data.len() / cols };
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            layout,
            times: (0..rows).map(|r| r as f64 * 0.01).collect(),
            segments: if rows > 0 { vec![0..rows] } else { Vec::new() },
            stats: None,
        })
    }

    /// Stacks matrices with the same layout, keeping their segments separate.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or_else(|| Error::Empty("nothing to concatenate".into()))?;
        let mut out = FeatureMatrix {
            rows: 0,
            cols: first.cols,
            data: Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum()),
            layout: first.layout,
            times: Vec::new(),
            segments: Vec::new(),
            stats: first.stats.clone(),
        };
        for p in parts {
            if p.cols != out.cols || p.layout != out.layout || p.stats != out.stats {
                return Err(Error::ShapeMismatch("cannot concatenate matrices with different layouts".into()));
            }
            out.segments.extend(p.segments.iter().map(|s| s.start + out.rows..s.end + out.rows));
            out.data.extend_from_slice(&p.data);
            out.times.extend_from_slice(&p.times);
            out.rows += p.rows;
        }
        Ok(out)
    }
}

/// COP targets in the pelvis frame, mm: column 0 anterior, column 1 lateral.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetMatrix {
    pub data: Vec<[f64; 2]>,
}

impl TargetMatrix {
    pub fn new(data: Vec<[f64; 2]>) -> Self {
        TargetMatrix { data }
    }

    pub fn rows(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn concat(parts: &[TargetMatrix]) -> TargetMatrix {
        TargetMatrix { data: parts.iter().flat_map(|p| p.data.iter().copied()).collect() }
    }
}

/// Feature and target matrices for one contiguous recording.
///
/// Row `r` corresponds to sample `k = r + history` and holds lags `0..=history`
/// of every selected channel; the first `history` samples only serve as context.
pub fn build_features(
    rec: &Recording,
    constellation: Constellation,
    sel: ChannelSelection,
) -> Result<(FeatureMatrix, TargetMatrix)> {
    if rec.cop_frame() != Frame::Pelvis {
        return Err(Error::WrongFrame { expected: "pelvis", found: rec.cop_frame().name() });
    }
    let series: Vec<_> = constellation
        .sensors()
        .map(|s| rec.imu.get(&s).ok_or(Error::MissingSensor(s)))
        .collect::<Result<_>>()?;
    let layout = FeatureLayout::new(constellation, sel);
    let cols = layout.dim();
    let h = sel.history;
    let n = rec.len();
    let rows = n.saturating_sub(h);
    let chans = sel.kinds.channel_indices();

    let mut data = Vec::with_capacity(rows * cols);
    for k in h..n {
        for s in &series {
            for &c in &chans {
                for lag in 0..=h {
                    data.push(s[k - lag].channels()[c]);
                }
            }
        }
    }
    let targets = rec.cop[h..].iter().map(|c| [c.x_anterior, c.y_lateral]).collect();
    let x = FeatureMatrix {
        rows,
        cols,
        data,
        layout,
        times: rec.t[h..].to_vec(),
        segments: if rows > 0 { vec![0..rows] } else { Vec::new() },
        stats: None,
    };
    Ok((x, TargetMatrix::new(targets)))
}

/// Builds features per contiguous block and stacks them.
pub fn build_features_blocks(
    blocks: &[Recording],
    constellation: Constellation,
    sel: ChannelSelection,
) -> Result<(FeatureMatrix, TargetMatrix)> {
    if blocks.is_empty() {
        return Err(Error::Empty("no recording blocks".into()));
    }
    let (xs, ys): (Vec<_>, Vec<_>) = blocks
        .iter()
        .map(|b| build_features(b, constellation, sel))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((FeatureMatrix::concat(&xs)?, TargetMatrix::concat(&ys)))
}

/// Standardizes `train` and every matrix in `others` with statistics from `train`.
pub fn standardize(
    train: &FeatureMatrix,
    others: &[&FeatureMatrix],
) -> Result<(FeatureMatrix, Vec<FeatureMatrix>, Standardizer)> {
    let stats = Standardizer::fit(train)?;
    let t = stats.apply(train)?;
    let o = others.iter().map(|m| stats.apply(m)).collect::<Result<Vec<_>>>()?;
    Ok((t, o, stats))
}
