//! Trigger-based alignment of the IMU and treadmill streams.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{CopSample, Frame, GamTriplet, Manifest, Recording, SensorId, Vec3};

/// Raw IMU acquisition on its own 100 Hz clock.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImuStream {
    pub t: Vec<f64>,
    pub imu: BTreeMap<SensorId, Vec<GamTriplet>>,
    pub sync: Vec<bool>,
}

/// Raw treadmill acquisition (any rate) on its own clock. COP and pelvis in mm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreadmillStream {
    pub t: Vec<f64>,
    pub cop: Vec<[f64; 2]>,
    pub pelvis: Vec<[f64; 2]>,
    pub step: Vec<usize>,
    pub sync: Vec<bool>,
}

/// Relative tolerance on the trigger interval measured by the two clocks.
pub const MAX_CLOCK_SKEW: f64 = 0.01;

/// Times of the rising edge (first high sample) and falling edge (last high sample).
fn trigger_edges(t: &[f64], sync: &[bool], stream: &'static str) -> Result<(usize, usize)> {
    let rise = (1..sync.len())
        .find(|&k| sync[k] && !sync[k - 1])
        .ok_or(Error::NoTrigger { stream, edge: "rising" })?;
    let fall = (rise + 1..sync.len())
        .find(|&k| !sync[k] && sync[k - 1])
        .map(|k| k - 1)
        .ok_or(Error::NoTrigger { stream, edge: "falling" })?;
    debug_assert!(t[fall] >= t[rise]);
    Ok((rise, fall))
}

fn interpolate(t: &[f64], v: &[[f64; 2]], at: f64) -> [f64; 2] {
    let j = t.partition_point(|&x| x <= at);
    if j == 0 {
        return v[0];
    }
    if j >= t.len() {
        return v[t.len() - 1];
    }
    let (t0, t1) = (t[j - 1], t[j]);
    let w = if t1 > t0 { (at - t0) / (t1 - t0) } else { 0.0 };
    [v[j - 1][0] + w * (v[j][0] - v[j - 1][0]), v[j - 1][1] + w * (v[j][1] - v[j - 1][1])]
}

/// Trims both streams to the trigger window and resamples the treadmill
/// channels onto the IMU grid by linear interpolation.
///
/// The output has `floor((fall − rise)·100) + 1` samples with time re-based to
/// zero at the rising edge and COP in the treadmill frame.
pub fn synchronize(imu: &ImuStream, treadmill: &TreadmillStream, manifest: Manifest) -> Result<Recording> {
    for (name, len) in imu.imu.iter().map(|(s, v)| (format!("imu[{s}]"), v.len())) {
        if len != imu.t.len() {
            return Err(Error::ShapeMismatch(format!("{name} length {len} ≠ {}", imu.t.len())));
        }
    }
    if imu.sync.len() != imu.t.len() {
        return Err(Error::ShapeMismatch("imu sync length differs from time".into()));
    }
    let tm_len = treadmill.t.len();
    if [treadmill.cop.len(), treadmill.pelvis.len(), treadmill.step.len(), treadmill.sync.len()]
        .iter()
        .any(|&l| l != tm_len)
    {
        return Err(Error::ShapeMismatch("treadmill channel lengths differ".into()));
    }

    let (ri, fi) = trigger_edges(&imu.t, &imu.sync, "imu")?;
    let (rt, ft) = trigger_edges(&treadmill.t, &treadmill.sync, "treadmill")?;
    let imu_span = imu.t[fi] - imu.t[ri];
    let tm_span = treadmill.t[ft] - treadmill.t[rt];
    if (tm_span - imu_span).abs() > MAX_CLOCK_SKEW * imu_span.max(f64::MIN_POSITIVE) {
        return Err(Error::ClockSkew { imu_s: imu_span, treadmill_s: tm_span });
    }
    let rate = manifest.sample_rate;
    let n = ((imu_span * rate) + 1e-9).floor() as usize + 1;
    if ri + n > imu.t.len() {
        return Err(Error::ShapeMismatch("imu stream shorter than its trigger window".into()));
    }
    let scale = if imu_span > 0.0 { tm_span / imu_span } else { 1.0 };

    let mut rec = Recording {
        manifest,
        t: (0..n).map(|j| j as f64 / rate).collect(),
        imu: imu.imu.iter().map(|(s, v)| (*s, v[ri..ri + n].to_vec())).collect(),
        cop: Vec::with_capacity(n),
        pelvis_xy: Vec::with_capacity(n),
        step_label: Vec::with_capacity(n),
        sync: vec![true; n],
    };
    for j in 0..n {
        let tau = treadmill.t[rt] + (imu.t[ri + j] - imu.t[ri]) * scale;
        let [cx, cy] = interpolate(&treadmill.t, &treadmill.cop, tau);
        let [px, py] = interpolate(&treadmill.t, &treadmill.pelvis, tau);
        rec.cop.push(CopSample::new(cx, cy, Frame::Treadmill));
        rec.pelvis_xy.push(Vec3::new(px, py, 0.0));
        let hold = treadmill.t.partition_point(|&x| x <= tau + 1e-12).saturating_sub(1);
        rec.step_label.push(treadmill.step[hold]);
    }
    rec.manifest.cop_frame = Frame::Treadmill;
    if let Some(c) = rec.constellation() {
        rec.manifest.sensors = c;
    }
    Ok(rec)
}
