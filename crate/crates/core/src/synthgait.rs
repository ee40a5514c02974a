//! Deterministic synthetic gait generator.
//!
//! Gait phase advances at the stride rate during walking steps and stops
//! during quiet standing. Every segment orientation is a smooth function of
//! phase; the pelvis-frame COP traces a butterfly curve of the same phase, so
//! the IMU → COP mapping is known and learnable by construction.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{orientation_series_to_gam, quat_multiply, specific_force, ReferenceFields};
use crate::seed::rng_for;
use crate::types::{
    CopSample, Frame, GamTriplet, Manifest, ProtocolStep, Quaternion, Recording, SensorId, Source, Vec3,
    SAMPLE_RATE_HZ,
};

/// Geometry of the pelvis-frame COP curve, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterflyParams {
    /// Peak anterior excursion.
    pub anterior_mm: f64,
    /// Peak lateral excursion of a symmetric lobe.
    pub lateral_mm: f64,
    /// Third-harmonic flattening of the lateral lobes.
    pub flatten: f64,
    /// Left lobe is `1 + asymmetry` times the right lobe.
    pub asymmetry: f64,
    /// Constant anterior offset.
    pub offset_mm: f64,
}

impl Default for ButterflyParams {
    fn default() -> Self {
        ButterflyParams { anterior_mm: 110.0, lateral_mm: 70.0, flatten: 0.05, asymmetry: 0.0, offset_mm: 0.0 }
    }
}

const SAW_HARMONICS: usize = 4;

/// Lanczos-smoothed falling sawtooth with unit peak.
fn smooth_sawtooth(u: f64) -> f64 {
    let (mut s, mut peak) = (0.0, 0.0);
    for k in 1..=SAW_HARMONICS {
        let kf = k as f64;
        let x = PI * kf / (SAW_HARMONICS as f64 + 1.0);
        let sigma = x.sin() / x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * sigma * (kf * u).sin() / kf;
        peak += sigma / kf;
    }
    -s / peak
}

/// One point of the butterfly: anterior at twice the stride frequency, lateral
/// at the stride frequency (odd harmonics only), left lobe skewed by asymmetry.
pub fn butterfly_cop(phase: f64, p: &ButterflyParams) -> (f64, f64) {
    let x = p.offset_mm + p.anterior_mm * smooth_sawtooth(2.0 * phase);
    let base = phase.sin() + p.flatten * (3.0 * phase).sin();
    let c = (1.0 - p.flatten) * p.asymmetry / (2.0 + p.asymmetry);
    let s = phase.sin();
    let y = p.lateral_mm * (base + c * s * s);
    (x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGaitConfig {
    pub subject_id: String,
    /// Total duration, s; must match the protocol when one is given.
    pub duration: f64,
    /// Steps per second at 0.5 m/s.
    pub cadence: f64,
    /// Walking speed used when `protocol_steps` is empty.
    pub speed: f64,
    pub subject_scale: f64,
    /// Sensor mount rotations as rotation vectors in degrees.
    pub mount_offsets: BTreeMap<SensorId, Vec3>,
    pub asymmetry: f64,
    pub noise_frac: f64,
    pub seed: u64,
    pub protocol_steps: Vec<ProtocolStep>,
    /// Add segment linear acceleration to the accelerometer.
    pub linear_accel: bool,
    /// How strongly back tilt follows the COP (0 = independent).
    pub pelvis_coupling: f64,
    pub butterfly: ButterflyParams,
    pub reference: ReferenceFields,
}

impl SynthGaitConfig {
    /// Default subject with a standing / three-speed / standing protocol for
    /// durations of two minutes or more, otherwise a single walking step.
    pub fn with_duration(duration: f64) -> Self {
        SynthGaitConfig {
            subject_id: "synth".into(),
            duration,
            cadence: 1.8,
            speed: 0.5,
            subject_scale: 1.0,
            mount_offsets: BTreeMap::new(),
            asymmetry: 0.0,
            noise_frac: 0.03,
            seed: 0,
            protocol_steps: default_protocol(duration),
            linear_accel: false,
            pelvis_coupling: 0.0,
            butterfly: ButterflyParams::default(),
            reference: ReferenceFields::default(),
        }
    }

    /// Variant whose COP is carried mostly by back tilt.
    pub fn pelvis_dominant(duration: f64) -> Self {
        SynthGaitConfig { pelvis_coupling: 1.0, ..Self::with_duration(duration) }
    }

    /// Butterfly parameters after subject scaling and asymmetry.
    pub fn butterfly_params(&self) -> ButterflyParams {
        ButterflyParams {
            anterior_mm: self.butterfly.anterior_mm * self.subject_scale,
            lateral_mm: self.butterfly.lateral_mm * self.subject_scale,
            asymmetry: self.asymmetry,
            ..self.butterfly
        }
    }

    fn steps(&self) -> Vec<ProtocolStep> {
        if self.protocol_steps.is_empty() {
            vec![ProtocolStep::new(self.speed, 0.0, self.duration)]
        } else {
            self.protocol_steps.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.cadence > 0.0) || !(self.subject_scale > 0.0) {
            return bad("cadence and subject_scale must be positive".into());
        }
        if !(self.noise_frac >= 0.0) {
            return bad(format!("noise_frac must be ≥ 0, got {}", self.noise_frac));
        }
        if !(0.0..=1.0).contains(&self.asymmetry) {
            return bad(format!("asymmetry must be in [0, 1], got {}", self.asymmetry));
        }
        if !self.pelvis_coupling.is_finite() || self.pelvis_coupling < 0.0 {
            return bad("pelvis_coupling must be ≥ 0".into());
        }
        let steps = self.steps();
        if steps.iter().any(|s| !(s.duration > 0.0) || !(s.speed >= 0.0)) {
            return bad("protocol steps need positive duration and non-negative speed".into());
        }
        let total: f64 = steps.iter().map(|s| s.duration).sum();
        if (total - self.duration).abs() > 0.5 / SAMPLE_RATE_HZ {
            return bad(format!("protocol lasts {total} s but duration is {} s", self.duration));
        }
        if self.mount_offsets.values().any(|v| !v.is_finite()) {
            return bad("mount offsets must be finite".into());
        }
        self.reference.validate()
    }
}

fn default_protocol(duration: f64) -> Vec<ProtocolStep> {
    if duration < 120.0 {
        return vec![ProtocolStep::new(0.5, 0.0, duration)];
    }
    let qs = (0.05 * duration).min(30.0);
    let walk = (duration - 2.0 * qs) / 3.0;
    vec![
        ProtocolStep::new(0.0, 0.0, qs),
        ProtocolStep::new(0.38, 0.0, walk),
        ProtocolStep::new(0.5, 10.0, walk),
        ProtocolStep::new(0.8, 0.0, walk),
        ProtocolStep::new(0.0, 0.0, qs),
    ]
}

/// Ground truth accompanying a generated recording.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    /// Stride phase per sample, rad.
    pub phase: Vec<f64>,
    /// Walking envelope: 1 while walking, 0 while standing, smooth in between.
    pub envelope: Vec<f64>,
    /// Sensor orientations (body → world) per sample.
    pub orientations: BTreeMap<SensorId, Vec<Quaternion>>,
    /// Noise-free GAM.
    pub clean: BTreeMap<SensorId, Vec<GamTriplet>>,
}

/// Centered moving average with clamped edges, applied twice.
fn smooth(v: &[f64], half: usize) -> Vec<f64> {
    let pass = |v: &[f64]| -> Vec<f64> {
        let n = v.len();
        let mut prefix = vec![0.0; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] + v[k];
        }
        (0..n)
            .map(|k| {
                let lo = k.saturating_sub(half);
                let hi = (k + half + 1).min(n);
                // pad by clamping so edge samples keep their level
                let missing_lo = half.saturating_sub(k) as f64;
                let missing_hi = (k + half + 1).saturating_sub(n) as f64;
                (prefix[hi] - prefix[lo] + missing_lo * v[0] + missing_hi * v[n - 1]) / (2 * half + 1) as f64
            })
            .collect()
    };
    pass(&pass(v))
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

fn ypr(yaw: f64, roll: f64, pitch: f64) -> Quaternion {
    let qz = Quaternion::from_axis_angle(Vec3::Z, yaw);
    let qx = Quaternion::from_axis_angle(Vec3::X, roll);
    let qy = Quaternion::from_axis_angle(Vec3::Y, pitch);
    quat_multiply(quat_multiply(qz, qx), qy)
}

/// Slow postural sway used while standing, (roll, pitch) in rad.
#[derive(Debug, Clone, Copy)]
struct Sway {
    phases: [f64; 4],
}

impl Sway {
    fn at(&self, t: f64) -> (f64, f64) {
        let p = self.phases;
        let roll = deg(0.4) * (TAU * 0.31 * t + p[0]).sin() + deg(0.15) * (TAU * 0.73 * t + p[1]).sin();
        let pitch = deg(0.6) * (TAU * 0.23 * t + p[2]).sin() + deg(0.2) * (TAU * 0.61 * t + p[3]).sin();
        (roll, pitch)
    }
}

struct Segment {
    amp: f64,
    side_phase: f64,
}

/// Segment orientation in the world frame for walking phase `phi` and walking
/// envelope `e`, before any mount offset.
fn segment_orientation(
    id: SensorId,
    phi: f64,
    e: f64,
    sway: (f64, f64),
    cop_norm: (f64, f64),
    cfg: &SynthGaitConfig,
) -> Quaternion {
    let s = cfg.subject_scale;
    let seg = match id {
        SensorId::Back => Segment { amp: s, side_phase: 0.0 },
        SensorId::RThigh | SensorId::RShank | SensorId::RFoot => Segment { amp: s, side_phase: 0.0 },
        _ => Segment { amp: s * (1.0 - 0.5 * cfg.asymmetry), side_phase: PI },
    };
    let p = phi + seg.side_phase;
    let a = seg.amp * e;
    let (sway_roll, sway_pitch) = sway;
    match id {
        SensorId::Back => {
            let k = cfg.pelvis_coupling * e;
            let roll = a * deg(3.0) * (phi + 0.2).sin() + k * deg(3.0) * cop_norm.1 + sway_roll;
            let pitch = a * deg(2.0) * (2.0 * phi + 0.4).sin() + k * deg(3.0) * cop_norm.0 + sway_pitch;
            let yaw = a * deg(4.0) * (phi + 1.0).sin();
            ypr(yaw, roll, pitch)
        }
        SensorId::RThigh | SensorId::LThigh => {
            let pitch = a * (deg(20.0) * p.sin() + deg(4.0) * (2.0 * p + 0.5).sin()) + 0.3 * sway_pitch;
            let roll = a * deg(3.0) * (p + 0.3).sin() + 0.3 * sway_roll;
            ypr(0.0, roll, pitch)
        }
        SensorId::RShank | SensorId::LShank => {
            let pitch = a
                * (deg(25.0) * (p - 0.7).sin() + deg(9.0) * (2.0 * p - 0.2).sin() + deg(3.0) * (3.0 * p + 1.0).sin())
                + 0.2 * sway_pitch;
            let roll = a * deg(2.0) * (p - 0.4).sin();
            ypr(0.0, roll, pitch)
        }
        SensorId::RFoot | SensorId::LFoot => {
            let pitch = a
                * (deg(18.0) * (p - 1.2).sin()
                    + deg(8.0) * (2.0 * p - 0.9).sin()
                    + deg(4.0) * (3.0 * p - 0.3).sin()
                    + deg(2.0) * (4.0 * p + 0.8).sin());
            let yaw = a * deg(3.0) * p.sin();
            ypr(yaw, 0.0, pitch)
        }
    }
}

/// Per-sample (speed, step label) of the protocol.
fn protocol_samples(steps: &[ProtocolStep]) -> (Vec<f64>, Vec<usize>) {
    let mut speed = Vec::new();
    let mut label = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        let n = (s.duration * SAMPLE_RATE_HZ).round() as usize;
        speed.extend(std::iter::repeat_n(s.speed, n));
        label.extend(std::iter::repeat_n(i, n));
    }
    (speed, label)
}

/// Generates a recording together with its noise-free ground truth.
pub fn generate_with_truth(cfg: &SynthGaitConfig) -> Result<(Recording, SynthTruth)> {
    cfg.validate()?;
    let steps = cfg.steps();
    let (speed, step_label) = protocol_samples(&steps);
    let n = speed.len();
    if n < 2 {
        return Err(Error::ConfigInvalid(format!("protocol yields {n} samples; need at least 2")));
    }
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();

    // stride rate (rad/s) and walking envelope, smoothed over ~1 s
    let rate: Vec<f64> = speed
        .iter()
        .map(|&v| if v > 0.0 { PI * cfg.cadence * (0.7 + 0.6 * v) } else { 0.0 })
        .collect();
    let walking: Vec<f64> = speed.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let rate = smooth(&rate, 50);
    let envelope = smooth(&walking, 50);
    let mut phase = vec![0.0; n];
    for k in 1..n {
        phase[k] = phase[k - 1] + 0.5 * (rate[k - 1] + rate[k]) * dt;
    }

    let mut rng = rng_for(cfg.seed, "synth-shape", 0);
    let sway = Sway { phases: std::array::from_fn(|_| rng.random_range(0.0..TAU)) };
    let drift: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));

    let bp = cfg.butterfly_params();
    let stand_x = 20.0 * cfg.subject_scale;
    let mut cop = Vec::with_capacity(n);
    let mut pelvis = Vec::with_capacity(n);
    let mut cop_norm = Vec::with_capacity(n);
    let mut sway_at = Vec::with_capacity(n);
    for k in 0..n {
        let e = envelope[k];
        let (bx, by) = butterfly_cop(phase[k], &bp);
        let sw = Sway::at(&sway, t[k]);
        sway_at.push(sw);
        // standing COP follows postural sway, ~6 mm per degree
        let sx = stand_x + 6.0 * sw.1.to_degrees();
        let sy = 6.0 * sw.0.to_degrees();
        let x = e * bx + (1.0 - e) * sx;
        let y = e * by + (1.0 - e) * sy;
        cop_norm.push((bx / bp.anterior_mm.max(1e-9), by / bp.lateral_mm.max(1e-9)));
        let px = 40.0 * (TAU * 0.013 * t[k] + drift[0]).sin() + e * 10.0 * (2.0 * phase[k] + drift[1]).sin();
        let py = 15.0 * (TAU * 0.009 * t[k] + drift[2]).sin() + e * 25.0 * (phase[k] - 0.3).sin();
        pelvis.push(Vec3::new(px, py, 0.0));
        cop.push(CopSample::new(x + px, y + py, Frame::Treadmill));
    }

    // pelvis linear acceleration (m/s²) from second differences of position
    let lin_acc: Vec<Vec3> = if cfg.linear_accel {
        let pos: Vec<Vec3> = (0..n)
            .map(|k| {
                let p = pelvis[k] * 1e-3;
                Vec3::new(p.x, p.y, 0.02 * envelope[k] * (2.0 * phase[k]).cos())
            })
            .collect();
        (0..n)
            .map(|k| {
                let k0 = k.clamp(1, n.saturating_sub(2).max(1));
                if n < 3 {
                    return Vec3::ZERO;
                }
                (pos[k0 - 1] + pos[k0 + 1] - pos[k0] * 2.0) * (1.0 / (dt * dt))
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut orientations = BTreeMap::new();
    let mut clean = BTreeMap::new();
    for id in SensorId::ALL {
        let offset = cfg.mount_offsets.get(&id).copied().unwrap_or(Vec3::ZERO);
        let q_mount = Quaternion::from_rotation_vector(offset * (PI / 180.0));
        let qs: Vec<Quaternion> = (0..n)
            .map(|k| {
                let q = segment_orientation(id, phase[k], envelope[k], sway_at[k], cop_norm[k], cfg);
                quat_multiply(q, q_mount)
            })
            .collect();
        let mut gam = orientation_series_to_gam(&qs, dt, &cfg.reference)?;
        if cfg.linear_accel {
            for (g, (&q, &a)) in gam.iter_mut().zip(qs.iter().zip(&lin_acc)) {
                g.accel = specific_force(q, a, &cfg.reference);
            }
        }
        orientations.insert(id, qs);
        clean.insert(id, gam);
    }

    let imu = add_noise(&clean, cfg.noise_frac, cfg.seed);
    let mut manifest = Manifest::new(cfg.subject_id.clone(), Source::Synthetic, steps);
    manifest.mass = 75.0 * cfg.subject_scale;
    manifest.height = 175.0 * cfg.subject_scale;
    let mut sync = vec![true; n];
    sync[0] = false;
    sync[n - 1] = false;
    let rec = Recording { manifest, t, imu, cop, pelvis_xy: pelvis, step_label, sync };
    Ok((rec, SynthTruth { phase, envelope, orientations, clean }))
}

/// White noise per channel with std `frac` × channel std: half of the variance
/// additive, half proportional to the centred signal.
fn add_noise(
    clean: &BTreeMap<SensorId, Vec<GamTriplet>>,
    frac: f64,
    seed: u64,
) -> BTreeMap<SensorId, Vec<GamTriplet>> {
    if frac == 0.0 {
        return clean.clone();
    }
    clean
        .iter()
        .map(|(&id, series)| {
            let mut rng = rng_for(seed, "synth-noise", id.label() as u64);
            let n = series.len() as f64;
            let mut mean = [0.0; 9];
            for g in series {
                for (m, v) in mean.iter_mut().zip(g.channels()) {
                    *m += v / n;
                }
            }
            let mut std = [0.0; 9];
            for g in series {
                for c in 0..9 {
                    std[c] += (g.channels()[c] - mean[c]).powi(2) / n;
                }
            }
            let std = std.map(f64::sqrt);
            let noisy = series
                .iter()
                .map(|g| {
                    let ch = g.channels();
                    GamTriplet::from_channels(std::array::from_fn(|c| {
                        let e1: f64 = StandardNormal.sample(&mut rng);
                        let e2: f64 = StandardNormal.sample(&mut rng);
                        if std[c] < 1e-12 {
                            return ch[c];
                        }
                        let centred = (ch[c] - mean[c]) / std[c];
                        ch[c] + frac * std[c] * std::f64::consts::FRAC_1_SQRT_2 * (e1 + e2 * centred)
                    }))
                })
                .collect();
            (id, noisy)
        })
        .collect()
}

pub fn generate_recording(cfg: &SynthGaitConfig) -> Result<Recording> {
    generate_with_truth(cfg).map(|(r, _)| r)
}

/// Per-subject configurations of a cohort: scale in [0.9, 1.1], mount offsets up
/// to 10°, and the last third of the subjects patient-like (asymmetry 0.3).
pub fn cohort_configs(n_subjects: usize, base: &SynthGaitConfig, seed: u64) -> Result<Vec<SynthGaitConfig>> {
    if n_subjects < 2 {
        return Err(Error::ConfigInvalid(format!("a cohort needs at least 2 subjects, got {n_subjects}")));
    }
    let patients = n_subjects / 3;
    let healthy = n_subjects - patients;
    Ok((0..n_subjects)
        .map(|i| {
            let mut rng = rng_for(seed, "cohort", i as u64);
            let mount_offsets = SensorId::ALL
                .into_iter()
                .map(|id| {
                    // uniform direction, angle up to 10°
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let az: f64 = rng.random_range(0.0..TAU);
                    let r = (1.0 - z * z).sqrt();
                    let angle: f64 = rng.random_range(0.0..10.0);
                    (id, Vec3::new(r * az.cos(), r * az.sin(), z) * angle)
                })
                .collect();
            let patient = i >= healthy;
            SynthGaitConfig {
                subject_id: if patient { format!("P{}", i - healthy + 1) } else { format!("S{}", i + 1) },
                subject_scale: rng.random_range(0.9..=1.1),
                mount_offsets,
                asymmetry: if patient { 0.3 } else { 0.0 },
                seed: crate::seed::derive_seed(seed, "cohort-subject", i as u64),
                ..base.clone()
            }
        })
        .collect())
}

pub fn generate_cohort(n_subjects: usize, base: &SynthGaitConfig, seed: u64) -> Result<Vec<Recording>> {
    use rayon::prelude::*;
    cohort_configs(n_subjects, base, seed)?.par_iter().map(generate_recording).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::quest_recover;

    #[test]
    fn butterfly_periodic_and_symmetric() {
        let p = ButterflyParams::default();
        let a = butterfly_cop(0.3, &p);
        let b = butterfly_cop(0.3 + TAU, &p);
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        let mut worst: f64 = 0.0;
        for i in 0..2000 {
            let phi = i as f64 * TAU / 2000.0;
            let (x0, y0) = butterfly_cop(phi, &p);
            let (x1, y1) = butterfly_cop(phi + PI, &p);
            worst = worst.max((x0 - x1).abs()).max((y0 + y1).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn asymmetry_sets_lobe_ratio() {
        let p = ButterflyParams { asymmetry: 0.3, ..Default::default() };
        let ys: Vec<f64> = (0..100_000).map(|i| butterfly_cop(i as f64 * TAU / 100_000.0, &p).1).collect();
        let left = ys.iter().cloned().fold(f64::MIN, f64::max);
        let right = -ys.iter().cloned().fold(f64::MAX, f64::min);
        assert!(((left / right) / 1.3 - 1.0).abs() < 0.01, "{}", left / right);
    }

    #[test]
    fn generated_recording_validates_and_recovers_butterfly() {
        let cfg = SynthGaitConfig { noise_frac: 0.0, ..SynthGaitConfig::with_duration(20.0) };
        let (rec, truth) = generate_with_truth(&cfg).unwrap();
        assert_eq!(rec.len(), 2000);
        assert!(crate::validate(&rec).is_empty(), "{:?}", crate::validate(&rec));
        let bp = cfg.butterfly_params();
        let pel = rec.into_pelvis_frame().unwrap();
        for (k, c) in pel.cop.iter().enumerate() {
            let (x, y) = butterfly_cop(truth.phase[k], &bp);
            assert!((c.x_anterior - x).abs() < 1e-9 && (c.y_lateral - y).abs() < 1e-9);
        }
    }

    #[test]
    fn quest_recovers_generating_orientations() {
        let cfg = SynthGaitConfig { noise_frac: 0.0, ..SynthGaitConfig::with_duration(150.0) };
        let (rec, truth) = generate_with_truth(&cfg).unwrap();
        for id in SensorId::ALL {
            for (g, q) in rec.imu[&id].iter().zip(&truth.orientations[&id]).step_by(7) {
                let r = quest_recover(g.accel, g.mag, &cfg.reference).unwrap();
                assert!(r.angle_to(*q) < 1e-6);
                assert!((g.mag.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn noise_matches_requested_fraction() {
        let cfg = SynthGaitConfig { seed: 5, ..SynthGaitConfig::with_duration(200.0) };
        let (rec, truth) = generate_with_truth(&cfg).unwrap();
        for id in SensorId::ALL {
            for c in 0..9 {
                let clean: Vec<f64> = truth.clean[&id].iter().map(|g| g.channels()[c]).collect();
                let noisy: Vec<f64> = rec.imu[&id].iter().map(|g| g.channels()[c]).collect();
                let sd = |v: &[f64]| {
                    let m = v.iter().sum::<f64>() / v.len() as f64;
                    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
                };
                let s = sd(&clean);
                if s < 1e-9 {
                    continue;
                }
                let diff: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
                let ratio = sd(&diff) / s;
                assert!((ratio - 0.03).abs() < 0.005, "{id} channel {c}: {ratio}");
            }
        }
    }

    #[test]
    fn mount_offsets_change_gam_but_not_cop() {
        let a = SynthGaitConfig::with_duration(10.0);
        let mut b = a.clone();
        b.mount_offsets.insert(SensorId::RShank, Vec3::new(0.0, 5.0, 3.0));
        let (ra, rb) = (generate_recording(&a).unwrap(), generate_recording(&b).unwrap());
        assert_eq!(ra.cop, rb.cop);
        assert_ne!(ra.imu[&SensorId::RShank], rb.imu[&SensorId::RShank]);
        assert_eq!(ra.imu[&SensorId::Back], rb.imu[&SensorId::Back]);
    }

    #[test]
    fn cop_autocorrelation_peaks_at_stride_and_step() {
        let cfg = SynthGaitConfig { noise_frac: 0.0, ..SynthGaitConfig::with_duration(60.0) };
        let rec = generate_recording(&cfg).unwrap().into_pelvis_frame().unwrap();
        let stride = 2.0 / cfg.cadence * SAMPLE_RATE_HZ;
        let first_peak = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let v: Vec<f64> = v.iter().map(|x| x - m).collect();
            let ac: Vec<f64> = (0..300)
                .map(|lag| v[..v.len() - lag].iter().zip(&v[lag..]).map(|(a, b)| a * b).sum())
                .collect();
            (2..299).find(|&l| ac[l] > ac[l - 1] && ac[l] >= ac[l + 1] && ac[l] > 0.0).unwrap() as f64
        };
        let lat = first_peak(rec.cop.iter().map(|c| c.y_lateral).collect());
        let ant = first_peak(rec.cop.iter().map(|c| c.x_anterior).collect());
        assert!((lat - stride).abs() <= 1.0, "lateral {lat} vs {stride}");
        assert!((ant - stride / 2.0).abs() <= 1.0, "anterior {ant} vs {}", stride / 2.0);
    }

    #[test]
    fn cohort_is_deterministic_and_distinct() {
        let base = SynthGaitConfig::with_duration(5.0);
        let a = generate_cohort(4, &base, 9).unwrap();
        let b = generate_cohort(4, &base, 9).unwrap();
        assert_eq!(a, b);
        for i in 0..4 {
            assert!(crate::validate(&a[i]).is_empty());
            for j in i + 1..4 {
                assert_ne!(a[i].imu, a[j].imu);
            }
        }
        assert_eq!(a[3].manifest.subject_id, "P1");
        assert!(generate_cohort(1, &base, 9).is_err());
    }

    #[test]
    fn patient_lobes_are_more_asymmetric() {
        let base = SynthGaitConfig { noise_frac: 0.0, ..SynthGaitConfig::with_duration(20.0) };
        let cohort = generate_cohort(3, &base, 1).unwrap();
        let ratio = |r: &Recording| {
            let r = r.clone().into_pelvis_frame().unwrap();
            let max = r.cop.iter().map(|c| c.y_lateral).fold(f64::MIN, f64::max);
            let min = r.cop.iter().map(|c| c.y_lateral).fold(f64::MAX, f64::min);
            max.abs().max(min.abs()) / max.abs().min(min.abs())
        };
        assert!(ratio(&cohort[2]) > ratio(&cohort[0]) + 0.1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = SynthGaitConfig::with_duration(10.0);
        c.noise_frac = -1.0;
        assert!(matches!(generate_recording(&c), Err(Error::ConfigInvalid(_))));
        let c = SynthGaitConfig { duration: 12.0, ..SynthGaitConfig::with_duration(10.0) };
        assert!(generate_recording(&c).is_err());
        let c = SynthGaitConfig { asymmetry: 1.5, ..SynthGaitConfig::with_duration(10.0) };
        assert!(generate_recording(&c).is_err());
    }
}
