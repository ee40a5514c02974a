//! Domain types shared by every stage of the pipeline.
//!
//! Units are fixed at ingest: angular rate in rad/s, specific force in m/s²,
//! magnetometer as a dimensionless unit vector, COP and pelvis position in mm,
//! time in seconds at 100 Hz. Orientations are stored scalar-first and map
//! body-frame vectors into the world frame. COP uses +x anterior (walking
//! direction) and +y towards the subject's left.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Range, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate of every recording handled by the pipeline.
pub const SAMPLE_RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Angle between two non-zero vectors in radians.
    pub fn angle_to(self, o: Vec3) -> f64 {
        // atan2 form stays accurate near 0 and pi
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar first, mapping body-frame vectors to world-frame
/// vectors (`v_world = q ⊗ v_body ⊗ q*`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components and normalizes it.
    ///
    /// Returns `None` when the components are zero or non-finite.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        Quaternion { w, x, y, z }.normalized()
    }

    /// Raw constructor without normalization. Callers own the unit-norm invariant.
    pub const fn from_raw(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(u) = axis.normalized() else {
            return Quaternion::IDENTITY;
        };
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion { w: c, x: u.x * s, y: u.y * s, z: u.z * s }.normalize()
    }

    /// Exponential map of a rotation vector (axis × angle).
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Quaternion::IDENTITY;
        }
        Quaternion::from_axis_angle(v, angle)
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn conjugate(self) -> Self {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn negated(self) -> Self {
        Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        Some(self.scaled_by_inverse(n))
    }

    fn scaled_by_inverse(self, n: f64) -> Self {
        // Already-unit inputs are returned untouched so normalization is idempotent.
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return self;
        }
        let inv = 1.0 / n;
        Quaternion { w: self.w * inv, x: self.x * inv, y: self.y * inv, z: self.z * inv }
    }

    /// Rescales to unit norm. Zero or non-finite input yields the identity.
    pub fn normalize(self) -> Self {
        self.normalized().unwrap_or(Quaternion::IDENTITY)
    }

    /// Raw Hamilton product without renormalization.
    pub fn hamilton(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    /// Rotation angle in `[0, pi]` of this rotation relative to `other`, sign-agnostic.
    pub fn angle_to(self, other: Quaternion) -> f64 {
        let d = self.conjugate().hamilton(other);
        2.0 * d.vector().norm().atan2(d.w.abs())
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

/// The seven wearable IMU placements, numbered as on the measurement setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum SensorId {
    Back = 2,
    RThigh = 3,
    RShank = 4,
    RFoot = 5,
    LThigh = 6,
    LShank = 7,
    LFoot = 8,
}

impl SensorId {
    pub const ALL: [SensorId; 7] = [
        SensorId::Back,
        SensorId::RThigh,
        SensorId::RShank,
        SensorId::RFoot,
        SensorId::LThigh,
        SensorId::LShank,
        SensorId::LFoot,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<SensorId> {
        SensorId::ALL.into_iter().find(|s| s.label() == label)
    }

    /// Position in `ALL`, 0..7.
    pub fn index(self) -> usize {
        (self.label() - 2) as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Back => "back",
            SensorId::RThigh => "r_thigh",
            SensorId::RShank => "r_shank",
            SensorId::RFoot => "r_foot",
            SensorId::LThigh => "l_thigh",
            SensorId::LShank => "l_shank",
            SensorId::LFoot => "l_foot",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SensorId::Back => "Back",
            SensorId::RThigh => "RThigh",
            SensorId::RShank => "RShank",
            SensorId::RFoot => "RFoot",
            SensorId::LThigh => "LThigh",
            SensorId::LShank => "LShank",
            SensorId::LFoot => "LFoot",
        };
        f.write_str(s)
    }
}

impl From<SensorId> for u8 {
    fn from(s: SensorId) -> u8 {
        s.label()
    }
}

impl TryFrom<u8> for SensorId {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        SensorId::from_label(v).ok_or_else(|| format!("no sensor with label {v}"))
    }
}

impl FromStr for SensorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(n) = t.parse::<u8>() {
            return SensorId::from_label(n)
                .ok_or_else(|| Error::parse("sensor id", format!("no sensor with label {n}")));
        }
        SensorId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(t) || id.to_string().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::parse("sensor id", format!("unknown sensor {t:?}")))
    }
}

/// Non-empty set of sensor placements, always iterated in label order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct Constellation(u8);

impl Constellation {
    pub const FULL: Constellation = Constellation(0x7f);

    pub fn new(sensors: impl IntoIterator<Item = SensorId>) -> Result<Self> {
        let mask = sensors.into_iter().fold(0u8, |m, s| m | (1 << s.index()));
        Constellation::from_mask(mask)
            .ok_or_else(|| Error::ConfigInvalid("constellation must contain at least one sensor".into()))
    }

    /// Bit `i` selects `SensorId::ALL[i]`. Valid masks are 1..=127.
    pub fn from_mask(mask: u8) -> Option<Self> {
        (mask != 0 && mask <= 0x7f).then_some(Constellation(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn single(s: SensorId) -> Self {
        Constellation(1 << s.index())
    }

    /// All 127 non-empty constellations ordered by mask.
    pub fn all() -> impl Iterator<Item = Constellation> {
        (1u8..=0x7f).map(Constellation)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, s: SensorId) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn is_subset_of(self, other: Constellation) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn sensors(self) -> impl Iterator<Item = SensorId> {
        SensorId::ALL.into_iter().filter(move |s| self.contains(*s))
    }

    pub fn labels(self) -> Vec<u8> {
        self.sensors().map(SensorId::label).collect()
    }
}

impl Ord for Constellation {
    /// Lexicographic order of the sorted label lists, so `{2} < {2,3} < {3}`.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.labels().cmp(&other.labels())
    }
}

impl PartialOrd for Constellation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels().iter().map(u8::to_string).collect();
        f.write_str(&labels.join(","))
    }
}

impl fmt::Debug for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Constellation({self})")
    }
}

impl FromStr for Constellation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Constellation::FULL);
        }
        let ids = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(SensorId::from_str)
            .collect::<Result<Vec<_>>>()?;
        Constellation::new(ids)
    }
}

impl From<Constellation> for Vec<u8> {
    fn from(c: Constellation) -> Vec<u8> {
        c.labels()
    }
}

impl TryFrom<Vec<u8>> for Constellation {
    type Error = String;
    fn try_from(v: Vec<u8>) -> std::result::Result<Self, String> {
        let ids = v
            .into_iter()
            .map(SensorId::try_from)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Constellation::new(ids).map_err(|e| e.to_string())
    }
}

/// One IMU sample: gyroscope, accelerometer and magnetometer in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GamTriplet {
    pub gyro: Vec3,
    pub accel: Vec3,
    pub mag: Vec3,
}

impl GamTriplet {
    /// Channel values ordered gyro xyz, accel xyz, mag xyz.
    pub fn channels(&self) -> [f64; 9] {
        [
            self.gyro.x, self.gyro.y, self.gyro.z,
            self.accel.x, self.accel.y, self.accel.z,
            self.mag.x, self.mag.y, self.mag.z,
        ]
    }

    pub fn from_channels(c: [f64; 9]) -> Self {
        GamTriplet {
            gyro: Vec3::new(c[0], c[1], c[2]),
            accel: Vec3::new(c[3], c[4], c[5]),
            mag: Vec3::new(c[6], c[7], c[8]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gyro.is_finite() && self.accel.is_finite() && self.mag.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Treadmill,
    Pelvis,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Treadmill => "treadmill",
            Frame::Pelvis => "pelvis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopSample {
    /// mm, positive in the walking direction.
    pub x_anterior: f64,
    /// mm, positive towards the subject's left.
    pub y_lateral: f64,
    pub frame: Frame,
}

impl CopSample {
    pub fn new(x_anterior: f64, y_lateral: f64, frame: Frame) -> Self {
        CopSample { x_anterior, y_lateral, frame }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Measured,
    Synthetic,
    ConvertedPublic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    /// Belt speed in m/s; 0 marks quiet standing.
    pub speed: f64,
    /// Perturbation force in % of body weight.
    pub perturbation: f64,
    /// Seconds.
    pub duration: f64,
}

impl ProtocolStep {
    pub fn new(speed: f64, perturbation: f64, duration: f64) -> Self {
        ProtocolStep { speed, perturbation, duration }
    }

    pub fn is_standing(&self) -> bool {
        self.speed == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subject_id: String,
    /// kg
    pub mass: f64,
    /// cm
    pub height: f64,
    /// Hz
    pub sample_rate: f64,
    pub protocol_steps: Vec<ProtocolStep>,
    pub source: Source,
    /// Sensors with columns in the recording.
    pub sensors: Constellation,
    /// Unit tag per column or column group (`gyro`, `accel`, `mag`, `cop`, `pelvis`, `t`).
    /// Missing entries mean canonical units.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub units: BTreeMap<String, String>,
    #[serde(default = "default_frame")]
    pub cop_frame: Frame,
}

fn default_frame() -> Frame {
    Frame::Treadmill
}

impl Manifest {
    pub fn new(subject_id: impl Into<String>, source: Source, protocol_steps: Vec<ProtocolStep>) -> Self {
        Manifest {
            subject_id: subject_id.into(),
            mass: 75.0,
            height: 175.0,
            sample_rate: SAMPLE_RATE_HZ,
            protocol_steps,
            source,
            sensors: Constellation::FULL,
            units: BTreeMap::new(),
            cop_frame: Frame::Treadmill,
        }
    }
}

/// A synchronized 100 Hz multi-IMU recording with treadmill ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub manifest: Manifest,
    /// Seconds, uniform spacing of `1 / sample_rate`.
    pub t: Vec<f64>,
    pub imu: BTreeMap<SensorId, Vec<GamTriplet>>,
    pub cop: Vec<CopSample>,
    /// Pelvis centre in the treadmill frame, mm; `z` unused.
    pub pelvis_xy: Vec<Vec3>,
    /// Index into `manifest.protocol_steps` per sample.
    pub step_label: Vec<usize>,
    pub sync: Vec<bool>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.manifest.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt()
    }

    pub fn cop_frame(&self) -> Frame {
        self.cop.first().map_or(self.manifest.cop_frame, |c| c.frame)
    }

    /// Sensors that actually carry series.
    pub fn constellation(&self) -> Option<Constellation> {
        Constellation::new(self.imu.keys().copied()).ok()
    }

    /// Samples `range`, keeping original timestamps.
    pub fn slice(&self, range: Range<usize>) -> Recording {
        Recording {
            manifest: self.manifest.clone(),
            t: self.t[range.clone()].to_vec(),
            imu: self.imu.iter().map(|(k, v)| (*k, v[range.clone()].to_vec())).collect(),
            cop: self.cop[range.clone()].to_vec(),
            pelvis_xy: self.pelvis_xy[range.clone()].to_vec(),
            step_label: self.step_label[range.clone()].to_vec(),
            sync: self.sync[range].to_vec(),
        }
    }

    /// Maximal runs of equal step label, in sample order.
    pub fn step_runs(&self) -> Vec<(usize, Range<usize>)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for k in 1..=self.step_label.len() {
            if k == self.step_label.len() || self.step_label[k] != self.step_label[start] {
                runs.push((self.step_label[start], start..k));
                start = k;
            }
        }
        runs
    }

    pub fn is_standing_sample(&self, k: usize) -> bool {
        self.manifest
            .protocol_steps
            .get(self.step_label[k])
            .is_some_and(ProtocolStep::is_standing)
    }
}

/// Checks every structural invariant of a recording and describes each violation.
///
/// Findings name the field, the first offending sample index and the rule. An
/// empty list means the recording is well formed.
pub fn validate(rec: &Recording) -> Vec<String> {
    let mut out = Vec::new();
    let n = rec.t.len();
    let m = &rec.manifest;

    if n == 0 {
        out.push("t is empty; recordings need at least one sample".to_string());
    }
    if m.sample_rate != SAMPLE_RATE_HZ {
        out.push(format!("manifest.sample_rate {} ≠ {}", m.sample_rate, SAMPLE_RATE_HZ));
    }
    for (i, s) in m.protocol_steps.iter().enumerate() {
        if !(s.duration > 0.0) {
            out.push(format!("manifest.protocol_steps[{i}] duration {} must be > 0", s.duration));
        }
        if !(s.speed >= 0.0) {
            out.push(format!("manifest.protocol_steps[{i}] speed {} must be ≥ 0", s.speed));
        }
    }

    let mut check_len = |name: String, len: usize| {
        if len != n {
            out.push(format!("{name} length {len} ≠ {n}"));
        }
    };
    check_len("cop".into(), rec.cop.len());
    check_len("pelvis_xy".into(), rec.pelvis_xy.len());
    check_len("step_label".into(), rec.step_label.len());
    check_len("sync".into(), rec.sync.len());
    for (id, series) in &rec.imu {
        check_len(format!("imu[{id}]"), series.len());
    }
    for id in m.sensors.sensors() {
        if !rec.imu.contains_key(&id) {
            out.push(format!("imu[{id}] declared in manifest but missing"));
        }
    }

    let dt = 1.0 / m.sample_rate;
    for (k, &t) in rec.t.iter().enumerate() {
        if !t.is_finite() {
            out.push(format!("t[{k}] is not finite"));
            break;
        }
        if k > 0 {
            let step = t - rec.t[k - 1];
            if (step - dt).abs() > 1e-6 {
                out.push(format!("t[{k}] spacing {step:.6} s ≠ {dt:.6} s"));
            }
        }
    }

    for (id, series) in &rec.imu {
        if let Some(k) = series.iter().position(|g| !g.is_finite()) {
            out.push(format!("imu[{id}][{k}] has a non-finite component"));
        }
    }
    if let Some(k) = rec.cop.iter().position(|c| !(c.x_anterior.is_finite() && c.y_lateral.is_finite())) {
        out.push(format!("cop[{k}] is not finite"));
    }
    if let Some(first) = rec.cop.first() {
        if let Some(k) = rec.cop.iter().position(|c| c.frame != first.frame) {
            out.push(format!("cop[{k}] frame differs from cop[0]"));
        }
        if first.frame != m.cop_frame {
            out.push(format!(
                "cop frame {} ≠ manifest.cop_frame {}",
                first.frame.name(),
                m.cop_frame.name()
            ));
        }
    }
    if let Some(k) = rec.pelvis_xy.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
        out.push(format!("pelvis_xy[{k}] is not finite"));
    }
    if let Some(k) = rec.step_label.iter().position(|&s| s >= m.protocol_steps.len()) {
        out.push(format!(
            "step_label[{k}] = {} out of range for {} protocol steps",
            rec.step_label[k],
            m.protocol_steps.len()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_recording(n: usize) -> Recording {
        let steps = vec![ProtocolStep::new(0.5, 0.0, n as f64 / 100.0)];
        let mut manifest = Manifest::new("T1", Source::Synthetic, steps);
        manifest.sensors = Constellation::single(SensorId::Back);
        let g = GamTriplet {
            gyro: Vec3::ZERO,
            accel: Vec3::new(0.0, 0.0, 9.81),
            mag: Vec3::X,
        };
        Recording {
            manifest,
            t: (0..n).map(|k| k as f64 / 100.0).collect(),
            imu: BTreeMap::from([(SensorId::Back, vec![g; n])]),
            cop: vec![CopSample::new(0.0, 0.0, Frame::Treadmill); n],
            pelvis_xy: vec![Vec3::ZERO; n],
            step_label: vec![0; n],
            sync: vec![true; n],
        }
    }

    #[test]
    fn well_formed_recording_has_no_findings() {
        assert!(validate(&tiny_recording(1000)).is_empty());
    }

    #[test]
    fn short_imu_series_is_reported() {
        let mut r = tiny_recording(1000);
        r.imu.get_mut(&SensorId::Back).unwrap().pop();
        assert_eq!(validate(&r), vec!["imu[Back] length 999 ≠ 1000".to_string()]);
    }

    #[test]
    fn single_gap_in_time_is_reported_at_its_index() {
        let mut r = tiny_recording(1000);
        for t in r.t.iter_mut().skip(400) {
            *t += 0.01;
        }
        let found = validate(&r);
        assert_eq!(found.len(), 1, "{found:?}");
        assert!(found[0].starts_with("t[400] spacing"), "{found:?}");
    }

    #[test]
    fn missing_declared_sensor_and_bad_label() {
        let mut r = tiny_recording(10);
        r.manifest.sensors = Constellation::FULL;
        r.step_label[3] = 5;
        let found = validate(&r);
        assert_eq!(found.len(), 7, "{found:?}");
        assert!(found.iter().any(|f| f.starts_with("step_label[3]")));
    }

    #[test]
    fn normalize_is_idempotent_bitwise() {
        let q = Quaternion::from_raw(0.3, -1.2, 0.7, 2.5).normalize();
        assert_eq!(q.normalize().to_array(), q.to_array());
        assert!((q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constellation_parse_and_order() {
        let c: Constellation = "6, 2,3".parse().unwrap();
        assert_eq!(c.to_string(), "2,3,6");
        assert_eq!(Constellation::all().count(), 127);
        let a: Constellation = "2".parse().unwrap();
        let b: Constellation = "2,3".parse().unwrap();
        let d: Constellation = "3".parse().unwrap();
        assert!(a < b && b < d);
        assert!("".parse::<Constellation>().is_err());
        assert!("9".parse::<Constellation>().is_err());
        assert_eq!("back,LFoot".parse::<Constellation>().unwrap().to_string(), "2,8");
    }

    #[test]
    fn step_runs_split_on_label_change() {
        let mut r = tiny_recording(10);
        r.manifest.protocol_steps.push(ProtocolStep::new(0.0, 0.0, 1.0));
        for s in r.step_label.iter_mut().skip(6) {
            *s = 1;
        }
        assert_eq!(r.step_runs(), vec![(0, 0..6), (1, 6..10)]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_idempotent(w in -5.0..5.0f64, x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
                prop_assume!(w.abs() + x.abs() + y.abs() + z.abs() > 1e-3);
                let q = Quaternion::from_raw(w, x, y, z).normalize();
                prop_assert_eq!(q.normalize().to_array(), q.to_array());
                prop_assert!((q.norm() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn constellation_text_round_trip(mask in 1u8..=127) {
                let c = Constellation::from_mask(mask).unwrap();
                let back: Constellation = c.to_string().parse().unwrap();
                prop_assert_eq!(back, c);
                let order: Vec<u8> = back.sensors().map(SensorId::label).collect();
                prop_assert_eq!(order, c.labels());
                let json = serde_json::to_string(&c).unwrap();
                prop_assert_eq!(serde_json::from_str::<Constellation>(&json).unwrap(), c);
            }
        }
    }
}
