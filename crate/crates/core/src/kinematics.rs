//! Quaternion algebra and the orientation ↔ GAM conversions.
//!
//! Marker triplets become segment orientations, segment orientations become
//! gyroscope/accelerometer/magnetometer readings, and accelerometer plus
//! magnetometer readings can be turned back into orientations with QUEST.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::types::{CopSample, Frame, GamTriplet, Quaternion, Recording, Vec3};

/// Standard gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

/// Minimum angle between the two observation directions.
const MIN_OBSERVATION_ANGLE: f64 = std::f64::consts::PI / 180.0;

/// Earth-fixed reference directions used to synthesize and invert A and M.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReferenceFields {
    /// m/s², world frame.
    pub gravity_world: Vec3,
    /// Unit vector, world frame.
    pub mag_world: Vec3,
}

impl Default for ReferenceFields {
    fn default() -> Self {
        let dip = 60f64.to_radians();
        ReferenceFields {
            gravity_world: Vec3::new(0.0, 0.0, -GRAVITY),
            mag_world: Vec3::new(dip.cos(), 0.0, -dip.sin()),
        }
    }
}

impl ReferenceFields {
    pub fn validate(&self) -> Result<()> {
        if !(self.gravity_world.norm() > 0.0) || !self.gravity_world.is_finite() {
            return Err(Error::InvalidReference("gravity must be non-zero".into()));
        }
        if (self.mag_world.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidReference("magnetic field direction must be unit length".into()));
        }
        let angle = self.gravity_world.angle_to(self.mag_world);
        if angle < MIN_OBSERVATION_ANGLE || angle > std::f64::consts::PI - MIN_OBSERVATION_ANGLE {
            return Err(Error::InvalidReference("gravity and magnetic field are parallel".into()));
        }
        Ok(())
    }
}

/// Three skin markers on one segment, lab frame, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerTriplet {
    pub p1: Vec3,
    pub p2: Vec3,
    pub p3: Vec3,
}

/// Hamilton product `a ⊗ b`, renormalized.
pub fn quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion {
    a.hamilton(b).normalize()
}

/// Maps body-frame `v` into the world frame.
pub fn quat_rotate(q: Quaternion, v: Vec3) -> Vec3 {
    // v + 2w(u×v) + 2u×(u×v), which avoids building the full sandwich product
    let u = q.vector();
    let t = u.cross(v) * 2.0;
    v + t * q.w + u.cross(t)
}

/// Maps world-frame `v` into the body frame.
pub fn quat_rotate_inverse(q: Quaternion, v: Vec3) -> Vec3 {
    quat_rotate(q.conjugate(), v)
}

/// Rotation matrix whose columns are the body axes expressed in the world frame.
pub fn quat_to_matrix(q: Quaternion) -> [[f64; 3]; 3] {
    let Quaternion { w, x, y, z } = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Quaternion of a proper rotation matrix (Shepperd's method).
pub fn matrix_to_quat(m: [[f64; 3]; 3]) -> Quaternion {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > m[0][0].max(m[1][1]).max(m[2][2]) {
        let s = 2.0 * (1.0 + tr).sqrt();
        Quaternion::from_raw(
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        )
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
        Quaternion::from_raw(
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        )
    } else if m[1][1] >= m[2][2] {
        let s = 2.0 * (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt();
        Quaternion::from_raw(
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        )
    } else {
        let s = 2.0 * (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt();
        Quaternion::from_raw(
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        )
    };
    let q = q.normalize();
    if q.w < 0.0 {
        q.negated()
    } else {
        q
    }
}

/// Orientation of the anatomical frame spanned by a marker triplet.
///
/// `e1` points from `p1` to `p2`, `e3` is normal to the marker plane and
/// `e2 = e3 × e1`; the result maps that frame onto the lab axes.
pub fn markers_to_orientation(m: &MarkerTriplet) -> Result<Quaternion> {
    let a = m.p2 - m.p1;
    let b = m.p3 - m.p1;
    let normal = a.cross(b);
    let area = 0.5 * normal.norm();
    if !(area > 1.0) {
        return Err(Error::CollinearMarkers { area });
    }
    let e1 = a.normalized().ok_or(Error::CollinearMarkers { area })?;
    let e3 = e1.cross(b).normalized().ok_or(Error::CollinearMarkers { area })?;
    let e2 = e3.cross(e1);
    Ok(matrix_to_quat([
        [e1.x, e2.x, e3.x],
        [e1.y, e2.y, e3.y],
        [e1.z, e2.z, e3.z],
    ]))
}

/// Applies a body-side alignment rotation: `q_seg ⊗ q_fix`.
pub fn apply_fixed_rotation(q_seg: Quaternion, q_fix: Quaternion) -> Quaternion {
    quat_multiply(q_seg, q_fix)
}

/// Flips signs so consecutive quaternions lie in the same hemisphere.
pub fn align_hemispheres(qs: &[Quaternion]) -> Vec<Quaternion> {
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let q = match out.last() {
            Some(&prev) if q.dot(prev) < 0.0 => q.negated(),
            _ => q,
        };
        out.push(q);
    }
    out
}

/// Body-frame angular velocity of an orientation series sampled every `dt` seconds.
///
/// Uses `ω = 2·vec(q* ⊗ q̇)` with central differences for `q̇`, one-sided at
/// both ends. Output has the same length as the input.
pub fn quat_series_to_gyro(qs: &[Quaternion], dt: f64) -> Result<Vec<Vec3>> {
    let n = qs.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { len: n });
    }
    if !(dt > 0.0) {
        return Err(Error::ConfigInvalid(format!("dt must be positive, got {dt}")));
    }
    let q = align_hemispheres(qs);
    let diff = |a: Quaternion, b: Quaternion, h: f64| {
        Quaternion::from_raw((b.w - a.w) / h, (b.x - a.x) / h, (b.y - a.y) / h, (b.z - a.z) / h)
    };
    Ok((0..n)
        .map(|k| {
            let qdot = if k == 0 {
                diff(q[0], q[1], dt)
            } else if k == n - 1 {
                diff(q[n - 2], q[n - 1], dt)
            } else {
                diff(q[k - 1], q[k + 1], 2.0 * dt)
            };
            q[k].conjugate().hamilton(qdot).vector() * 2.0
        })
        .collect())
}

/// Static accelerometer and magnetometer readings for orientation `q`.
///
/// At rest the accelerometer measures the reaction to gravity, i.e. `-g`
/// expressed in the body frame.
pub fn quat_to_am(q: Quaternion, reference: &ReferenceFields) -> (Vec3, Vec3) {
    let accel = quat_rotate_inverse(q, -reference.gravity_world);
    let mag = quat_rotate_inverse(q, reference.mag_world);
    let mag = mag.normalized().unwrap_or(mag);
    (accel, mag)
}

/// Accelerometer reading including the segment's linear acceleration (world frame, m/s²).
pub fn specific_force(q: Quaternion, linear_accel_world: Vec3, reference: &ReferenceFields) -> Vec3 {
    quat_rotate_inverse(q, linear_accel_world - reference.gravity_world)
}

/// Body → world orientation from one accelerometer/magnetometer pair (QUEST).
///
/// Solves Wahba's problem for the two observation pairs with equal weights.
/// The optimal eigenvalue comes from Newton iteration on the characteristic
/// polynomial of Davenport's K matrix; the quaternion from the Gibbs-vector
/// solve. Near-singular Gibbs systems (rotations close to 180°) and stalled
/// iterations fall back to a symmetric eigendecomposition of K.
pub fn quest_recover(accel: Vec3, mag: Vec3, reference: &ReferenceFields) -> Result<Quaternion> {
    let b1 = accel.normalized().ok_or(Error::DegenerateObservations { angle_deg: 0.0 })?;
    let b2 = mag.normalized().ok_or(Error::DegenerateObservations { angle_deg: 0.0 })?;
    let body_angle = b1.angle_to(b2);
    if body_angle < MIN_OBSERVATION_ANGLE || body_angle > std::f64::consts::PI - MIN_OBSERVATION_ANGLE {
        let a = body_angle.min(std::f64::consts::PI - body_angle);
        return Err(Error::DegenerateObservations { angle_deg: a.to_degrees() });
    }
    let r1 = (-reference.gravity_world)
        .normalized()
        .ok_or_else(|| Error::InvalidReference("gravity must be non-zero".into()))?;
    let r2 = reference
        .mag_world
        .normalized()
        .ok_or_else(|| Error::InvalidReference("magnetic field must be non-zero".into()))?;

    // Maximize Σ w r·(R b): attitude profile B = Σ w r bᵀ.
    let w = 0.5;
    let to_na = |v: Vec3| Vector3::new(v.x, v.y, v.z);
    let b_mat: Matrix3<f64> =
        to_na(r1) * to_na(b1).transpose() * w + to_na(r2) * to_na(b2).transpose() * w;
    let sigma = b_mat.trace();
    let s = b_mat + b_mat.transpose();
    let z = Vector3::new(
        b_mat[(2, 1)] - b_mat[(1, 2)],
        b_mat[(0, 2)] - b_mat[(2, 0)],
        b_mat[(1, 0)] - b_mat[(0, 1)],
    );
    let mut k = Matrix4::<f64>::zeros();
    k[(0, 0)] = sigma;
    for i in 0..3 {
        k[(0, i + 1)] = z[i];
        k[(i + 1, 0)] = z[i];
        for j in 0..3 {
            k[(i + 1, j + 1)] = s[(i, j)] - if i == j { sigma } else { 0.0 };
        }
    }

    // Closed-form two-observation eigenvalue, refined by Newton on det(λI − K).
    let cos_term = b1.dot(b2) * r1.dot(r2) + b1.cross(b2).norm() * r1.cross(r2).norm();
    let mut lambda = (2.0 * w * w * (1.0 + cos_term)).max(0.0).sqrt();
    let coeffs = char_poly_4(&k);
    let mut converged = false;
    for _ in 0..20 {
        let (p, dp) = eval_poly_with_derivative(&coeffs, lambda);
        if dp.abs() < 1e-300 {
            break;
        }
        let step = p / dp;
        lambda -= step;
        if step.abs() < 1e-15 {
            converged = true;
            break;
        }
    }

    if converged && lambda.is_finite() {
        let m = Matrix3::identity() * (lambda + sigma) - s;
        let det = m.determinant();
        // det ~ w_q² scaled; tiny values mean a rotation near 180°.
        if det.abs() > 1e-6 {
            if let Some(inv) = m.try_inverse() {
                let p = inv * z;
                let q = Quaternion::from_raw(1.0, p[0], p[1], p[2]).normalize();
                return Ok(canonical_sign(q));
            }
        }
    }
    log::debug!("QUEST Gibbs solve ill-conditioned, using eigen fallback");
    let eig = SymmetricEigen::new(k);
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let v = eig.eigenvectors.column(imax);
    Ok(canonical_sign(Quaternion::from_raw(v[0], v[1], v[2], v[3]).normalize()))
}

fn canonical_sign(q: Quaternion) -> Quaternion {
    if q.w < 0.0 {
        q.negated()
    } else {
        q
    }
}

/// Coefficients `[c0, c1, c2, c3, c4]` of `det(λI − K)` by Faddeev–LeVerrier.
fn char_poly_4(k: &Matrix4<f64>) -> [f64; 5] {
    let mut c = [0.0; 5];
    c[4] = 1.0;
    let mut m = Matrix4::<f64>::zeros();
    for step in 1..=4 {
        m = k * m + Matrix4::identity() * c[5 - step];
        c[4 - step] = -(k * m).trace() / step as f64;
    }
    c
}

fn eval_poly_with_derivative(c: &[f64; 5], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &ci in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + ci;
    }
    (p, dp)
}

/// Re-expresses a treadmill-frame COP sample relative to the pelvis centre.
///
/// Pure translation; see [`to_pelvis_frame_with_yaw`] for the heading-compensated variant.
pub fn to_pelvis_frame(cop: CopSample, pelvis_xy: Vec3) -> Result<CopSample> {
    if cop.frame != Frame::Treadmill {
        return Err(Error::WrongFrame { expected: "treadmill", found: cop.frame.name() });
    }
    Ok(CopSample::new(cop.x_anterior - pelvis_xy.x, cop.y_lateral - pelvis_xy.y, Frame::Pelvis))
}

/// Translation to the pelvis centre followed by rotation by `-yaw` (radians).
pub fn to_pelvis_frame_with_yaw(cop: CopSample, pelvis_xy: Vec3, yaw: f64) -> Result<CopSample> {
    let p = to_pelvis_frame(cop, pelvis_xy)?;
    let (s, c) = yaw.sin_cos();
    Ok(CopSample::new(
        c * p.x_anterior + s * p.y_lateral,
        -s * p.x_anterior + c * p.y_lateral,
        Frame::Pelvis,
    ))
}

/// Inverse of [`to_pelvis_frame`].
pub fn to_treadmill_frame(cop: CopSample, pelvis_xy: Vec3) -> Result<CopSample> {
    if cop.frame != Frame::Pelvis {
        return Err(Error::WrongFrame { expected: "pelvis", found: cop.frame.name() });
    }
    Ok(CopSample::new(cop.x_anterior + pelvis_xy.x, cop.y_lateral + pelvis_xy.y, Frame::Treadmill))
}

impl Recording {
    /// Copy of the recording with COP expressed in the pelvis frame.
    ///
    /// Recordings already in the pelvis frame are returned unchanged.
    pub fn into_pelvis_frame(mut self) -> Result<Recording> {
        if self.cop_frame() == Frame::Pelvis {
            return Ok(self);
        }
        for (c, p) in self.cop.iter_mut().zip(&self.pelvis_xy) {
            *c = to_pelvis_frame(*c, *p)?;
        }
        self.manifest.cop_frame = Frame::Pelvis;
        Ok(self)
    }
}

/// GAM series for an orientation series: differentiated gyro plus static A and M.
pub fn orientation_series_to_gam(
    qs: &[Quaternion],
    dt: f64,
    reference: &ReferenceFields,
) -> Result<Vec<GamTriplet>> {
    let gyro = quat_series_to_gyro(qs, dt)?;
    Ok(qs
        .iter()
        .zip(gyro)
        .map(|(&q, g)| {
            let (accel, mag) = quat_to_am(q, reference);
            GamTriplet { gyro: g, accel, mag }
        })
        .collect())
}

/// First-order integration of body rates: `q_{k+1} = q_k ⊗ exp(½ ω̄ dt)` with `ω̄`
/// the mean of consecutive samples.
pub fn integrate_gyro(q0: Quaternion, gyro: &[Vec3], dt: f64) -> Quaternion {
    gyro.windows(2).fold(q0, |q, w| {
        let avg = (w[0] + w[1]) * 0.5;
        quat_multiply(q, Quaternion::from_rotation_vector(avg * dt))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
        // Shoemake's uniform sampling
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        Quaternion::from_raw(
            b * (2.0 * PI * u3).cos(),
            a * (2.0 * PI * u2).sin(),
            a * (2.0 * PI * u2).cos(),
            b * (2.0 * PI * u3).sin(),
        )
        .normalize()
    }

    fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    /// Rotation matrix built directly from axis/angle (Rodrigues), independent of
    /// the quaternion code paths.
    fn rodrigues(axis: Vec3, angle: f64) -> [[f64; 3]; 3] {
        let u = axis.normalized().unwrap();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        [
            [c + u.x * u.x * t, u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s],
            [u.y * u.x * t + u.z * s, c + u.y * u.y * t, u.y * u.z * t - u.x * s],
            [u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t],
        ]
    }

    fn mat_vec(m: [[f64; 3]; 3], v: Vec3) -> Vec3 {
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    #[test]
    fn multiply_identity_inverse_and_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_quat(&mut rng);
        assert!(quat_multiply(Quaternion::IDENTITY, q).angle_to(q) < 1e-15);
        assert!(quat_multiply(q, q.conjugate()).angle_to(Quaternion::IDENTITY) < 1e-12);

        let rz90 = Quaternion::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let twice = quat_multiply(rz90, rz90);
        // oracle: composing two 90° rotations about z is 180° about z
        let m = rodrigues(Vec3::Z, PI);
        let expected = matrix_to_quat(m);
        assert!(twice.angle_to(expected) < 1e-12);
        assert!((twice.z.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotate_canonical_and_matrix_oracle() {
        assert!(close(quat_rotate(Quaternion::IDENTITY, Vec3::X), Vec3::X, 1e-15));
        let rz90 = Quaternion::from_axis_angle(Vec3::Z, FRAC_PI_2);
        assert!(close(quat_rotate(rz90, Vec3::X), Vec3::Y, 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let axis = random_vec(&mut rng);
            let angle = rng.random_range(-PI..PI);
            let q = Quaternion::from_axis_angle(axis, angle);
            let v = random_vec(&mut rng);
            let expected = mat_vec(rodrigues(axis, angle), v);
            assert!(close(quat_rotate(q, v), expected, 1e-12));
            assert!((quat_rotate(q, v).norm() - v.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let q = random_quat(&mut rng);
            let (a, b) = (random_vec(&mut rng), random_vec(&mut rng));
            assert!((quat_rotate(q, a).dot(quat_rotate(q, b)) - a.dot(b)).abs() < 1e-9);
        }
    }

    #[test]
    fn markers_aligned_with_lab_give_identity() {
        let m = MarkerTriplet {
            p1: Vec3::ZERO,
            p2: Vec3::new(100.0, 0.0, 0.0),
            p3: Vec3::new(0.0, 100.0, 0.0),
        };
        let q = markers_to_orientation(&m).unwrap();
        assert!(q.angle_to(Quaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn unit_triangle_below_area_threshold_is_rejected() {
        // Points (1,0,0), (0,1,0) span a triangle of 0.5 mm² and are treated as degenerate.
        let m = MarkerTriplet { p1: Vec3::ZERO, p2: Vec3::X, p3: Vec3::Y };
        assert!(matches!(markers_to_orientation(&m), Err(Error::CollinearMarkers { .. })));
        let collinear = MarkerTriplet { p1: Vec3::ZERO, p2: Vec3::X, p3: Vec3::new(2.0, 0.0, 0.0) };
        assert!(matches!(markers_to_orientation(&collinear), Err(Error::CollinearMarkers { .. })));
    }

    #[test]
    fn markers_recover_applied_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = MarkerTriplet {
            p1: Vec3::ZERO,
            p2: Vec3::new(120.0, 0.0, 0.0),
            p3: Vec3::new(0.0, 80.0, 0.0),
        };
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            let offset = random_vec(&mut rng) * 100.0;
            let rotated = MarkerTriplet {
                p1: quat_rotate(q, base.p1) + offset,
                p2: quat_rotate(q, base.p2) + offset,
                p3: quat_rotate(q, base.p3) + offset,
            };
            assert!(markers_to_orientation(&rotated).unwrap().angle_to(q) < 1e-9);
        }
    }

    #[test]
    fn markers_are_rotation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let tri = MarkerTriplet {
                p1: random_vec(&mut rng) * 50.0,
                p2: random_vec(&mut rng) * 50.0,
                p3: random_vec(&mut rng) * 50.0,
            };
            let Ok(q0) = markers_to_orientation(&tri) else { continue };
            let r = random_quat(&mut rng);
            let rot = MarkerTriplet {
                p1: quat_rotate(r, tri.p1),
                p2: quat_rotate(r, tri.p2),
                p3: quat_rotate(r, tri.p3),
            };
            let q1 = markers_to_orientation(&rot).unwrap();
            assert!(q1.angle_to(quat_multiply(r, q0)) < 1e-9);
        }
    }

    #[test]
    fn fixed_rotation_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_quat(&mut rng);
        assert_eq!(apply_fixed_rotation(q, Quaternion::IDENTITY).to_array(), q.to_array());
        let rx = Quaternion::from_axis_angle(Vec3::X, FRAC_PI_2);
        assert!(apply_fixed_rotation(Quaternion::IDENTITY, rx).angle_to(rx) < 1e-15);
        let fix = random_quat(&mut rng);
        let back = apply_fixed_rotation(apply_fixed_rotation(q, fix), fix.conjugate());
        assert!(back.angle_to(q) < 1e-12);
    }

    #[test]
    fn gyro_of_constant_orientation_is_zero() {
        let q = Quaternion::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7);
        let w = quat_series_to_gyro(&[q; 20], 0.01).unwrap();
        assert!(w.iter().all(|v| v.norm() < 1e-12));
        assert!(matches!(quat_series_to_gyro(&[q], 0.01), Err(Error::SeriesTooShort { len: 1 })));
    }

    #[test]
    fn gyro_of_constant_rate_about_z() {
        let dt = 0.01;
        let qs: Vec<_> = (0..1000)
            .map(|k| Quaternion::from_axis_angle(Vec3::Z, k as f64 * dt))
            .collect();
        let w = quat_series_to_gyro(&qs, dt).unwrap();
        for v in &w {
            assert!(close(*v, Vec3::Z, 1e-4), "{v:?}");
        }
    }

    #[test]
    fn gyro_is_body_frame() {
        // Spin about world z on top of a fixed tilt: body rate is R(q)ᵀ ω_world.
        let dt = 0.01;
        let tilt = Quaternion::from_axis_angle(Vec3::X, FRAC_PI_2);
        let qs: Vec<_> = (0..200)
            .map(|k| quat_multiply(Quaternion::from_axis_angle(Vec3::Z, 0.5 * k as f64 * dt), tilt))
            .collect();
        let w = quat_series_to_gyro(&qs, dt).unwrap();
        for (q, v) in qs.iter().zip(&w) {
            let expected = quat_rotate_inverse(*q, Vec3::Z * 0.5);
            assert!(close(*v, expected, 1e-5));
        }
    }

    #[test]
    fn gyro_matches_axis_angle_differencing_oracle() {
        // Smooth trajectory; oracle: relative rotation between neighbours as a
        // rotation vector over the step, evaluated at the midpoint.
        let dt = 0.01;
        let traj = |t: f64| {
            let a = Quaternion::from_axis_angle(Vec3::X, 0.6 * (1.3 * t).sin());
            let b = Quaternion::from_axis_angle(Vec3::Y, 0.4 * (0.7 * t + 0.3).cos());
            let c = Quaternion::from_axis_angle(Vec3::Z, 0.9 * t);
            quat_multiply(quat_multiply(c, a), b)
        };
        let qs: Vec<_> = (0..600).map(|k| traj(k as f64 * dt)).collect();
        let w = quat_series_to_gyro(&qs, dt).unwrap();
        let mut peak: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for k in 1..qs.len() - 1 {
            let d = qs[k - 1].conjugate().hamilton(qs[k + 1]);
            let d = if d.w < 0.0 { d.negated() } else { d };
            let angle = 2.0 * d.vector().norm().atan2(d.w);
            let axis = d.vector().normalized().unwrap_or(Vec3::ZERO);
            // the rotation vector over 2dt lives in the frame of q[k-1]; move it to q[k]
            let oracle = quat_rotate_inverse(
                qs[k - 1].conjugate().hamilton(qs[k]).normalize(),
                axis * (angle / (2.0 * dt)),
            );
            peak = peak.max(oracle.norm());
            worst = worst.max((w[k] - oracle).norm());
        }
        assert!(worst < 0.01 * peak, "worst {worst} peak {peak}");
    }

    #[test]
    fn integrated_gyro_recovers_terminal_orientation() {
        let dt = 0.01;
        let traj = |t: f64| {
            let a = Quaternion::from_axis_angle(Vec3::new(1.0, 0.2, 0.0), 0.5 * (2.0 * t).sin());
            let b = Quaternion::from_axis_angle(Vec3::Z, 0.3 * t + 0.2 * (0.9 * t).cos());
            quat_multiply(b, a)
        };
        let qs: Vec<_> = (0..=1000).map(|k| traj(k as f64 * dt)).collect();
        let w = quat_series_to_gyro(&qs, dt).unwrap();
        let end = integrate_gyro(qs[0], &w, dt);
        assert!(end.angle_to(qs[1000]) < 0.01, "{}", end.angle_to(qs[1000]));
    }

    #[test]
    fn static_readings() {
        let r = ReferenceFields::default();
        r.validate().unwrap();
        let (a, m) = quat_to_am(Quaternion::IDENTITY, &r);
        assert!(close(a, Vec3::new(0.0, 0.0, GRAVITY), 1e-12));
        assert!(close(m, r.mag_world, 1e-12));
        let (a, _) = quat_to_am(Quaternion::from_axis_angle(Vec3::X, PI), &r);
        assert!(close(a, Vec3::new(0.0, 0.0, -GRAVITY), 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = random_quat(&mut rng);
            let (a, m) = quat_to_am(q, &r);
            assert!(close(quat_rotate(q, a), Vec3::new(0.0, 0.0, GRAVITY), 1e-9));
            assert!((m.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quest_round_trip() {
        let r = ReferenceFields::default();
        let (a, m) = quat_to_am(Quaternion::IDENTITY, &r);
        assert!(quest_recover(a, m, &r).unwrap().angle_to(Quaternion::IDENTITY) < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let (a, m) = quat_to_am(q, &r);
            let err = quest_recover(a, m, &r).unwrap().angle_to(q);
            assert!(err < 1e-6, "{err} for {q:?}");
        }
        // near-180° rotations exercise the fallback
        for axis in [Vec3::X, Vec3::Y, Vec3::Z, Vec3::new(1.0, 1.0, 0.0)] {
            let q = Quaternion::from_axis_angle(axis, PI - 1e-9);
            let (a, m) = quat_to_am(q, &r);
            assert!(quest_recover(a, m, &r).unwrap().angle_to(q) < 1e-6);
        }
    }

    #[test]
    fn quest_rejects_parallel_observations() {
        let r = ReferenceFields::default();
        let v = Vec3::new(0.0, 0.0, 9.81);
        assert!(matches!(
            quest_recover(v, Vec3::Z, &r),
            Err(Error::DegenerateObservations { .. })
        ));
        assert!(matches!(
            quest_recover(v, -Vec3::Z, &r),
            Err(Error::DegenerateObservations { .. })
        ));
    }

    #[test]
    fn pelvis_frame_translation() {
        let c = to_pelvis_frame(CopSample::new(100.0, 50.0, Frame::Treadmill), Vec3::new(100.0, 50.0, 0.0)).unwrap();
        assert_eq!((c.x_anterior, c.y_lateral, c.frame), (0.0, 0.0, Frame::Pelvis));
        let c = to_pelvis_frame(CopSample::new(120.0, 40.0, Frame::Treadmill), Vec3::new(100.0, 50.0, 0.0)).unwrap();
        assert_eq!((c.x_anterior, c.y_lateral), (20.0, -10.0));
        assert!(matches!(to_pelvis_frame(c, Vec3::ZERO), Err(Error::WrongFrame { .. })));

        let p = Vec3::new(13.5, -7.25, 0.0);
        let orig = CopSample::new(42.0, 17.0, Frame::Treadmill);
        assert_eq!(to_treadmill_frame(to_pelvis_frame(orig, p).unwrap(), p).unwrap(), orig);

        let yawed = to_pelvis_frame_with_yaw(CopSample::new(10.0, 0.0, Frame::Treadmill), Vec3::ZERO, FRAC_PI_2).unwrap();
        assert!((yawed.x_anterior).abs() < 1e-12 && (yawed.y_lateral + 10.0).abs() < 1e-12);
    }
}
