//! Builds a canonical recording from per-segment orientation sources.
//!
//! Input directory layout:
//!
//! * `cop.csv` with columns `t,x_anterior_mm,y_lateral_mm,pelvis_x_mm,pelvis_y_mm,speed,perturbation`,
//!   COP in the treadmill frame. Protocol steps are the runs of equal
//!   `(speed, perturbation)`.
//! * one `<segment>.csv` per worn sensor (`back.csv`, `r_thigh.csv`, ...), either a
//!   quaternion series `t,qw,qx,qy,qz` or a marker series
//!   `t,p1x,p1y,p1z,p2x,p2y,p2z,p3x,p3y,p3z` in mm. Row count must match `cop.csv`.
//! * optional `alignment.txt` (see [`Alignment`]).

use std::collections::BTreeMap;
use std::path::Path;

use super::alignment::Alignment;
use crate::error::{Error, Result};
use crate::kinematics::{
    align_hemispheres, apply_fixed_rotation, markers_to_orientation, orientation_series_to_gam, MarkerTriplet,
    ReferenceFields,
};
use crate::types::{CopSample, Frame, Manifest, ProtocolStep, Quaternion, Recording, SensorId, Source, Vec3};

const COP_COLUMNS: [&str; 7] = ["t", "x_anterior_mm", "y_lateral_mm", "pelvis_x_mm", "pelvis_y_mm", "speed", "perturbation"];
const QUAT_COLUMNS: [&str; 5] = ["t", "qw", "qx", "qy", "qz"];
const MARKER_COLUMNS: [&str; 10] = ["t", "p1x", "p1y", "p1z", "p2x", "p2y", "p2z", "p3x", "p3y", "p3z"];

/// Numeric table with a checked header.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let loc = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(&loc, e.to_string()))?;
    let header: Vec<String> =
        rdr.headers().map_err(|e| Error::parse(&loc, e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&loc, e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::parse(format!("{loc} sample {i}"), format!("bad number {v:?} in column {}", header[c]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn has_header(header: &[String], expected: &[&str]) -> bool {
    header.len() == expected.len() && header.iter().zip(expected).all(|(h, e)| h == e)
}

/// Orientation series of one segment, before alignment.
fn segment_orientations(id: SensorId, path: &Path) -> Result<Vec<Quaternion>> {
    let (header, rows) = read_table(path)?;
    let at = |k: usize| format!("segment {} sample {k}", id.name());
    if has_header(&header, &QUAT_COLUMNS) {
        rows.iter()
            .enumerate()
            .map(|(k, r)| {
                Quaternion::new(r[1], r[2], r[3], r[4])
                    .ok_or_else(|| Error::parse(at(k), "quaternion has zero or non-finite norm"))
            })
            .collect()
    } else if has_header(&header, &MARKER_COLUMNS) {
        rows.iter()
            .enumerate()
            .map(|(k, r)| {
                let m = MarkerTriplet {
                    p1: Vec3::new(r[1], r[2], r[3]),
                    p2: Vec3::new(r[4], r[5], r[6]),
                    p3: Vec3::new(r[7], r[8], r[9]),
                };
                markers_to_orientation(&m).map_err(|e| Error::parse(at(k), e.to_string()))
            })
            .collect()
    } else {
        Err(Error::parse(
            path.display().to_string(),
            format!("expected header {} or {}", QUAT_COLUMNS.join(","), MARKER_COLUMNS.join(",")),
        ))
    }
}

/// Protocol steps and per-sample labels from runs of equal (speed, perturbation).
fn protocol_from_runs(rows: &[Vec<f64>], dt: f64) -> (Vec<ProtocolStep>, Vec<usize>) {
    let mut steps: Vec<ProtocolStep> = Vec::new();
    let mut labels = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let (speed, pert) = (r[5], r[6]);
        let same = k > 0 && rows[k - 1][5] == speed && rows[k - 1][6] == pert;
        if same {
            steps.last_mut().expect("run started").duration += dt;
        } else {
            steps.push(ProtocolStep::new(speed, pert, dt));
        }
        labels.push(steps.len() - 1);
    }
    (steps, labels)
}

/// Reads an input directory (layout above) and returns a pelvis-frame recording.
///
/// `alignment` overrides `alignment.txt` in the directory.
pub fn convert_directory(
    dir: &Path,
    subject_id: &str,
    alignment: Option<&Alignment>,
    reference: &ReferenceFields,
) -> Result<Recording> {
    let cop_path = dir.join("cop.csv");
    let (header, rows) = read_table(&cop_path)?;
    if !has_header(&header, &COP_COLUMNS) {
        return Err(Error::parse(cop_path.display().to_string(), format!("expected header {}", COP_COLUMNS.join(","))));
    }
    if rows.len() < 2 {
        return Err(Error::SeriesTooShort { len: rows.len() });
    }
    let dt = rows[1][0] - rows[0][0];
    if !(dt > 0.0) {
        return Err(Error::parse(cop_path.display().to_string(), "time column must increase"));
    }

    let loaded;
    let alignment = match alignment {
        Some(a) => a,
        None => {
            let p = dir.join("alignment.txt");
            loaded = if p.exists() { Alignment::load(&p)? } else { Alignment::default() };
            &loaded
        }
    };

    let mut imu = BTreeMap::new();
    for id in SensorId::ALL {
        let path = dir.join(format!("{}.csv", id.name()));
        if !path.exists() {
            continue;
        }
        let qs = segment_orientations(id, &path)?;
        if qs.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "segment {} has {} samples, cop.csv has {}",
                id.name(),
                qs.len(),
                rows.len()
            )));
        }
        let fix = alignment.rotation(id);
        let qs: Vec<Quaternion> = qs.into_iter().map(|q| apply_fixed_rotation(q, fix)).collect();
        let qs = align_hemispheres(&qs);
        imu.insert(id, orientation_series_to_gam(&qs, dt, reference)?);
    }
    if imu.is_empty() {
        return Err(Error::Empty(format!("no segment files in {}", dir.display())));
    }

    let (steps, step_label) = protocol_from_runs(&rows, dt);
    let mut manifest = Manifest::new(subject_id, Source::ConvertedPublic, steps);
    manifest.sample_rate = 1.0 / dt;
    manifest.sensors = crate::types::Constellation::new(imu.keys().copied())?;
    let n = rows.len();
    let mut sync = vec![true; n];
    sync[0] = false;
    sync[n - 1] = false;
    let rec = Recording {
        manifest,
        t: rows.iter().map(|r| r[0]).collect(),
        imu,
        cop: rows.iter().map(|r| CopSample::new(r[1], r[2], Frame::Treadmill)).collect(),
        pelvis_xy: rows.iter().map(|r| Vec3::new(r[3], r[4], 0.0)).collect(),
        step_label,
        sync,
    };
    rec.into_pelvis_frame()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{quat_rotate, quest_recover, GRAVITY};
    use std::fmt::Write as _;

    fn write_cop(dir: &Path, n: usize) {
        let mut s = COP_COLUMNS.join(",") + "\n";
        for k in 0..n {
            let speed = if k < n / 2 { 0.0 } else { 0.5 };
            let _ = writeln!(s, "{},{},{},{},{},{speed},0", k as f64 * 0.01, 10.0 + k as f64, -3.0, 1.0, 2.0);
        }
        std::fs::write(dir.join("cop.csv"), s).unwrap();
    }

    fn write_quats(dir: &Path, id: SensorId, qs: &[Quaternion]) {
        let mut s = QUAT_COLUMNS.join(",") + "\n";
        for (k, q) in qs.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{},{}", k as f64 * 0.01, q.w, q.x, q.y, q.z);
        }
        std::fs::write(dir.join(format!("{}.csv", id.name())), s).unwrap();
    }

    #[test]
    fn identity_quaternions_give_static_signals() {
        let dir = tempfile::tempdir().unwrap();
        write_cop(dir.path(), 20);
        write_quats(dir.path(), SensorId::Back, &[Quaternion::IDENTITY; 20]);
        let rec = convert_directory(dir.path(), "x", None, &ReferenceFields::default()).unwrap();
        assert!(crate::types::validate(&rec).is_empty(), "{:?}", crate::types::validate(&rec));
        assert_eq!(rec.manifest.protocol_steps.len(), 2);
        assert_eq!(rec.cop_frame(), Frame::Pelvis);
        assert!((rec.cop[0].x_anterior - 9.0).abs() < 1e-12 && (rec.cop[0].y_lateral + 5.0).abs() < 1e-12);
        let m0 = rec.imu[&SensorId::Back][0].mag;
        for g in &rec.imu[&SensorId::Back] {
            assert_eq!(g.gyro, Vec3::ZERO);
            assert!((g.accel - Vec3::new(0.0, 0.0, GRAVITY)).norm() < 1e-12);
            assert!((g.mag - m0).norm() < 1e-12);
        }
    }

    #[test]
    fn quaternion_input_round_trips_through_quest() {
        let dir = tempfile::tempdir().unwrap();
        let n = 50;
        let qs: Vec<Quaternion> = (0..n)
            .map(|k| Quaternion::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.02 * k as f64))
            .collect();
        write_cop(dir.path(), n);
        write_quats(dir.path(), SensorId::LShank, &qs);
        let reference = ReferenceFields::default();
        let rec = convert_directory(dir.path(), "x", None, &reference).unwrap();
        for (g, q) in rec.imu[&SensorId::LShank].iter().zip(&qs) {
            let r = quest_recover(g.accel, g.mag, &reference).unwrap();
            assert!(r.angle_to(*q) < 1e-6);
        }
    }

    #[test]
    fn alignment_rotates_sensor_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_cop(dir.path(), 10);
        write_quats(dir.path(), SensorId::Back, &[Quaternion::IDENTITY; 10]);
        std::fs::write(dir.path().join("alignment.txt"), "back = 1 0 0 90\n").unwrap();
        let rec = convert_directory(dir.path(), "x", None, &ReferenceFields::default()).unwrap();
        let q = Quaternion::from_axis_angle(Vec3::X, 90f64.to_radians());
        let expect = quat_rotate(q.conjugate(), Vec3::new(0.0, 0.0, GRAVITY));
        assert!((rec.imu[&SensorId::Back][0].accel - expect).norm() < 1e-9);
    }

    #[test]
    fn collinear_marker_frame_names_segment_and_sample() {
        let dir = tempfile::tempdir().unwrap();
        write_cop(dir.path(), 5);
        let mut s = MARKER_COLUMNS.join(",") + "\n";
        for k in 0..5 {
            let p3 = if k == 3 { "200,0,0" } else { "0,100,0" };
            let _ = writeln!(s, "{},0,0,0,100,0,0,{p3}", k as f64 * 0.01);
        }
        std::fs::write(dir.path().join("r_foot.csv"), s).unwrap();
        let err = convert_directory(dir.path(), "x", None, &ReferenceFields::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r_foot") && msg.contains("sample 3") && msg.contains("collinear"), "{msg}");
    }

    #[test]
    fn mismatched_lengths_and_bad_headers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_cop(dir.path(), 10);
        write_quats(dir.path(), SensorId::Back, &[Quaternion::IDENTITY; 9]);
        assert!(matches!(
            convert_directory(dir.path(), "x", None, &ReferenceFields::default()),
            Err(Error::ShapeMismatch(_))
        ));
        std::fs::write(dir.path().join("back.csv"), "t,a,b\n0,1,2\n").unwrap();
        assert!(matches!(convert_directory(dir.path(), "x", None, &ReferenceFields::default()), Err(Error::Parse { .. })));
    }
}
