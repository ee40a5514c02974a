//! Recording files: one CSV of samples plus a JSON manifest sidecar.
//!
//! The CSV header is `t, imu{2..8}_{g|a|m}_{x|y|z}, cop_x, cop_y, pelvis_x,
//! pelvis_y, sync, step`, with IMU columns present for exactly the sensors the
//! manifest declares. The sidecar for `name.csv` is `name.manifest.json`.
//! Units may be tagged per column or per group in the manifest's `units` map;
//! values are converted to canonical units on read and always written canonical.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kinematics::GRAVITY;
use crate::types::{validate, CopSample, GamTriplet, Manifest, Recording, SensorId, Vec3};

const KINDS: [char; 3] = ['g', 'a', 'm'];
const AXES: [char; 3] = ['x', 'y', 'z'];

/// Sidecar manifest path for a recording CSV.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

pub fn imu_column(sensor: SensorId, channel: usize) -> String {
    format!("imu{}_{}_{}", sensor.label(), KINDS[channel / 3], AXES[channel % 3])
}

/// Header for a recording carrying `sensors`, in file order.
pub fn header(manifest: &Manifest) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for s in manifest.sensors.sensors() {
        h.extend((0..9).map(|c| imu_column(s, c)));
    }
    h.extend(["cop_x", "cop_y", "pelvis_x", "pelvis_y", "sync", "step"].map(String::from));
    h
}

fn column_group(col: &str) -> &'static str {
    if col == "t" {
        "t"
    } else if col.starts_with("cop_") {
        "cop"
    } else if col.starts_with("pelvis_") {
        "pelvis"
    } else if col.starts_with("imu") && col.contains("_g_") {
        "gyro"
    } else if col.starts_with("imu") && col.contains("_a_") {
        "accel"
    } else if col.starts_with("imu") && col.contains("_m_") {
        "mag"
    } else {
        "other"
    }
}

/// Multiplier taking a column tagged `tag` into canonical units.
fn unit_factor(col: &str, tag: &str) -> Result<f64> {
    let unit_err = || Error::Unit { column: col.to_string(), tag: tag.to_string() };
    let f = match (column_group(col), tag.trim()) {
        ("t", "s") => 1.0,
        ("t", "ms") => 1e-3,
        ("gyro", "rad/s") => 1.0,
        ("gyro", "deg/s") => std::f64::consts::PI / 180.0,
        ("accel", "m/s2" | "m/s^2" | "m/s²") => 1.0,
        ("accel", "g") => GRAVITY,
        ("mag", "unit" | "1" | "normalized") => 1.0,
        ("cop" | "pelvis", "mm") => 1.0,
        ("cop" | "pelvis", "cm") => 10.0,
        ("cop" | "pelvis", "m") => 1000.0,
        _ => return Err(unit_err()),
    };
    Ok(f)
}

fn factor_for(manifest: &Manifest, col: &str) -> Result<f64> {
    match manifest.units.get(col).or_else(|| manifest.units.get(column_group(col))) {
        Some(tag) => unit_factor(col, tag),
        None => Ok(1.0),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads `path` and its manifest sidecar into a validated recording in canonical units.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let manifest = read_manifest(&manifest_path(path))?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let loc = |line: u64| format!("{}:{line}", path.display());

    let head: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(loc(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<&str, usize> = head.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| {
        index.get(name).copied().ok_or_else(|| Error::parse(loc(1), format!("missing column {name}")))
    };

    let mut imu_cols: BTreeMap<SensorId, [usize; 9]> = BTreeMap::new();
    for s in manifest.sensors.sensors() {
        let mut cols = [0; 9];
        for (c, slot) in cols.iter_mut().enumerate() {
            let name = imu_column(s, c);
            *slot = *index.get(name.as_str()).ok_or_else(|| {
                Error::ManifestMismatch(format!("sensor {} declared in manifest but column {name} is missing", s.label()))
            })?;
        }
        imu_cols.insert(s, cols);
    }
    for h in &head {
        if let Some(label) = h.strip_prefix("imu").and_then(|r| r.split('_').next()) {
            let declared = label
                .parse::<u8>()
                .ok()
                .and_then(SensorId::from_label)
                .is_some_and(|s| manifest.sensors.contains(s));
            if !declared {
                return Err(Error::ManifestMismatch(format!("column {h} belongs to a sensor not declared in manifest")));
            }
        }
    }

    let t_col = find("t")?;
    let cop_cols = [find("cop_x")?, find("cop_y")?];
    let pelvis_cols = [find("pelvis_x")?, find("pelvis_y")?];
    let step_col = find("step")?;
    let sync_col = index.get("sync").copied();

    let mut factors = vec![1.0; head.len()];
    for (i, h) in head.iter().enumerate() {
        if h != "sync" && h != "step" {
            factors[i] = factor_for(&manifest, h)?;
        }
    }

    let mut rec = Recording {
        manifest,
        t: Vec::new(),
        imu: imu_cols.keys().map(|s| (*s, Vec::new())).collect(),
        cop: Vec::new(),
        pelvis_xy: Vec::new(),
        step_label: Vec::new(),
        sync: Vec::new(),
    };
    let frame = rec.manifest.cop_frame;
    let mut values = vec![0.0; head.len()];
    for (row_no, row) in reader.records().enumerate() {
        let line = row_no as u64 + 2;
        let row = row.map_err(|e| Error::parse(loc(line), e.to_string()))?;
        if row.len() != head.len() {
            return Err(Error::parse(loc(line), format!("{} fields, header has {}", row.len(), head.len())));
        }
        for (i, field) in row.iter().enumerate() {
            values[i] = field
                .parse::<f64>()
                .map_err(|_| Error::parse(loc(line), format!("column {}: cannot parse {field:?}", head[i])))?
                * factors[i];
        }
        rec.t.push(values[t_col]);
        for (s, cols) in &imu_cols {
            let c = cols.map(|i| values[i]);
            rec.imu.get_mut(s).expect("sensor inserted above").push(GamTriplet::from_channels(c));
        }
        rec.cop.push(CopSample::new(values[cop_cols[0]], values[cop_cols[1]], frame));
        rec.pelvis_xy.push(Vec3::new(values[pelvis_cols[0]], values[pelvis_cols[1]], 0.0));
        let step = values[step_col];
        if step < 0.0 || step.fract() != 0.0 {
            return Err(Error::parse(loc(line), format!("step label {step} is not a non-negative integer")));
        }
        rec.step_label.push(step as usize);
        rec.sync.push(sync_col.is_none_or(|i| values[i] != 0.0));
    }

    rec.manifest.units.clear();
    let findings = validate(&rec);
    if !findings.is_empty() {
        return Err(Error::parse(path.display().to_string(), findings.join("; ")));
    }
    Ok(rec)
}

/// Writes the recording CSV and its manifest sidecar in canonical units.
///
/// Numbers use the shortest representation that round-trips exactly.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut manifest = rec.manifest.clone();
    manifest.units.clear();
    manifest.cop_frame = rec.cop_frame();
    if let Some(c) = rec.constellation() {
        manifest.sensors = c;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header(&manifest).join(",")).map_err(io)?;
    let mut line = String::with_capacity(1024);
    for k in 0..rec.len() {
        line.clear();
        push_num(&mut line, rec.t[k]);
        for s in manifest.sensors.sensors() {
            for v in rec.imu[&s][k].channels() {
                line.push(',');
                push_num(&mut line, v);
            }
        }
        for v in [rec.cop[k].x_anterior, rec.cop[k].y_lateral, rec.pelvis_xy[k].x, rec.pelvis_xy[k].y] {
            line.push(',');
            push_num(&mut line, v);
        }
        line.push_str(if rec.sync[k] { ",1," } else { ",0," });
        line.push_str(&rec.step_label[k].to_string());
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_manifest(&manifest, &manifest_path(path))
}

fn push_num(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(s, "{v}");
}
