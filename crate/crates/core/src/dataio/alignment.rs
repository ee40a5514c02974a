//! Per-sensor fixed alignment rotations.
//!
//! Plain text, one entry per line: `<sensor> = <axis_x> <axis_y> <axis_z> <angle_deg>`.
//! The sensor is a placement label (`2`..`8`) or name (`back`, `r_thigh`, ...).
//! Blank lines and `#` comments are ignored. Sensors without an entry use the
//! identity rotation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Quaternion, SensorId, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignment {
    rotations: BTreeMap<SensorId, (Vec3, f64)>,
}

impl Alignment {
    pub fn insert(&mut self, sensor: SensorId, axis: Vec3, angle_deg: f64) {
        self.rotations.insert(sensor, (axis, angle_deg));
    }

    /// Fixed body-side rotation for `sensor`.
    pub fn rotation(&self, sensor: SensorId) -> Quaternion {
        self.rotations
            .get(&sensor)
            .map_or(Quaternion::IDENTITY, |&(axis, deg)| Quaternion::from_axis_angle(axis, deg.to_radians()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Alignment::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("alignment line {}", i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&loc, "expected `<sensor> = <ax> <ay> <az> <deg>`"))?;
            let sensor: SensorId = key.trim().parse().map_err(|_| Error::parse(&loc, format!("unknown sensor {:?}", key.trim())))?;
            let nums = value
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(&loc, format!("bad number {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let [ax, ay, az, deg] = nums[..] else {
                return Err(Error::parse(&loc, format!("expected 4 numbers, found {}", nums.len())));
            };
            let axis = Vec3::new(ax, ay, az);
            if axis.norm() == 0.0 && deg != 0.0 {
                return Err(Error::parse(&loc, "rotation axis must be non-zero"));
            }
            out.insert(sensor, axis, deg);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Alignment::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# sensor = axis_x axis_y axis_z angle_deg\n");
        for (id, (a, deg)) in &self.rotations {
            let _ = writeln!(s, "{} = {} {} {} {}", id.name(), a.x, a.y, a.z, deg);
        }
        s
    }
}
