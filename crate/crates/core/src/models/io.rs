//! JSON model container: `{"format": "copforge-model", "version": 1, "model": {...}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "copforge-model";

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: Model,
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let c = Container { format: FORMAT_TAG.into(), version: MODEL_FORMAT_VERSION, model: model.clone() };
    let text = serde_json::to_string(&c)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let loc = path.display().to_string();
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(&loc, e.to_string()))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT_TAG) {
        return Err(Error::parse(&loc, "not a copforge model file"));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::parse(&loc, "missing version"))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch { expected: MODEL_FORMAT_VERSION, found: version.min(u32::MAX as u64) as u32 });
    }
    let c: Container = serde_json::from_value(value).map_err(|e| Error::parse(&loc, e.to_string()))?;
    Ok(c.model)
}
