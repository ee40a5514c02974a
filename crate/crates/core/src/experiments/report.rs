//! CSV tables and JSON summaries for experiment results.

use std::path::Path;

use serde::Serialize;

use super::ablation::AblationResult;
use super::metrics::RmsReport;
use super::trainsize::TrainSizeCurve;
use super::transfer::TransferResult;
use crate::error::{Error, Result};

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::parse("csv report", e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse("csv report", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn rms_cells(r: &RmsReport) -> [String; 3] {
    [r.total.to_string(), r.lateral.to_string(), r.anterior.to_string()]
}

/// One row per labelled report: `label,tot,lat,ant`.
pub fn rms_table_csv(rows: &[(String, RmsReport)]) -> Result<String> {
    to_csv(
        &["model", "tot_mm", "lat_mm", "ant_mm"],
        rows.iter().map(|(l, r)| std::iter::once(l.clone()).chain(rms_cells(r)).collect()),
    )
}

pub fn ablation_csv(result: &AblationResult) -> Result<String> {
    to_csv(
        &["imus", "n_imus", "tot_mm", "lat_mm", "ant_mm", "train_mse_mm2"],
        result.entries.iter().map(|e| {
            let mut row = vec![e.constellation.to_string(), e.constellation.len().to_string()];
            row.extend(rms_cells(&e.test));
            row.push(e.train_mse.to_string());
            row
        }),
    )
}

/// Best and worst placement per sensor count.
pub fn ablation_extremes_csv(result: &AblationResult) -> Result<String> {
    to_csv(
        &["n_imus", "best_imus", "best_tot_mm", "worst_imus", "worst_tot_mm"],
        result.extremes().iter().map(|x| {
            vec![
                x.count.to_string(),
                x.best.constellation.to_string(),
                x.best.test.total.to_string(),
                x.worst.constellation.to_string(),
                x.worst.test.total.to_string(),
            ]
        }),
    )
}

pub fn train_size_csv(curve: &TrainSizeCurve) -> Result<String> {
    to_csv(
        &["seconds", "repeat", "tot_mm", "lat_mm", "ant_mm"],
        curve.points.iter().flat_map(|p| {
            p.repeats.iter().enumerate().map(move |(i, r)| {
                let mut row = vec![p.seconds.to_string(), i.to_string()];
                row.extend(rms_cells(r));
                row
            })
        }),
    )
}

pub fn train_size_summary_csv(curve: &TrainSizeCurve) -> Result<String> {
    to_csv(
        &["seconds", "mean_tot_mm", "std_tot_mm"],
        curve.points.iter().map(|p| vec![p.seconds.to_string(), p.mean_total.to_string(), p.std_total.to_string()]),
    )
}

/// Case A (no target data) and case B (standing calibration) per target.
pub fn transfer_csv(results: &[TransferResult]) -> Result<String> {
    to_csv(
        &["subject", "a_tot_mm", "a_lat_mm", "a_ant_mm", "b_tot_mm", "b_lat_mm", "b_ant_mm", "calib_samples"],
        results.iter().map(|r| {
            let mut row = vec![r.target.clone()];
            row.extend(rms_cells(&r.uncalibrated));
            row.extend(rms_cells(&r.calibrated));
            row.push(r.calib_samples.to_string());
            row
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
