//! Report artifacts: JSON report, confusion CSV, misclassified glyph images.

use std::path::{Path, PathBuf};

use airwrite_core::dataset::LabeledDataset;
use airwrite_core::eval::{EvalReport, Misclassification};

use crate::error::{AppError, AppResult};
use crate::io;

pub const REPORT_NAME: &str = "report.json";
pub const CONFUSION_NAME: &str = "confusion.csv";
pub const MISCLASSIFIED_DIR: &str = "misclassified";

/// Stable JSON rendering; identical reports give identical bytes.
pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report(report: &EvalReport, out_dir: &Path) -> AppResult<(PathBuf, PathBuf)> {
    let json = out_dir.join(REPORT_NAME);
    let csv = out_dir.join(CONFUSION_NAME);
    io::write_file(&json, report_json(report).as_bytes())?;
    io::write_file(&csv, report.confusion_csv().as_bytes())?;
    Ok((json, csv))
}

/// The `k` most confident mistakes, ties broken by test position.
pub fn top_misclassifications(report: &EvalReport, k: usize) -> Vec<&Misclassification> {
    let mut all: Vec<&Misclassification> = report.misclassified.iter().collect();
    all.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.index().cmp(&b.index()))
    });
    all.truncate(k);
    all
}

/// Writes up to `k` misclassified glyphs as PGM files plus `index.csv`
/// (`file,actual,predicted,confidence`). With no mistakes only the CSV
/// header is written.
pub fn export_misclassifications(
    report: &EvalReport,
    dataset: &LabeledDataset,
    k: usize,
    out_dir: &Path,
) -> AppResult<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| AppError::Runtime(e.to_string());
    w.write_record(["file", "actual", "predicted", "confidence"]).map_err(csv_err)?;
    for m in top_misclassifications(report, k) {
        let i = m
            .index()
            .filter(|&i| i < dataset.len())
            .ok_or_else(|| AppError::Invalid(format!("{} does not name a test item", m.file)))?;
        let side = dataset.side();
        io::write_file(&out_dir.join(&m.file), &io::encode_pgm(side, side, dataset.image(i)))?;
        w.write_record([
            m.file.clone(),
            m.actual.to_string(),
            m.predicted.to_string(),
            format!("{:.6}", m.confidence),
        ])
        .map_err(csv_err)?;
    }
    let path = out_dir.join("index.csv");
    io::write_file(&path, &w.into_inner().map_err(|e| AppError::Runtime(e.to_string()))?)?;
    Ok(path)
}
