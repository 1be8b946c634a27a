use std::path::Path;

use serde::Serialize;

use super::confusion::ConfusionMatrix;
use super::scores::{
    macro_average, overall_accuracy, per_class_f1, per_class_iou, per_class_precision, per_class_recall,
    UndefinedPolicy,
};
use crate::error::{Error, Result};
use crate::taxonomy::ClassScheme;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub class_name: String,
    /// Per-class agreement rate, reported in the "OA" column of per-class tables.
    pub recall: Option<f64>,
    pub iou: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    /// Reference pixels of the class.
    pub support: u64,
    pub class_frequency_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub overall_accuracy: f64,
    pub macro_recall: f64,
    pub macro_iou: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub undefined_policy: UndefinedPolicy,
    pub total_pixels: u64,
    pub classes: Vec<ClassMetrics>,
}

/// Two-decimal rounding for percentages.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn report(c: &ConfusionMatrix, scheme: &ClassScheme, policy: UndefinedPolicy) -> Result<MetricReport> {
    if scheme.len() != c.k() {
        return Err(Error::SchemeMismatch(format!(
            "confusion matrix has {} classes, scheme has {}",
            c.k(),
            scheme.len()
        )));
    }
    let overall = overall_accuracy(c)?;
    let (recall, iou, f1, precision) = (
        per_class_recall(c),
        per_class_iou(c),
        per_class_f1(c),
        per_class_precision(c),
    );
    let total = c.total();
    let classes = scheme
        .classes()
        .iter()
        .enumerate()
        .map(|(k, info)| ClassMetrics {
            class_id: info.id,
            class_name: info.name.clone(),
            recall: recall[k],
            iou: iou[k],
            f1: f1[k],
            precision: precision[k],
            support: c.row_sum(k),
            class_frequency_percent: round2(100.0 * c.row_sum(k) as f64 / total as f64),
        })
        .collect();
    Ok(MetricReport {
        overall_accuracy: overall,
        macro_recall: macro_average(&recall, policy)?,
        macro_iou: macro_average(&iou, policy)?,
        macro_f1: macro_average(&f1, policy)?,
        macro_precision: macro_average(&precision, policy)?,
        undefined_policy: policy,
        total_pixels: total,
        classes,
    })
}

pub const REPORT_CSV_HEADER: [&str; 8] = [
    "class_id",
    "class_name",
    "recall",
    "iou",
    "f1",
    "precision",
    "support",
    "class_frequency_percent",
];

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into())
}

impl MetricReport {
    /// Per-class rows, then a `macro` row and an `overall` row whose recall
    /// column holds the overall accuracy.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .map(|c| {
                vec![
                    c.class_id.to_string(),
                    c.class_name.clone(),
                    fmt_metric(c.recall),
                    fmt_metric(c.iou),
                    fmt_metric(c.f1),
                    fmt_metric(c.precision),
                    c.support.to_string(),
                    c.class_frequency_percent.to_string(),
                ]
            })
            .collect();
        rows.push(vec![
            "macro".into(),
            "Macro Average".into(),
            self.macro_recall.to_string(),
            self.macro_iou.to_string(),
            self.macro_f1.to_string(),
            self.macro_precision.to_string(),
            self.total_pixels.to_string(),
            String::new(),
        ]);
        rows.push(vec![
            "overall".into(),
            "Overall Accuracy".into(),
            self.overall_accuracy.to_string(),
            String::new(),
            String::new(),
            String::new(),
            self.total_pixels.to_string(),
            "100".into(),
        ]);
        rows
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(REPORT_CSV_HEADER)?;
        for row in self.csv_rows() {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes `report.json`, `report.csv` and `confusion.csv` into `dir`.
pub fn write_report_files(dir: &Path, report: &MetricReport, confusion: &ConfusionMatrix) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    for (name, body) in [
        ("report.json", report.to_json_string()?),
        ("report.csv", report.to_csv_string()?),
        ("confusion.csv", confusion.to_grid_csv()),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io_at(&path, e))?;
    }
    Ok(())
}
