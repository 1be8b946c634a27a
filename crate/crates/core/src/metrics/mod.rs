//! Confusion matrices and the metrics derived from them.
//!
//! Matrices are oriented rows = reference, columns = prediction.

mod confusion;
mod report;
mod scores;

pub use confusion::{accumulate, accumulate_sharded, ConfusionMatrix};
pub use report::{report, round2, write_report_files, ClassMetrics, MetricReport, REPORT_CSV_HEADER};
pub use scores::{
    macro_average, overall_accuracy, per_class_f1, per_class_iou, per_class_precision, per_class_recall,
    UndefinedPolicy,
};
