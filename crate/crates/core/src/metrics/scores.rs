use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use crate::error::{Error, Result};

#[inline]
fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-class (TP, FP, FN).
fn tp_fp_fn(c: &ConfusionMatrix, k: usize) -> (u64, u64, u64) {
    let tp = c.get(k, k);
    (tp, c.col_sum(k) - tp, c.row_sum(k) - tp)
}

/// TP / (TP + FP + FN); undefined for classes absent from both sides.
pub fn per_class_iou(c: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..c.k())
        .map(|k| {
            let (tp, fp, fn_) = tp_fp_fn(c, k);
            ratio(tp, tp + fp + fn_)
        })
        .collect()
}

/// Harmonic mean of precision and recall, computed as 2TP / (2TP + FP + FN).
/// The two forms agree wherever precision and recall are defined; this one
/// also gives 0 when a class is predicted but absent (or present but never
/// predicted). Undefined for classes absent from both sides.
pub fn per_class_f1(c: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..c.k())
        .map(|k| {
            let (tp, fp, fn_) = tp_fp_fn(c, k);
            ratio(2 * tp, 2 * tp + fp + fn_)
        })
        .collect()
}

/// TP / (TP + FN); undefined for classes without reference pixels.
pub fn per_class_recall(c: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..c.k()).map(|k| ratio(c.get(k, k), c.row_sum(k))).collect()
}

/// TP / (TP + FP); undefined for classes never predicted.
pub fn per_class_precision(c: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..c.k()).map(|k| ratio(c.get(k, k), c.col_sum(k))).collect()
}

pub fn overall_accuracy(c: &ConfusionMatrix) -> Result<f64> {
    ratio(c.trace(), c.total()).ok_or(Error::EmptyMatrix)
}

/// Treatment of undefined per-class values in macro averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedPolicy {
    /// Leave them out of the mean.
    #[default]
    Exclude,
    /// Count them as 0.
    Zero,
}

impl fmt::Display for UndefinedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndefinedPolicy::Exclude => "exclude",
            UndefinedPolicy::Zero => "zero",
        })
    }
}

impl FromStr for UndefinedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(UndefinedPolicy::Exclude),
            "zero" => Ok(UndefinedPolicy::Zero),
            other => Err(Error::Parse(format!("invalid undefined policy {other:?}"))),
        }
    }
}

/// Unweighted mean of the per-class values. Errors when no value is
/// defined, whatever the policy.
pub fn macro_average(values: &[Option<f64>], policy: UndefinedPolicy) -> Result<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::AllUndefined);
    }
    let n = match policy {
        UndefinedPolicy::Exclude => defined.len(),
        UndefinedPolicy::Zero => values.len(),
    };
    Ok(defined.iter().sum::<f64>() / n as f64)
}
