//! Scoring of detector output against ground-truth labels.
//!
//! Detections match ground truth at IoU ≥ 0.25 by greedy assignment in
//! descending confidence, separately per class. Certain and uncertain whales
//! are also scored merged as "whale overall". The confusion matrix uses
//! class-agnostic matching so cross-class mistakes become visible.

mod io;
mod matching;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotationError, ClassLabel};
use crate::geometry::BBox;

pub use io::{gt_from_labels, parse_predictions, read_gt_dir, read_predictions_dir, write_predictions};
pub use matching::{confusion_matrix, match_class_aware, ClassMatch, ConfusionMatrix, MatchPair};
pub use report::{emit_report, emit_report_json, parse_report, ReportRow};

pub const DEFAULT_IOU: f64 = 0.25;
pub const DEFAULT_CONFUSION_CONF: f64 = 0.15;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to optimize: no certain-whale ground truth")]
    NothingToOptimize,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("prediction file for unknown patch {0}")]
    UnknownPatch(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Labels(#[from] AnnotationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One predicted box in patch pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub patch_id: String,
    pub class: ClassLabel,
    pub bbox: BBox,
    pub confidence: f64,
}

/// One ground-truth box in patch pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub patch_id: String,
    pub class: ClassLabel,
    pub bbox: BBox,
}

/// Counts and rates for one evaluation class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassScore {
    /// Rates from counts; every zero denominator yields 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Rates given directly, counts zero. Used for report fixtures.
    pub fn from_rates(precision: f64, recall: f64, f1: f64) -> Self {
        Self {
            precision,
            recall,
            f1,
            ..Default::default()
        }
    }

    fn from_match(m: &ClassMatch) -> Self {
        Self::from_counts(m.tp, m.fp, m.fn_)
    }
}

/// Scores for the three classes, the merged whale class and their mean F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub certain_whale: ClassScore,
    pub uncertain_whale: ClassScore,
    pub whale_overall: ClassScore,
    pub harp_seal: ClassScore,
    /// Mean F1 of certain whale, uncertain whale and harp seal.
    pub mf1: f64,
    /// Number of runs averaged into these values.
    pub runs: usize,
}

impl ClassMetrics {
    pub fn new(certain_whale: ClassScore, uncertain_whale: ClassScore, whale_overall: ClassScore, harp_seal: ClassScore) -> Self {
        Self {
            certain_whale,
            uncertain_whale,
            whale_overall,
            harp_seal,
            mf1: (certain_whale.f1 + uncertain_whale.f1 + harp_seal.f1) / 3.0,
            runs: 1,
        }
    }

    pub fn class(&self, class: ClassLabel) -> &ClassScore {
        match class {
            ClassLabel::CertainWhale => &self.certain_whale,
            ClassLabel::UncertainWhale => &self.uncertain_whale,
            ClassLabel::HarpSeal => &self.harp_seal,
        }
    }

    /// The four report columns in display order.
    pub fn columns(&self) -> [&ClassScore; 4] {
        [&self.certain_whale, &self.uncertain_whale, &self.whale_overall, &self.harp_seal]
    }

    fn columns_mut(&mut self) -> [&mut ClassScore; 4] {
        [&mut self.certain_whale, &mut self.uncertain_whale, &mut self.whale_overall, &mut self.harp_seal]
    }
}

/// Detections with confidence at or above `conf_thr`.
pub fn filter_confidence(dets: &[Detection], conf_thr: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= conf_thr).cloned().collect()
}

/// Per-class and merged-whale precision, recall and F1.
pub fn score(dets: &[Detection], gts: &[GtBox], iou_thr: f64, conf_thr: f64) -> ClassMetrics {
    let [cw, uw, hs] = match_class_aware(dets, gts, iou_thr, conf_thr);
    let whale = matching::match_groups(dets, gts, iou_thr, conf_thr, |c| c.is_whale().then_some(()));
    ClassMetrics::new(
        ClassScore::from_match(&cw),
        ClassScore::from_match(&uw),
        ClassScore::from_match(&whale),
        ClassScore::from_match(&hs),
    )
}

/// Result of a confidence-threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub threshold: f64,
    pub certain_f1: f64,
    /// `(threshold, certain-whale F1)` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

/// Grid of thresholds `0.00, 0.01, …, 1.00`.
pub fn threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Threshold on the 0.01 grid that maximizes certain-whale F1; ties go to
/// the lowest threshold.
///
/// F1 values are compared exactly as the fractions `2tp / (2tp + fp + fn)`.
pub fn sweep_threshold(dets: &[Detection], gts: &[GtBox], iou_thr: f64) -> Result<SweepResult, EvalError> {
    if !gts.iter().any(|g| g.class == ClassLabel::CertainWhale) {
        return Err(EvalError::NothingToOptimize);
    }
    let mut best: Option<(f64, (u128, u128), f64)> = None;
    let mut grid = Vec::with_capacity(101);
    for thr in threshold_grid() {
        let m = matching::match_groups(dets, gts, iou_thr, thr, |c| (c == ClassLabel::CertainWhale).then_some(()));
        let frac = (2 * m.tp as u128, (2 * m.tp + m.fp + m.fn_) as u128);
        let f1 = ClassScore::from_match(&m).f1;
        grid.push((thr, f1));
        let better = match best {
            None => true,
            Some((_, (n, d), _)) => frac.0 * d > n * frac.1,
        };
        if better {
            best = Some((thr, frac, f1));
        }
    }
    let (threshold, _, certain_f1) = best.expect("grid is non-empty");
    Ok(SweepResult {
        threshold,
        certain_f1,
        grid,
    })
}

/// Mean of every rate over runs; counts are summed.
pub fn aggregate_runs(runs: &[ClassMetrics]) -> Result<ClassMetrics, EvalError> {
    let first = runs.first().ok_or(EvalError::NoRuns)?;
    let n = runs.len() as f64;
    let mut out = *first;
    for (k, col) in out.columns_mut().into_iter().enumerate() {
        let all = runs.iter().map(|r| r.columns()[k]);
        *col = ClassScore {
            tp: all.clone().map(|s| s.tp).sum(),
            fp: all.clone().map(|s| s.fp).sum(),
            fn_: all.clone().map(|s| s.fn_).sum(),
            precision: all.clone().map(|s| s.precision).sum::<f64>() / n,
            recall: all.clone().map(|s| s.recall).sum::<f64>() / n,
            f1: all.map(|s| s.f1).sum::<f64>() / n,
        };
    }
    out.mf1 = runs.iter().map(|r| r.mf1).sum::<f64>() / n;
    out.runs = runs.iter().map(|r| r.runs).sum();
    Ok(out)
}

#[cfg(test)]
mod tests;
