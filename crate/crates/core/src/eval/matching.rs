use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Detection, GtBox};
use crate::annotations::ClassLabel;
use crate::geometry::{iou, BBox};

/// A detection matched to a ground-truth box, by index into the caller's slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub det: usize,
    pub gt: usize,
    pub iou: f64,
}

/// Matching outcome for one evaluation class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatch {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pairs: Vec<MatchPair>,
}

fn box_key(a: &BBox, b: &BBox) -> Ordering {
    a.x1.total_cmp(&b.x1)
        .then(a.y1.total_cmp(&b.y1))
        .then(a.x2.total_cmp(&b.x2))
        .then(a.y2.total_cmp(&b.y2))
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

/// Greedy matching of one group (one patch, one class or class-agnostic).
///
/// Detections go in descending confidence; ties go to the detection with the
/// larger best IoU against the group, then to a canonical order on the box
/// coordinates. Each detection takes the unmatched ground truth with the
/// highest IoU at or above `iou_thr`; ties go to the canonically first box.
/// Canonical orders make the result independent of input order.
fn greedy_group(dets: &[(usize, &Detection)], gts: &[(usize, &GtBox)], iou_thr: f64) -> Vec<MatchPair> {
    let mut gts: Vec<(usize, &GtBox)> = gts.to_vec();
    gts.sort_by(|a, b| box_key(&a.1.bbox, &b.1.bbox).then(a.1.class.cmp(&b.1.class)).then(a.0.cmp(&b.0)));

    let best_iou = |d: &Detection| gts.iter().map(|(_, g)| overlap(&d.bbox, &g.bbox)).fold(0.0, f64::max);
    let mut order: Vec<(usize, &Detection, f64)> = dets.iter().map(|&(i, d)| (i, d, best_iou(d))).collect();
    order.sort_by(|a, b| {
        b.1.confidence
            .total_cmp(&a.1.confidence)
            .then(b.2.total_cmp(&a.2))
            .then(box_key(&a.1.bbox, &b.1.bbox))
            .then(a.1.class.cmp(&b.1.class))
            .then(a.0.cmp(&b.0))
    });

    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (det_idx, det, _) in order {
        let mut best: Option<(usize, f64)> = None;
        for (k, (_, g)) in gts.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let v = overlap(&det.bbox, &g.bbox);
            if v >= iou_thr && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        if let Some((k, v)) = best {
            taken[k] = true;
            pairs.push(MatchPair {
                det: det_idx,
                gt: gts[k].0,
                iou: v,
            });
        }
    }
    pairs
}

/// Matches detections to ground truth inside groups given by `group`;
/// boxes whose group is `None` are ignored, and boxes in different patches
/// never match.
pub(crate) fn match_groups<K: Ord + Copy>(
    dets: &[Detection],
    gts: &[GtBox],
    iou_thr: f64,
    conf_thr: f64,
    group: impl Fn(ClassLabel) -> Option<K>,
) -> ClassMatch {
    type Bucket<'a> = (Vec<(usize, &'a Detection)>, Vec<(usize, &'a GtBox)>);
    let mut buckets: BTreeMap<(&str, K), Bucket<'_>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        if d.confidence < conf_thr {
            continue;
        }
        if let Some(k) = group(d.class) {
            buckets.entry((d.patch_id.as_str(), k)).or_default().0.push((i, d));
        }
    }
    for (i, g) in gts.iter().enumerate() {
        if let Some(k) = group(g.class) {
            buckets.entry((g.patch_id.as_str(), k)).or_default().1.push((i, g));
        }
    }
    let mut out = ClassMatch::default();
    for (d, g) in buckets.values() {
        let pairs = greedy_group(d, g, iou_thr);
        out.tp += pairs.len();
        out.fp += d.len() - pairs.len();
        out.fn_ += g.len() - pairs.len();
        out.pairs.extend(pairs);
    }
    out.pairs.sort_by_key(|p| p.det);
    out
}

/// Per-class greedy matching, one result per class in id order.
pub fn match_class_aware(dets: &[Detection], gts: &[GtBox], iou_thr: f64, conf_thr: f64) -> [ClassMatch; 3] {
    ClassLabel::ALL.map(|c| match_groups(dets, gts, iou_thr, conf_thr, |x| (x == c).then_some(())))
}

/// Ground truth in rows, predictions in columns; index 3 is background.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub const BACKGROUND: usize = 3;
    pub const LABELS: [&'static str; 4] = ["certain_whale", "uncertain_whale", "harp_seal", "background"];

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt][pred]
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        self.counts[gt].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        self.counts.iter().map(|r| r[pred]).sum()
    }

    /// Plain-text rendering with row and column labels.
    pub fn render(&self) -> String {
        let mut out = format!("{:<16}", "gt \\ pred");
        for l in Self::LABELS {
            out.push_str(&format!("{l:>16}"));
        }
        out.push('\n');
        for (r, l) in Self::LABELS.iter().enumerate() {
            out.push_str(&format!("{l:<16}"));
            for c in 0..4 {
                out.push_str(&format!("{:>16}", self.counts[r][c]));
            }
            out.push('\n');
        }
        out
    }
}

/// Class-agnostic greedy matching tallied by (gt class, predicted class).
pub fn confusion_matrix(dets: &[Detection], gts: &[GtBox], conf_thr: f64, iou_thr: f64) -> ConfusionMatrix {
    let m = match_groups(dets, gts, iou_thr, conf_thr, |_| Some(()));
    let mut cm = ConfusionMatrix::default();
    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    for p in &m.pairs {
        det_used[p.det] = true;
        gt_used[p.gt] = true;
        cm.counts[gts[p.gt].class.index()][dets[p.det].class.index()] += 1;
    }
    for (g, used) in gts.iter().zip(&gt_used) {
        if !used {
            cm.counts[g.class.index()][ConfusionMatrix::BACKGROUND] += 1;
        }
    }
    for (d, used) in dets.iter().zip(&det_used) {
        if !used && d.confidence >= conf_thr {
            cm.counts[ConfusionMatrix::BACKGROUND][d.class.index()] += 1;
        }
    }
    cm
}
