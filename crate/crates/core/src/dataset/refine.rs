use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{DatasetError, PatchLabels};
use crate::annotations::{ClassLabel, LabeledBox};
use crate::geometry::iou;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Deleted,
    Added,
    Reclassed,
    Moved,
}

/// One difference between an automatic and a refined label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelChange {
    pub patch_id: String,
    pub ann_id: String,
    pub kind: ChangeKind,
    /// Class of the automatic label, or of the refined one for additions.
    pub class: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrection {
    pub class: ClassLabel,
    pub n_auto: usize,
    pub n_corrected: usize,
    /// `n_corrected / n_auto`, 0 when there are no automatic labels.
    pub rate: f64,
    pub moved: usize,
    pub reclassed: usize,
    pub deleted: usize,
    pub added: usize,
}

impl ClassCorrection {
    fn new(class: ClassLabel) -> Self {
        Self {
            class,
            n_auto: 0,
            n_corrected: 0,
            rate: 0.0,
            moved: 0,
            reclassed: 0,
            deleted: 0,
            added: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub move_iou: f64,
    /// One entry per class in id order.
    pub classes: Vec<ClassCorrection>,
    pub moved: usize,
    pub reclassed: usize,
    pub deleted: usize,
    pub added: usize,
    pub corrected: usize,
}

impl CorrectionStats {
    pub fn class(&self, class: ClassLabel) -> &ClassCorrection {
        &self.classes[class.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub labels: PatchLabels,
    pub stats: CorrectionStats,
    pub changes: Vec<LabelChange>,
}

fn index_ids(set: &PatchLabels) -> Result<HashMap<&str, &str>, DatasetError> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (patch_id, boxes) in set {
        for b in boxes {
            if let Some(prev) = owner.insert(&b.ann_id, patch_id) {
                return Err(DatasetError::IdCollision {
                    ann_id: b.ann_id.clone(),
                    first: prev.to_string(),
                    second: patch_id.clone(),
                });
            }
        }
    }
    Ok(owner)
}

/// Overlays refined labels on the automatic ones and counts corrections.
///
/// Patches without refined labels keep their automatic labels. Per ann_id a
/// label is deleted, added, reclassed, moved (same class, IoU below
/// `move_iou`) or unchanged. Corrections are attributed to the automatic
/// class; additions to the refined class.
pub fn merge_refinements(
    auto: &PatchLabels,
    refined: &PatchLabels,
    move_iou: f64,
) -> Result<MergeOutcome, DatasetError> {
    if !(move_iou > 0.0 && move_iou <= 1.0) {
        return Err(DatasetError::InvalidThreshold(move_iou));
    }
    index_ids(auto)?;
    let refined_owner = index_ids(refined)?;
    if let Some(p) = refined.keys().find(|p| !auto.contains_key(*p)) {
        return Err(DatasetError::UnknownPatch(p.clone()));
    }
    // An id moving between patches is a collision as well.
    for (patch_id, boxes) in auto {
        for b in boxes {
            if let Some(&other) = refined_owner.get(b.ann_id.as_str()) {
                if other != patch_id {
                    return Err(DatasetError::IdCollision {
                        ann_id: b.ann_id.clone(),
                        first: patch_id.clone(),
                        second: other.to_string(),
                    });
                }
            }
        }
    }

    let mut classes: Vec<ClassCorrection> = ClassLabel::ALL.iter().map(|&c| ClassCorrection::new(c)).collect();
    let mut changes = Vec::new();
    let mut labels = PatchLabels::new();
    for (patch_id, auto_boxes) in auto {
        for b in auto_boxes {
            classes[b.class.index()].n_auto += 1;
        }
        let Some(refined_boxes) = refined.get(patch_id) else {
            labels.insert(patch_id.clone(), auto_boxes.clone());
            continue;
        };
        let by_id: BTreeMap<&str, &LabeledBox> = refined_boxes.iter().map(|b| (b.ann_id.as_str(), b)).collect();
        let auto_ids: BTreeMap<&str, &LabeledBox> = auto_boxes.iter().map(|b| (b.ann_id.as_str(), b)).collect();
        for (id, a) in &auto_ids {
            let kind = match by_id.get(id) {
                None => Some(ChangeKind::Deleted),
                Some(r) if r.class != a.class => Some(ChangeKind::Reclassed),
                Some(r) if iou(&a.bbox, &r.bbox).unwrap_or(0.0) < move_iou => Some(ChangeKind::Moved),
                Some(_) => None,
            };
            if let Some(kind) = kind {
                changes.push(LabelChange {
                    patch_id: patch_id.clone(),
                    ann_id: id.to_string(),
                    kind,
                    class: a.class,
                });
            }
        }
        for (id, r) in &by_id {
            if !auto_ids.contains_key(id) {
                changes.push(LabelChange {
                    patch_id: patch_id.clone(),
                    ann_id: id.to_string(),
                    kind: ChangeKind::Added,
                    class: r.class,
                });
            }
        }
        labels.insert(patch_id.clone(), refined_boxes.clone());
    }

    for ch in &changes {
        let c = &mut classes[ch.class.index()];
        match ch.kind {
            ChangeKind::Deleted => c.deleted += 1,
            ChangeKind::Added => c.added += 1,
            ChangeKind::Reclassed => c.reclassed += 1,
            ChangeKind::Moved => c.moved += 1,
        }
    }
    for c in &mut classes {
        c.n_corrected = c.deleted + c.reclassed + c.moved;
        c.rate = if c.n_auto == 0 {
            0.0
        } else {
            c.n_corrected as f64 / c.n_auto as f64
        };
    }
    let sum = |f: fn(&ClassCorrection) -> usize| classes.iter().map(f).sum::<usize>();
    let stats = CorrectionStats {
        move_iou,
        moved: sum(|c| c.moved),
        reclassed: sum(|c| c.reclassed),
        deleted: sum(|c| c.deleted),
        added: sum(|c| c.added),
        corrected: sum(|c| c.n_corrected),
        classes,
    };
    Ok(MergeOutcome { labels, stats, changes })
}
