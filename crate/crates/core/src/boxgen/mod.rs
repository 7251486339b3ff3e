//! Box labels from point prompts.
//!
//! For every point a buffer box and the point itself prompt the segmenter.
//! Pixels claimed by more than one returned mask go to the claimant whose
//! annotation point is nearest to the pixel center, so the final masks are
//! disjoint. Each mask then becomes its tight bounding box.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{buffer_box, AnnotationError, BufferConfig, ClassLabel, LabeledBox, LocalPoint};
use crate::geometry::BBox;
use crate::raster::Patch;
use crate::segmenter::{InstanceMask, SegmentError, SegmentRequest, Segmenter};

#[derive(Debug, Error)]
pub enum BoxgenError {
    #[error("mask {ann_id} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        ann_id: String,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("mask/point mismatch at index {index}: {detail}")]
    IdMismatch { index: usize, detail: String },
    #[error("object lost during resolution: {ann_id}")]
    ObjectLost { ann_id: String },
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Masks after overlap resolution, aligned index-for-index with their points.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMaskSet {
    pub patch_id: String,
    pub masks: Vec<InstanceMask>,
    pub points: Vec<LocalPoint>,
}

impl ResolvedMaskSet {
    /// True when no pixel is set in two masks.
    pub fn is_disjoint(&self) -> bool {
        self.masks
            .iter()
            .enumerate()
            .all(|(i, a)| self.masks[i + 1..].iter().all(|b| !a.mask.intersects(&b.mask)))
    }
}

/// Gives each contested pixel to the nearest claiming annotation point.
///
/// Only masks that contain a pixel compete for it. Distances are measured
/// from the pixel center `(x + 0.5, y + 0.5)`; equal distances go to the
/// lower index. Uncontested pixels are left alone.
pub fn resolve_overlaps(
    patch_id: &str,
    mut masks: Vec<InstanceMask>,
    points: &[LocalPoint],
) -> Result<ResolvedMaskSet, BoxgenError> {
    if masks.len() != points.len() {
        return Err(BoxgenError::IdMismatch {
            index: masks.len().min(points.len()),
            detail: format!("{} masks for {} points", masks.len(), points.len()),
        });
    }
    for (i, (m, p)) in masks.iter().zip(points).enumerate() {
        if m.ann_id != p.ann_id {
            return Err(BoxgenError::IdMismatch {
                index: i,
                detail: format!("mask {} vs point {}", m.ann_id, p.ann_id),
            });
        }
    }
    let Some(first) = masks.first() else {
        return Ok(ResolvedMaskSet {
            patch_id: patch_id.to_string(),
            masks,
            points: points.to_vec(),
        });
    };
    let (width, height) = (first.width(), first.height());
    if let Some(bad) = masks.iter().find(|m| m.width() != width || m.height() != height) {
        return Err(BoxgenError::DimensionMismatch {
            ann_id: bad.ann_id.clone(),
            got_w: bad.width(),
            got_h: bad.height(),
            want_w: width,
            want_h: height,
        });
    }

    let mut claims = vec![0u16; width as usize * height as usize];
    for m in &masks {
        for i in m.mask.iter_ones() {
            claims[i] = claims[i].saturating_add(1);
        }
    }
    let contested: Vec<usize> = (0..claims.len()).filter(|&i| claims[i] > 1).collect();
    let w = width as usize;
    for idx in contested {
        let cx = (idx % w) as f64 + 0.5;
        let cy = (idx / w) as f64 + 0.5;
        let mut winner = None;
        let mut best = f64::INFINITY;
        for (k, (m, p)) in masks.iter().zip(points).enumerate() {
            if !m.mask.get_index(idx) {
                continue;
            }
            let d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
            if d < best {
                best = d;
                winner = Some(k);
            }
        }
        let winner = winner.expect("contested pixel has claimants");
        for (k, m) in masks.iter_mut().enumerate() {
            if k != winner {
                m.mask.set_index(idx, false);
            }
        }
    }

    Ok(ResolvedMaskSet {
        patch_id: patch_id.to_string(),
        masks,
        points: points.to_vec(),
    })
}

/// Tight half-open bounding box of the set pixels.
pub fn mask_to_box(mask: &InstanceMask, class: ClassLabel, ann_id: &str) -> Result<LabeledBox, BoxgenError> {
    let w = mask.width() as usize;
    let mut ones = mask.mask.iter_ones();
    let first = ones.next().ok_or_else(|| BoxgenError::ObjectLost {
        ann_id: ann_id.to_string(),
    })?;
    // iter_ones is row-major, so the first and last hits bound the rows.
    let (mut x1, y1) = (first % w, first / w);
    let (mut x2, mut y2) = (x1 + 1, y1 + 1);
    for i in ones {
        let x = i % w;
        x1 = x1.min(x);
        x2 = x2.max(x + 1);
        y2 = i / w + 1;
    }
    Ok(LabeledBox {
        ann_id: ann_id.to_string(),
        class,
        bbox: BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64),
    })
}

/// Outcome of labeling one patch.
#[derive(Debug, Clone)]
pub struct PatchLabeling {
    /// Sorted by ann_id.
    pub boxes: Vec<LabeledBox>,
    pub resolved: ResolvedMaskSet,
    /// Objects whose mask emptied during resolution and fell back to the buffer box.
    pub fallbacks: Vec<String>,
}

/// Labels every point of one patch via the segmenter.
///
/// Points are processed in ann_id order. Any backend failure fails the whole
/// patch; no partial result is returned.
pub fn label_patch(
    patch: &Patch,
    patch_path: Option<&Path>,
    points: &[LocalPoint],
    backend: &dyn Segmenter,
    cfg: &BufferConfig,
    gsd: f64,
) -> Result<PatchLabeling, BoxgenError> {
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.ann_id.cmp(&b.ann_id));

    let mut prompts = Vec::with_capacity(points.len());
    let mut masks = Vec::with_capacity(points.len());
    for p in &points {
        let prompt = buffer_box(p, cfg, gsd, patch.size)?;
        let req = SegmentRequest {
            patch,
            patch_path,
            ann_id: &p.ann_id,
            point: (p.x, p.y),
            prompt_box: prompt.bbox,
        };
        let mut mask = backend.segment(&req)?;
        if mask.width() != patch.size || mask.height() != patch.size {
            return Err(BoxgenError::DimensionMismatch {
                ann_id: p.ann_id.clone(),
                got_w: mask.width(),
                got_h: mask.height(),
                want_w: patch.size,
                want_h: patch.size,
            });
        }
        mask.ann_id = p.ann_id.clone();
        masks.push(mask);
        prompts.push(prompt);
    }

    let resolved = resolve_overlaps(&patch.patch_id, masks, &points)?;
    let mut boxes = Vec::with_capacity(points.len());
    let mut fallbacks = Vec::new();
    for ((mask, p), prompt) in resolved.masks.iter().zip(&points).zip(prompts) {
        match mask_to_box(mask, p.class, &p.ann_id) {
            Ok(b) => boxes.push(b),
            Err(BoxgenError::ObjectLost { ann_id }) => {
                log::warn!("{}: mask of {ann_id} emptied during resolution, using buffer box", patch.patch_id);
                fallbacks.push(ann_id);
                boxes.push(prompt);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PatchLabeling {
        boxes,
        resolved,
        fallbacks,
    })
}

/// Fixed-buffer labels with no segmentation, sorted by ann_id.
pub fn buffer_labels_baseline(
    points: &[LocalPoint],
    cfg: &BufferConfig,
    gsd: f64,
    patch_size: u32,
) -> Result<Vec<LabeledBox>, BoxgenError> {
    let mut boxes = points
        .iter()
        .map(|p| buffer_box(p, cfg, gsd, patch_size))
        .collect::<Result<Vec<_>, _>>()?;
    boxes.sort_by(|a, b| a.ann_id.cmp(&b.ann_id));
    Ok(boxes)
}

/// Summary written next to the label files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub method: String,
    pub patches: usize,
    pub boxes: usize,
    pub certain_whale: usize,
    pub uncertain_whale: usize,
    pub harp_seal: usize,
    pub fallbacks: usize,
    pub fallback_ids: Vec<String>,
}

impl LabelReport {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            ..Default::default()
        }
    }

    pub fn add_patch(&mut self, boxes: &[LabeledBox], fallbacks: &[String]) {
        self.patches += 1;
        self.boxes += boxes.len();
        for b in boxes {
            match b.class {
                ClassLabel::CertainWhale => self.certain_whale += 1,
                ClassLabel::UncertainWhale => self.uncertain_whale += 1,
                ClassLabel::HarpSeal => self.harp_seal += 1,
            }
        }
        self.fallbacks += fallbacks.len();
        self.fallback_ids.extend(fallbacks.iter().cloned());
    }
}
