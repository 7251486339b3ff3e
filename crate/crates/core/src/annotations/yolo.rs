//! YOLO text labels (`class cx cy w h`, normalized) plus the `.ids` sidecar
//! that keeps annotation identity across refinement.

use std::fs;
use std::path::Path;

use super::{AnnotationError, ClassLabel, LabeledBox};
use crate::geometry::BBox;

/// A serialized label file and its parallel id sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct YoloLabels {
    pub text: String,
    pub ids: String,
}

/// Serializes boxes sorted by `ann_id`, six decimals per value.
pub fn write_yolo_labels(boxes: &[LabeledBox], patch_size: u32) -> YoloLabels {
    let s = patch_size as f64;
    let mut sorted: Vec<&LabeledBox> = boxes.iter().collect();
    sorted.sort_by(|a, b| a.ann_id.cmp(&b.ann_id));

    let mut out = YoloLabels::default();
    for b in sorted {
        let (cx, cy) = b.bbox.center();
        out.text.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            b.class.id(),
            cx / s,
            cy / s,
            b.bbox.width() / s,
            b.bbox.height() / s
        ));
        out.ids.push_str(&b.ann_id);
        out.ids.push('\n');
    }
    out
}

/// Parses a label file. Without a sidecar the ann_ids are the line indices.
pub fn parse_yolo_labels(
    text: &str,
    patch_size: u32,
    ids: Option<&str>,
) -> Result<Vec<LabeledBox>, AnnotationError> {
    let s = patch_size as f64;
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: &str| AnnotationError::Line {
            line: idx + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(fail("expected 5 fields"));
        }
        let class_id: u8 = fields[0].parse().map_err(|_| fail("unknown class"))?;
        let class = ClassLabel::from_id(class_id).ok_or_else(|| fail("unknown class"))?;
        let mut vals = [0f64; 4];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f.parse().map_err(|_| fail("malformed number"))?;
            if !(0.0..=1.0).contains(v) {
                return Err(fail("value out of [0,1]"));
            }
        }
        let [cx, cy, w, h] = vals;
        if w <= 0.0 || h <= 0.0 {
            return Err(fail("degenerate box"));
        }
        let bbox = BBox::new((cx - w / 2.0) * s, (cy - h / 2.0) * s, (cx + w / 2.0) * s, (cy + h / 2.0) * s)
            .clip(s, s);
        boxes.push(LabeledBox {
            ann_id: boxes.len().to_string(),
            class,
            bbox,
        });
    }

    if let Some(ids) = ids {
        let ids: Vec<&str> = ids.lines().filter(|l| !l.trim().is_empty()).collect();
        if ids.len() != boxes.len() {
            return Err(AnnotationError::SidecarMismatch {
                ids: ids.len(),
                lines: boxes.len(),
            });
        }
        for (b, id) in boxes.iter_mut().zip(ids) {
            b.ann_id = id.trim().to_string();
        }
    }
    Ok(boxes)
}

/// Writes `<dir>/<stem>.txt` and `<dir>/<stem>.ids`.
pub fn write_label_file(
    dir: &Path,
    stem: &str,
    boxes: &[LabeledBox],
    patch_size: u32,
) -> Result<(), AnnotationError> {
    let labels = write_yolo_labels(boxes, patch_size);
    fs::write(dir.join(format!("{stem}.txt")), labels.text)?;
    fs::write(dir.join(format!("{stem}.ids")), labels.ids)?;
    Ok(())
}

/// Reads `<dir>/<stem>.txt`, using `<dir>/<stem>.ids` when it exists.
pub fn read_label_file(dir: &Path, stem: &str, patch_size: u32) -> Result<Vec<LabeledBox>, AnnotationError> {
    let text = fs::read_to_string(dir.join(format!("{stem}.txt")))?;
    let ids_path = dir.join(format!("{stem}.ids"));
    let ids = if ids_path.exists() {
        Some(fs::read_to_string(ids_path)?)
    } else {
        None
    };
    parse_yolo_labels(&text, patch_size, ids.as_deref())
}
