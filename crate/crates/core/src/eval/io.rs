use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Detection, EvalError, GtBox};
use crate::annotations::ClassLabel;
use crate::dataset::{read_label_dir, DatasetError, PatchLabels};
use crate::geometry::BBox;

/// Parses `<class_id> <cx> <cy> <w> <h> <conf>` lines (normalized coordinates).
pub fn parse_predictions(text: &str, patch_id: &str, size: u32, origin: &str) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| EvalError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let class = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(ClassLabel::from_id)
            .ok_or_else(|| err(format!("unknown class {:?}", fields[0])))?;
        let mut v = [0.0f64; 5];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("not a number: {f:?}")))?;
            if !(0.0..=1.0).contains(slot) {
                return Err(err(format!("value out of [0,1]: {f}")));
            }
        }
        let s = size as f64;
        let [cx, cy, w, h, confidence] = v;
        let bbox = BBox::new((cx - w / 2.0) * s, (cy - h / 2.0) * s, (cx + w / 2.0) * s, (cy + h / 2.0) * s).clip(s, s);
        if !bbox.is_valid() {
            return Err(err("degenerate box".into()));
        }
        out.push(Detection {
            patch_id: patch_id.to_string(),
            class,
            bbox,
            confidence,
        });
    }
    Ok(out)
}

/// Writes one prediction file line per detection.
pub fn write_predictions(dir: &Path, patch_id: &str, dets: &[Detection], size: u32) -> std::io::Result<()> {
    let s = size as f64;
    let mut text = String::new();
    for d in dets {
        let (cx, cy) = d.bbox.center();
        let _ = writeln!(
            text,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.class.id(),
            cx / s,
            cy / s,
            d.bbox.width() / s,
            d.bbox.height() / s,
            d.confidence
        );
    }
    fs::write(dir.join(format!("{patch_id}.txt")), text)
}

/// Reads every `<patch>.txt` prediction file in `dir`.
pub fn read_predictions_dir(dir: &Path, sizes: &BTreeMap<String, u32>) -> Result<Vec<Detection>, EvalError> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let size = *sizes.get(&stem).ok_or_else(|| EvalError::UnknownPatch(stem.clone()))?;
        let text = fs::read_to_string(&path)?;
        out.extend(parse_predictions(&text, &stem, size, &path.display().to_string())?);
    }
    Ok(out)
}

pub fn gt_from_labels(labels: &PatchLabels) -> Vec<GtBox> {
    labels
        .iter()
        .flat_map(|(patch_id, boxes)| {
            boxes.iter().map(move |b| GtBox {
                patch_id: patch_id.clone(),
                class: b.class,
                bbox: b.bbox,
            })
        })
        .collect()
}

/// Reads a directory of YOLO label files as ground truth.
pub fn read_gt_dir(dir: &Path, sizes: &BTreeMap<String, u32>) -> Result<Vec<GtBox>, EvalError> {
    let labels = read_label_dir(dir, sizes).map_err(|e| match e {
        DatasetError::Labels { source, .. } => EvalError::Labels(source),
        DatasetError::Io(e) => EvalError::Io(e),
        DatasetError::UnknownPatch(p) => EvalError::UnknownPatch(p),
        other => EvalError::Report(other.to_string()),
    })?;
    Ok(gt_from_labels(&labels))
}
