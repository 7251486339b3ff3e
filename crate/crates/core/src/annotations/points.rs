use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{AnnotationError, ClassLabel, LocalPoint, PointAnnotation};
use crate::raster::Patch;

const POINT_HEADER: [&str; 5] = ["ann_id", "scene_id", "x", "y", "class"];

#[derive(Deserialize)]
struct PointRow {
    ann_id: String,
    scene_id: String,
    x: f64,
    y: f64,
    class: String,
}

/// Parses the expert point CSV (`ann_id,scene_id,x,y,class`).
///
/// `extent` returns the `(width, height)` of a scene when known; coordinates
/// are then checked against it. Errors carry the 1-based file line.
pub fn parse_points<F>(text: &str, extent: F) -> Result<Vec<PointAnnotation>, AnnotationError>
where
    F: Fn(&str) -> Option<(u32, u32)>,
{
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| AnnotationError::Line {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != POINT_HEADER {
        return Err(AnnotationError::Line {
            line: 1,
            message: format!("expected header {}", POINT_HEADER.join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AnnotationError::Line {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: PointRow = record
            .deserialize(Some(&header))
            .map_err(|e| AnnotationError::Line {
                line,
                message: e.to_string(),
            })?;
        let fail = |message: String| AnnotationError::Line { line, message };
        let class: ClassLabel = row.class.parse().map_err(fail)?;
        if !(row.x.is_finite() && row.y.is_finite() && row.x >= 0.0 && row.y >= 0.0) {
            return Err(fail(format!("coordinate ({}, {}) out of range", row.x, row.y)));
        }
        if let Some((w, h)) = extent(&row.scene_id) {
            if row.x >= w as f64 || row.y >= h as f64 {
                return Err(fail(format!(
                    "coordinate ({}, {}) outside {w}x{h} scene {}",
                    row.x, row.y, row.scene_id
                )));
            }
        }
        if !seen.insert(row.ann_id.clone()) {
            return Err(fail(format!("duplicate ann_id {:?}", row.ann_id)));
        }
        points.push(PointAnnotation {
            ann_id: row.ann_id,
            scene_id: row.scene_id,
            x: row.x,
            y: row.y,
            class,
        });
    }
    Ok(points)
}

/// Assigns each point to the first patch (in the given row-major order) that
/// contains it and translates it into that patch's coordinates.
pub fn localize_points(
    points: &[PointAnnotation],
    patches: &[Patch],
) -> Result<BTreeMap<String, Vec<LocalPoint>>, AnnotationError> {
    let mut out: BTreeMap<String, Vec<LocalPoint>> = BTreeMap::new();
    for p in points {
        let owner = patches
            .iter()
            .find(|patch| patch.scene_id == p.scene_id && patch.contains(p.x, p.y))
            .ok_or_else(|| AnnotationError::Unowned {
                ann_id: p.ann_id.clone(),
            })?;
        out.entry(owner.patch_id.clone()).or_default().push(LocalPoint {
            ann_id: p.ann_id.clone(),
            patch_id: owner.patch_id.clone(),
            x: p.x - owner.x as f64,
            y: p.y - owner.y as f64,
            class: p.class,
        });
    }
    Ok(out)
}

pub fn write_local_points(path: &Path, points: &[LocalPoint]) -> Result<(), AnnotationError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    for p in points {
        w.serialize(p).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_local_points(path: &Path) -> Result<Vec<LocalPoint>, AnnotationError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| AnnotationError::Line {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_io(e: csv::Error) -> AnnotationError {
    AnnotationError::Io(std::io::Error::other(e))
}
