//! Expert point annotations, buffer prompt boxes and YOLO label files.

mod points;
mod yolo;

pub use points::{localize_points, parse_points, read_local_points, write_local_points};
pub use yolo::{
    parse_yolo_labels, read_label_file, write_label_file, write_yolo_labels, YoloLabels,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::raster::{px_from_meters, RasterError};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("annotation outside usable area: {ann_id}")]
    OutsideUsableArea { ann_id: String },
    #[error("point {ann_id} is not contained by any patch")]
    Unowned { ann_id: String },
    #[error("invalid buffer config: {0}")]
    InvalidBuffer(String),
    #[error("sidecar has {ids} ids for {lines} label lines")]
    SidecarMismatch { ids: usize, lines: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three survey classes. Integer ids are stable across all files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    CertainWhale,
    UncertainWhale,
    HarpSeal,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::CertainWhale,
        ClassLabel::UncertainWhale,
        ClassLabel::HarpSeal,
    ];

    pub fn id(self) -> u8 {
        match self {
            ClassLabel::CertainWhale => 0,
            ClassLabel::UncertainWhale => 1,
            ClassLabel::HarpSeal => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::CertainWhale => "certain_whale",
            ClassLabel::UncertainWhale => "uncertain_whale",
            ClassLabel::HarpSeal => "harp_seal",
        }
    }

    pub fn index(self) -> usize {
        self.id() as usize
    }

    pub fn is_whale(self) -> bool {
        !matches!(self, ClassLabel::HarpSeal)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class {s:?}"))
    }
}

/// Expert point in scene pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub ann_id: String,
    pub scene_id: String,
    pub x: f64,
    pub y: f64,
    pub class: ClassLabel,
}

/// Point translated into the coordinates of its owning patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub ann_id: String,
    pub patch_id: String,
    pub x: f64,
    pub y: f64,
    pub class: ClassLabel,
}

/// How the configured buffer length is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BufferMode {
    /// Distance from the point to each box edge.
    #[default]
    HalfExtent,
    /// Full box side; the half-extent is half of it.
    FullSide,
}

/// Per-class buffer length in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferConfig {
    pub meters: [f64; 3],
    pub mode: BufferMode,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            meters: [4.0, 4.0, 2.0],
            mode: BufferMode::HalfExtent,
        }
    }
}

impl BufferConfig {
    pub fn new(whale_m: f64, seal_m: f64, mode: BufferMode) -> Result<Self, AnnotationError> {
        let cfg = Self {
            meters: [whale_m, whale_m, seal_m],
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.meters.iter().all(|m| m.is_finite() && *m > 0.0) {
            Ok(())
        } else {
            Err(AnnotationError::InvalidBuffer(format!("{:?}", self.meters)))
        }
    }

    pub fn meters_for(&self, class: ClassLabel) -> f64 {
        self.meters[class.index()]
    }

    /// Half-extent in pixels for `class` at the given resolution.
    pub fn half_extent_px(&self, class: ClassLabel, gsd: f64) -> Result<u32, RasterError> {
        let m = match self.mode {
            BufferMode::HalfExtent => self.meters_for(class),
            BufferMode::FullSide => self.meters_for(class) / 2.0,
        };
        px_from_meters(m, gsd)
    }
}

/// Class-tagged box in patch pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub ann_id: String,
    pub class: ClassLabel,
    pub bbox: BBox,
}

/// Square box of the configured buffer size around a point, clipped to the patch.
pub fn buffer_box(
    point: &LocalPoint,
    cfg: &BufferConfig,
    gsd: f64,
    patch_size: u32,
) -> Result<LabeledBox, AnnotationError> {
    let h = cfg.half_extent_px(point.class, gsd)? as f64;
    let s = patch_size as f64;
    let bbox = BBox::new(point.x - h, point.y - h, point.x + h, point.y + h).clip(s, s);
    if bbox.area() < 1.0 {
        return Err(AnnotationError::OutsideUsableArea {
            ann_id: point.ann_id.clone(),
        });
    }
    Ok(LabeledBox {
        ann_id: point.ann_id.clone(),
        class: point.class,
        bbox,
    })
}
