//! Point-supervised box labeling for very-high-resolution satellite surveys.
//!
//! The pipeline runs in stages that mirror the modules below:
//!
//! - [`raster`]: 16→8-bit conversion, tiling scenes into square patches and
//!   keeping only patches that contain annotated objects.
//! - [`annotations`]: expert point CSVs, buffer prompt boxes and the YOLO label
//!   format with its `.ids` sidecar.
//! - [`segmenter`]: the promptable segmentation backend contract plus fixture,
//!   synthetic and external-process backends.
//! - [`boxgen`]: nearest-point overlap resolution and mask→box conversion.
//! - [`dataset`]: seeded splits, on-disk dataset layout and refinement merging.
//! - [`eval`]: IoU matching, P/R/F1, threshold sweeps and confusion matrices.

pub mod annotations;
pub mod boxgen;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod raster;
pub mod segmenter;

pub use annotations::{BufferConfig, ClassLabel, LabeledBox, LocalPoint, PointAnnotation};
pub use geometry::BBox;
pub use segmenter::{Bitmask, InstanceMask, SegmentRequest, Segmenter};
