//! Promptable segmentation backends.
//!
//! A backend turns one point + box prompt on a patch into one instance mask.
//! Three implementations exist: [`FixtureBackend`] replays stored masks,
//! [`SyntheticBackend`] returns the bright connected component under the
//! prompt, and [`ExternalBackend`] talks to a model process over stdin/stdout.

mod external;
mod fixture;
pub mod rle;
mod synthetic;

pub use external::{ExternalBackend, ExternalConfig, TIMEOUT_ENV};
pub use fixture::{FixtureBackend, FixtureRecord};
pub use synthetic::{generate_synthetic_scene, SynthParams, SyntheticBackend, SyntheticScene};

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::geometry::BBox;
use crate::raster::Patch;

/// Row-major bitmask, one bit per pixel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl fmt::Debug for Bitmask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bitmask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl Bitmask {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.get_index(y as usize * self.width as usize + x as usize)
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.set_index(y as usize * self.width as usize + x as usize, value)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set pixels in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn intersects(&self, other: &Bitmask) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }
}

/// Mask for one annotated object over its patch.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub ann_id: String,
    pub mask: Bitmask,
    pub score: f64,
}

impl InstanceMask {
    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }
}

/// One prompt: the annotation point and its buffer box, both in patch pixels.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRequest<'a> {
    pub patch: &'a Patch,
    /// On-disk location of the patch image, when it has one.
    pub patch_path: Option<&'a Path>,
    pub ann_id: &'a str,
    pub point: (f64, f64),
    pub prompt_box: BBox,
}

impl SegmentRequest<'_> {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let s = self.patch.size as f64;
        let b = &self.prompt_box;
        let inside_patch = b.is_valid() && b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= s && b.y2 <= s;
        if !inside_patch {
            return Err(self.error(SegmentErrorKind::InvalidRequest("box outside patch".into())));
        }
        if !b.contains_point(self.point.0, self.point.1) {
            return Err(self.error(SegmentErrorKind::InvalidRequest("point outside box".into())));
        }
        Ok(())
    }

    pub fn error(&self, kind: SegmentErrorKind) -> SegmentError {
        SegmentError {
            patch_id: self.patch.patch_id.clone(),
            ann_id: self.ann_id.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Error)]
#[error("segmentation of {ann_id} in {patch_id} failed: {kind}")]
pub struct SegmentError {
    pub patch_id: String,
    pub ann_id: String,
    pub kind: SegmentErrorKind,
}

#[derive(Debug, Error)]
pub enum SegmentErrorKind {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no fixture mask for this key")]
    UnknownKey,
    #[error("malformed reply: {0}")]
    Protocol(String),
    #[error(transparent)]
    Rle(#[from] rle::RleError),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend process exited")]
    Exited,
    #[error("mask is {got_w}x{got_h}, patch is {want}x{want}")]
    DimensionMismatch { got_w: u32, got_h: u32, want: u32 },
    #[error("io: {0}")]
    Io(String),
}

/// Backend contract. Implementations must be deterministic per request.
pub trait Segmenter: Send + Sync {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<InstanceMask, SegmentError>;
}
