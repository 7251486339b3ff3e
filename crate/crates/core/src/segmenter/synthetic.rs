//! Synthetic scenes of bright ellipses on dark water, and a backend that
//! segments them by connected components.
//!
//! The backend returns the whole bright component under the prompt point, so
//! touching objects come back as one merged mask. That is the failure mode the
//! overlap resolution in `boxgen` has to undo.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Bitmask, InstanceMask, SegmentError, SegmentRequest, Segmenter};
use crate::annotations::{ClassLabel, LabeledBox, LocalPoint};
use crate::geometry::BBox;
use crate::raster::Patch;

const BACKGROUND: (u8, u8) = (10, 70);
const FOREGROUND: (u8, u8) = (170, 240);
const DEFAULT_THRESHOLD: u8 = 128;
const MAX_ATTEMPTS: usize = 2000;
/// Minimum Chebyshev gap, in pixels, between objects that are not meant to touch.
const ISOLATION_GAP: i64 = 2;
/// Center distance of a touching pair as a fraction of the summed radii.
const TOUCH_OVERLAP: f64 = 0.85;

/// Thresholds the patch and flood-fills (8-connected) from the prompt pixel.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticBackend {
    pub threshold: u8,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl Segmenter for SyntheticBackend {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<InstanceMask, SegmentError> {
        req.validate()?;
        let size = req.patch.size;
        let px = (req.point.0.floor() as i64).clamp(0, size as i64 - 1) as u32;
        let py = (req.point.1.floor() as i64).clamp(0, size as i64 - 1) as u32;
        let bright = |x: u32, y: u32| req.patch.get(x, y) > self.threshold;

        let mut mask = Bitmask::new(size, size);
        mask.set(px, py, true);
        if !bright(px, py) {
            return Ok(InstanceMask {
                ann_id: req.ann_id.to_string(),
                mask,
                score: 0.0,
            });
        }
        let mut queue = VecDeque::from([(px, py)]);
        while let Some((x, y)) = queue.pop_front() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    if !mask.get(nx, ny) && bright(nx, ny) {
                        mask.set(nx, ny, true);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        Ok(InstanceMask {
            ann_id: req.ann_id.to_string(),
            mask,
            score: 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_objects: usize,
    pub size: u32,
    /// Relative weights of certain whale, uncertain whale, harp seal.
    pub class_mix: [f64; 3],
    pub touch_probability: f64,
    pub patch_id: String,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 4,
            size: 320,
            class_mix: [0.4, 0.3, 0.3],
            touch_probability: 0.0,
            patch_id: "synth".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("synthetic patch size must be at least 32, got {0}")]
    TooSmall(u32),
    #[error("invalid synthetic parameters: {0}")]
    Invalid(String),
    #[error("could not place object {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
}

/// Generated patch with its point annotations and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub patch: Patch,
    pub points: Vec<LocalPoint>,
    pub boxes: Vec<LabeledBox>,
    pub masks: Vec<InstanceMask>,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    /// Distance from the center to the boundary along direction `phi`.
    fn radius_along(&self, phi: f64) -> f64 {
        let t = phi - self.theta;
        1.0 / ((t.cos() / self.a).powi(2) + (t.sin() / self.b).powi(2)).sqrt()
    }

    fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (
            ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt(),
            ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt(),
        )
    }

    /// Pixels whose centers fall inside the ellipse; `None` if any would fall
    /// outside the patch.
    fn rasterize(&self, size: u32) -> Option<Bitmask> {
        let (ex, ey) = self.half_extents();
        let x0 = (self.cx - ex - 1.0).floor() as i64;
        let x1 = (self.cx + ex + 1.0).ceil() as i64;
        let y0 = (self.cy - ey - 1.0).floor() as i64;
        let y1 = (self.cy + ey + 1.0).ceil() as i64;
        let mut mask = Bitmask::new(size, size);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    if x < 0 || y < 0 || x >= size as i64 || y >= size as i64 {
                        return None;
                    }
                    mask.set(x as u32, y as u32, true);
                }
            }
        }
        Some(mask)
    }
}

fn axes_for(class: ClassLabel, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match class {
        ClassLabel::CertainWhale | ClassLabel::UncertainWhale => {
            (rng.gen_range(5.0..9.0), rng.gen_range(2.5..4.0))
        }
        ClassLabel::HarpSeal => (rng.gen_range(3.0..4.5), rng.gen_range(2.0..3.0)),
    }
}

fn pick_class(mix: &[f64; 3], rng: &mut ChaCha8Rng) -> ClassLabel {
    let total: f64 = mix.iter().sum();
    let mut r = rng.gen_range(0.0..total);
    for (i, w) in mix.iter().enumerate() {
        if r < *w {
            return ClassLabel::ALL[i];
        }
        r -= w;
    }
    ClassLabel::HarpSeal
}

/// Indices of existing objects with a pixel within `gap` (Chebyshev) of `mask`.
fn neighbours(mask: &Bitmask, owner: &[Option<usize>], size: u32, gap: i64) -> Vec<usize> {
    let mut found = Vec::new();
    for i in mask.iter_ones() {
        let (x, y) = ((i % size as usize) as i64, (i / size as usize) as i64);
        for ny in (y - gap).max(0)..=(y + gap).min(size as i64 - 1) {
            for nx in (x - gap).max(0)..=(x + gap).min(size as i64 - 1) {
                if let Some(o) = owner[ny as usize * size as usize + nx as usize] {
                    if !found.contains(&o) {
                        found.push(o);
                    }
                }
            }
        }
    }
    found
}

fn center_pixel(e: &Ellipse) -> (u32, u32) {
    (e.cx.floor() as u32, e.cy.floor() as u32)
}

/// Generates one synthetic patch. Deterministic per `params`.
///
/// With probability `touch_probability` an object is placed overlapping a
/// previous object that has no partner yet, forming a touching pair.
pub fn generate_synthetic_scene(params: &SynthParams) -> Result<SyntheticScene, SynthError> {
    if params.size < 32 {
        return Err(SynthError::TooSmall(params.size));
    }
    if !(0.0..=1.0).contains(&params.touch_probability) {
        return Err(SynthError::Invalid("touch_probability outside [0,1]".into()));
    }
    if params.class_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || params.class_mix.iter().sum::<f64>() <= 0.0 {
        return Err(SynthError::Invalid("class_mix needs non-negative weights".into()));
    }
    let size = params.size;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut owner: Vec<Option<usize>> = vec![None; size as usize * size as usize];
    let mut ellipses: Vec<Ellipse> = Vec::new();
    let mut rasters: Vec<Bitmask> = Vec::new();
    let mut classes: Vec<ClassLabel> = Vec::new();
    let mut paired: Vec<bool> = Vec::new();

    for index in 0..params.n_objects {
        let class = pick_class(&params.class_mix, &mut rng);
        let (a, b) = axes_for(class, &mut rng);
        let unpaired: Vec<usize> = (0..ellipses.len()).filter(|&i| !paired[i]).collect();
        let touch = !unpaired.is_empty() && rng.gen_bool(params.touch_probability);
        let partner = touch.then(|| unpaired[rng.gen_range(0..unpaired.len())]);

        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let theta = rng.gen_range(0.0..PI);
            let candidate = match partner {
                Some(p) => {
                    let base = ellipses[p];
                    let phi = rng.gen_range(0.0..2.0 * PI);
                    let mut e = Ellipse { cx: 0.0, cy: 0.0, a, b, theta };
                    let d = TOUCH_OVERLAP * (base.radius_along(phi) + e.radius_along(phi));
                    e.cx = base.cx + d * phi.cos();
                    e.cy = base.cy + d * phi.sin();
                    e
                }
                None => {
                    let m = a + ISOLATION_GAP as f64 + 1.0;
                    Ellipse {
                        cx: rng.gen_range(m..size as f64 - m),
                        cy: rng.gen_range(m..size as f64 - m),
                        a,
                        b,
                        theta,
                    }
                }
            };
            let Some(raster) = candidate.rasterize(size) else {
                continue;
            };
            let near = neighbours(&raster, &owner, size, ISOLATION_GAP);
            let ok = match partner {
                None => near.is_empty(),
                Some(p) => {
                    let base = &ellipses[p];
                    let (bx, by) = center_pixel(base);
                    let (nx, ny) = center_pixel(&candidate);
                    near.iter().all(|&o| o == p)
                        && raster.intersects(&rasters[p])
                        && !raster.get(bx, by)
                        && !rasters[p].get(nx, ny)
                }
            };
            if ok {
                placed = Some((candidate, raster));
                break;
            }
        }
        let (ellipse, raster) = placed.ok_or(SynthError::PlacementFailed {
            index,
            attempts: MAX_ATTEMPTS,
        })?;
        for i in raster.iter_ones() {
            owner[i].get_or_insert(index);
        }
        if let Some(p) = partner {
            paired[p] = true;
        }
        paired.push(partner.is_some());
        ellipses.push(ellipse);
        rasters.push(raster);
        classes.push(class);
    }

    let mut pixels = Vec::with_capacity(owner.len());
    for o in &owner {
        let (lo, hi) = if o.is_some() { FOREGROUND } else { BACKGROUND };
        pixels.push(rng.gen_range(lo..=hi));
    }

    let mut points = Vec::new();
    let mut boxes = Vec::new();
    let mut masks = Vec::new();
    for (i, ((e, raster), class)) in ellipses.iter().zip(rasters).zip(classes).enumerate() {
        let ann_id = format!("{}-{:03}", params.patch_id, i);
        points.push(LocalPoint {
            ann_id: ann_id.clone(),
            patch_id: params.patch_id.clone(),
            x: e.cx,
            y: e.cy,
            class,
        });
        boxes.push(LabeledBox {
            ann_id: ann_id.clone(),
            class,
            bbox: tight_bounds(&raster),
        });
        masks.push(InstanceMask {
            ann_id,
            mask: raster,
            score: 1.0,
        });
    }

    Ok(SyntheticScene {
        patch: Patch {
            patch_id: params.patch_id.clone(),
            scene_id: params.patch_id.clone(),
            x: 0,
            y: 0,
            size,
            pixels,
        },
        points,
        boxes,
        masks,
    })
}

fn tight_bounds(mask: &Bitmask) -> BBox {
    let w = mask.width() as usize;
    let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
    for i in mask.iter_ones() {
        let (x, y) = (i % w, i / w);
        x1 = x1.min(x);
        y1 = y1.min(y);
        x2 = x2.max(x + 1);
        y2 = y2.max(y + 1);
    }
    BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)
}
