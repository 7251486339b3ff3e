//! Scene loading, scene sidecars, patch PNGs and the patch manifest.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{BitDepth, GeoTransform, Patch, RasterError, SceneImage};

/// Contents of the `key = value` sidecar that accompanies each scene raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub scene_id: String,
    pub gsd: f64,
    pub geotransform: Option<GeoTransform>,
}

impl SceneMeta {
    pub fn parse(text: &str, origin: &str) -> Result<Self, RasterError> {
        let fail = |message: String| RasterError::Format {
            path: origin.to_string(),
            message,
        };
        let mut scene_id = None;
        let mut gsd = None;
        let mut geotransform = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("line {}: expected key=value", lineno + 1)))?;
            let value = value.trim();
            match key.trim() {
                "scene_id" => scene_id = Some(value.to_string()),
                "gsd" => {
                    gsd = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| fail(format!("line {}: bad gsd {value:?}", lineno + 1)))?,
                    )
                }
                "geotransform" => {
                    let nums: Vec<f64> = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| fail(format!("line {}: bad geotransform", lineno + 1)))?;
                    let arr: [f64; 6] = nums
                        .try_into()
                        .map_err(|_| fail(format!("line {}: geotransform needs 6 numbers", lineno + 1)))?;
                    geotransform = Some(GeoTransform(arr));
                }
                other => return Err(fail(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        let scene_id = scene_id.ok_or_else(|| fail("missing scene_id".into()))?;
        let gsd = gsd.ok_or_else(|| fail("missing gsd".into()))?;
        if !(gsd.is_finite() && gsd > 0.0) {
            return Err(RasterError::InvalidGsd(gsd));
        }
        Ok(Self {
            scene_id,
            gsd,
            geotransform,
        })
    }
}

pub fn read_scene_meta(path: &Path) -> Result<SceneMeta, RasterError> {
    SceneMeta::parse(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Loads a single-band 8- or 16-bit raster (PNG or TIFF).
pub fn load_scene(path: &Path, meta: &SceneMeta) -> Result<SceneImage, RasterError> {
    let img = image::open(path)?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(buf) => SceneImage::new(
            &meta.scene_id,
            w,
            h,
            BitDepth::Eight,
            meta.gsd,
            buf.into_raw().into_iter().map(u16::from).collect(),
        ),
        DynamicImage::ImageLuma16(buf) => {
            SceneImage::new(&meta.scene_id, w, h, BitDepth::Sixteen, meta.gsd, buf.into_raw())
        }
        other => Err(RasterError::Format {
            path: path.display().to_string(),
            message: format!("expected single-band grayscale, got {:?}", other.color()),
        }),
    }
}

/// Writes `<dir>/<patch_id>.png` and returns its path.
pub fn write_patch_png(patch: &Patch, dir: &Path) -> Result<PathBuf, RasterError> {
    let path = dir.join(format!("{}.png", patch.patch_id));
    let img = GrayImage::from_raw(patch.size, patch.size, patch.pixels.clone())
        .expect("patch buffer matches its size");
    img.save_with_format(&path, ImageFormat::Png)?;
    Ok(path)
}

/// Reads a patch image back; the manifest record supplies identity and origin.
pub fn read_patch_png(path: &Path, record: &ManifestRecord) -> Result<Patch, RasterError> {
    let img = image::open(path)?.into_luma8();
    if img.width() != record.size || img.height() != record.size {
        return Err(RasterError::Format {
            path: path.display().to_string(),
            message: format!(
                "image is {}x{}, manifest says {}",
                img.width(),
                img.height(),
                record.size
            ),
        });
    }
    Ok(Patch {
        patch_id: record.patch_id.clone(),
        scene_id: record.scene_id.clone(),
        x: record.x,
        y: record.y,
        size: record.size,
        pixels: img.into_raw(),
    })
}

/// One manifest row per retained patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub patch_id: String,
    pub scene_id: String,
    pub x: u32,
    pub y: u32,
    pub size: u32,
    pub gsd: f64,
}

impl ManifestRecord {
    pub fn for_patch(patch: &Patch, gsd: f64) -> Self {
        Self {
            patch_id: patch.patch_id.clone(),
            scene_id: patch.scene_id.clone(),
            x: patch.x,
            y: patch.y,
            size: patch.size,
            gsd,
        }
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), RasterError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, RasterError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<ManifestRecord>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> RasterError {
    RasterError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
