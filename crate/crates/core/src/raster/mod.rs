//! Scene rasters, bit-depth conversion and patch tiling.

mod io;
mod stretch;
mod tile;

pub use io::{
    load_scene, read_manifest, read_patch_png, read_scene_meta, write_manifest, write_patch_png,
    ManifestRecord, SceneMeta,
};
pub use stretch::{convert_depth, percentile, StretchParams};
pub use tile::{filter_patches, tile_offsets, tile_scene};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("empty image")]
    Empty,
    #[error("already 8-bit")]
    Already8Bit,
    #[error("scene must be 8-bit before tiling")]
    Not8Bit,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid stretch percentiles ({0}, {1})")]
    InvalidStretch(f64, f64),
    #[error("patch size {size} exceeds scene dimension {dim}")]
    PatchTooLarge { size: u32, dim: u32 },
    #[error("ground sample distance must be positive, got {0}")]
    InvalidGsd(f64),
    #[error("negative or non-finite length {0} m")]
    InvalidLength(f64),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }
}

/// A single-band scene. Samples are stored widened to `u16` for both depths.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    scene_id: String,
    width: u32,
    height: u32,
    bit_depth: BitDepth,
    gsd: f64,
    samples: Vec<u16>,
}

impl SceneImage {
    pub fn new(
        scene_id: impl Into<String>,
        width: u32,
        height: u32,
        bit_depth: BitDepth,
        gsd: f64,
        samples: Vec<u16>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty);
        }
        if !(gsd.is_finite() && gsd > 0.0) {
            return Err(RasterError::InvalidGsd(gsd));
        }
        if samples.len() != width as usize * height as usize {
            return Err(RasterError::InvalidScene(format!(
                "{} samples for a {width}x{height} scene",
                samples.len()
            )));
        }
        let max = bit_depth.max_value();
        if samples.iter().any(|&v| v > max) {
            return Err(RasterError::InvalidScene(format!(
                "sample exceeds {max} for declared bit depth"
            )));
        }
        Ok(Self {
            scene_id: scene_id.into(),
            width,
            height,
            bit_depth,
            gsd,
            samples,
        })
    }

    pub fn from_u8(
        scene_id: impl Into<String>,
        width: u32,
        height: u32,
        gsd: f64,
        samples: &[u8],
    ) -> Result<Self, RasterError> {
        let wide = samples.iter().map(|&v| v as u16).collect();
        Self::new(scene_id, width, height, BitDepth::Eight, gsd, wide)
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }
    pub fn gsd(&self) -> f64 {
        self.gsd
    }
    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.samples[y as usize * self.width as usize + x as usize]
    }
}

/// Square 8-bit crop of a scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub patch_id: String,
    pub scene_id: String,
    pub x: u32,
    pub y: u32,
    pub size: u32,
    pub pixels: Vec<u8>,
}

impl Patch {
    pub fn id_for(scene_id: &str, x: u32, y: u32) -> String {
        format!("{scene_id}_{x}_{y}")
    }

    /// Half-open containment test in scene coordinates.
    pub fn contains(&self, sx: f64, sy: f64) -> bool {
        let (x0, y0, s) = (self.x as f64, self.y as f64, self.size as f64);
        sx >= x0 && sx < x0 + s && sy >= y0 && sy < y0 + s
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.size as usize + x as usize]
    }
}

/// Converts a ground length to whole pixels, never less than one.
pub fn px_from_meters(meters: f64, gsd: f64) -> Result<u32, RasterError> {
    if !(gsd.is_finite() && gsd > 0.0) {
        return Err(RasterError::InvalidGsd(gsd));
    }
    if !(meters.is_finite() && meters >= 0.0) {
        return Err(RasterError::InvalidLength(meters));
    }
    // f64::round rounds half away from zero.
    Ok(((meters / gsd).round() as u32).max(1))
}

/// Patch edge for the two survey platforms: 320 px at 0.3 m, 192 px at 0.46 m.
/// Both cover roughly 90–96 m of ground. Other resolutions need an explicit size.
pub fn default_patch_size(gsd: f64) -> Option<u32> {
    const PLATFORMS: [(f64, u32); 2] = [(0.3, 320), (0.46, 192)];
    PLATFORMS
        .iter()
        .find(|(g, _)| (g - gsd).abs() < 1e-6)
        .map(|&(_, size)| size)
}

/// GDAL-ordered affine transform: `geo_x = t0 + px*t1 + py*t2`, `geo_y = t3 + px*t4 + py*t5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform(pub [f64; 6]);

impl GeoTransform {
    pub fn pixel_to_geo(&self, px: f64, py: f64) -> (f64, f64) {
        let t = &self.0;
        (t[0] + px * t[1] + py * t[2], t[3] + px * t[4] + py * t[5])
    }

    /// Inverse mapping; `None` when the linear part is singular.
    pub fn geo_to_pixel(&self, gx: f64, gy: f64) -> Option<(f64, f64)> {
        let t = &self.0;
        let det = t[1] * t[5] - t[2] * t[4];
        if det.abs() < f64::EPSILON {
            return None;
        }
        let dx = gx - t[0];
        let dy = gy - t[3];
        Some(((dx * t[5] - dy * t[2]) / det, (dy * t[1] - dx * t[4]) / det))
    }
}
