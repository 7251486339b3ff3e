use super::{BitDepth, RasterError, SceneImage};

/// Percentile bounds for the linear stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchParams {
    pub p_low: f64,
    pub p_high: f64,
}

impl Default for StretchParams {
    fn default() -> Self {
        Self {
            p_low: 1.0,
            p_high: 99.0,
        }
    }
}

impl StretchParams {
    pub fn new(p_low: f64, p_high: f64) -> Result<Self, RasterError> {
        let ok = (0.0..=100.0).contains(&p_low) && (0.0..=100.0).contains(&p_high) && p_low < p_high;
        if ok {
            Ok(Self { p_low, p_high })
        } else {
            Err(RasterError::InvalidStretch(p_low, p_high))
        }
    }
}

/// Linearly interpolated percentile of 16-bit samples (the numpy "linear"
/// definition: rank `p/100 · (n−1)` between order statistics).
///
/// Uses a 65536-bin histogram so large scenes avoid a full sort.
pub fn percentile(samples: &[u16], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut hist = vec![0u64; 1 << 16];
    for &v in samples {
        hist[v as usize] += 1;
    }
    Some(percentile_from_hist(&hist, samples.len() as u64, p))
}

fn percentile_from_hist(hist: &[u64], n: u64, p: f64) -> f64 {
    let pos = p / 100.0 * (n - 1) as f64;
    let lo_rank = pos.floor() as u64;
    let frac = pos - lo_rank as f64;
    let lo = order_statistic(hist, lo_rank);
    if frac == 0.0 || lo_rank + 1 >= n {
        return lo as f64;
    }
    let hi = order_statistic(hist, lo_rank + 1);
    lo as f64 + (hi as f64 - lo as f64) * frac
}

/// Value at zero-based sorted position `rank`.
fn order_statistic(hist: &[u64], rank: u64) -> u16 {
    let mut seen = 0u64;
    for (value, &count) in hist.iter().enumerate() {
        seen += count;
        if seen > rank {
            return value as u16;
        }
    }
    unreachable!("rank beyond sample count")
}

/// Percentile linear stretch of a 16-bit scene to 8 bits.
///
/// Each sample maps to `clamp(round(255·(v−lo)/(hi−lo)), 0, 255)`. A flat scene
/// (`hi == lo`) maps to all zeros.
pub fn convert_depth(scene: &SceneImage, params: StretchParams) -> Result<SceneImage, RasterError> {
    if scene.samples().is_empty() {
        return Err(RasterError::Empty);
    }
    if scene.bit_depth() == BitDepth::Eight {
        return Err(RasterError::Already8Bit);
    }
    let params = StretchParams::new(params.p_low, params.p_high)?;

    let mut hist = vec![0u64; 1 << 16];
    for &v in scene.samples() {
        hist[v as usize] += 1;
    }
    let n = scene.samples().len() as u64;
    let lo = percentile_from_hist(&hist, n, params.p_low);
    let hi = percentile_from_hist(&hist, n, params.p_high);

    // One lookup entry per possible input value keeps the per-pixel work to an index.
    let lut: Vec<u16> = (0..=u16::MAX)
        .map(|v| {
            if hi <= lo {
                0
            } else {
                (255.0 * (v as f64 - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u16
            }
        })
        .collect();
    let out = scene.samples().iter().map(|&v| lut[v as usize]).collect();
    SceneImage::new(
        scene.scene_id(),
        scene.width(),
        scene.height(),
        BitDepth::Eight,
        scene.gsd(),
        out,
    )
}
