use super::{BitDepth, Patch, RasterError, SceneImage};
use crate::annotations::PointAnnotation;

/// Patch origins along one axis: a stride-`size` grid from 0, plus a final
/// origin at `len − size` when `len` is not a multiple of `size`.
pub fn tile_offsets(len: u32, size: u32) -> Vec<u32> {
    if size == 0 || size > len {
        return Vec::new();
    }
    let mut offsets: Vec<u32> = (0..len / size).map(|i| i * size).collect();
    if !len.is_multiple_of(size) {
        offsets.push(len - size);
    }
    offsets
}

/// Cuts an 8-bit scene into square patches in row-major order.
///
/// Edge patches are shifted inward rather than padded, so they may overlap
/// their interior neighbours.
pub fn tile_scene(scene: &SceneImage, patch_size: u32) -> Result<Vec<Patch>, RasterError> {
    if scene.bit_depth() != BitDepth::Eight {
        return Err(RasterError::Not8Bit);
    }
    let dim = scene.width().min(scene.height());
    if patch_size == 0 || patch_size > dim {
        return Err(RasterError::PatchTooLarge {
            size: patch_size,
            dim,
        });
    }
    let xs = tile_offsets(scene.width(), patch_size);
    let ys = tile_offsets(scene.height(), patch_size);
    let width = scene.width() as usize;
    let size = patch_size as usize;

    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let mut pixels = Vec::with_capacity(size * size);
            for row in y as usize..y as usize + size {
                let start = row * width + x as usize;
                pixels.extend(scene.samples()[start..start + size].iter().map(|&v| v as u8));
            }
            patches.push(Patch {
                patch_id: Patch::id_for(scene.scene_id(), x, y),
                scene_id: scene.scene_id().to_string(),
                x,
                y,
                size: patch_size,
                pixels,
            });
        }
    }
    Ok(patches)
}

/// Keeps the patches containing at least one point of their scene.
pub fn filter_patches(patches: Vec<Patch>, points: &[PointAnnotation]) -> Vec<Patch> {
    patches
        .into_iter()
        .filter(|patch| {
            points
                .iter()
                .any(|p| p.scene_id == patch.scene_id && patch.contains(p.x, p.y))
        })
        .collect()
}
