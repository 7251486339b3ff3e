use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, SplitSpec, Splits};
use crate::annotations::{read_label_file, write_label_file, ClassLabel, LabeledBox};

/// Labels keyed by patch id.
pub type PatchLabels = BTreeMap<String, Vec<LabeledBox>>;

pub const DESCRIPTOR_NAME: &str = "dataset.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub descriptor: PathBuf,
}

fn descriptor_text(spec: &SplitSpec, n: usize) -> String {
    let (a, b, c) = spec.sizes(n);
    let mut out = format!(
        "# split: train floor({}*N), val floor({}*N), test remainder; N={n} -> {a}/{b}/{c}; chacha8 fisher-yates seed {}\n",
        spec.ratios[0], spec.ratios[1], spec.seed
    );
    for class in ClassLabel::ALL {
        out.push_str(&format!("class {} {}\n", class.id(), class.name()));
    }
    for split in ["train", "val", "test"] {
        out.push_str(&format!("{split} images/{split}\n"));
    }
    out
}

/// Lays out `images/{split}/<id>.png` and `labels/{split}/<id>.txt` (plus the
/// `.ids` sidecar when present) under `out_dir` and writes the descriptor.
///
/// Existing split directories are replaced so a re-run yields the same tree.
pub fn emit_dataset(
    splits: &Splits,
    patch_dir: &Path,
    label_dir: &Path,
    out_dir: &Path,
    spec: &SplitSpec,
) -> Result<DatasetSummary, DatasetError> {
    let all = || splits.iter().flat_map(|(_, ids)| ids.iter());
    let missing_labels: Vec<String> = all()
        .filter(|id| !label_dir.join(format!("{id}.txt")).is_file())
        .cloned()
        .collect();
    if !missing_labels.is_empty() {
        return Err(DatasetError::MissingLabels(missing_labels));
    }
    let missing_images: Vec<String> = all()
        .filter(|id| !patch_dir.join(format!("{id}.png")).is_file())
        .cloned()
        .collect();
    if !missing_images.is_empty() {
        return Err(DatasetError::MissingImages(missing_images));
    }

    for (split, ids) in splits.iter() {
        let img_out = out_dir.join("images").join(split);
        let lbl_out = out_dir.join("labels").join(split);
        for dir in [&img_out, &lbl_out] {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
            fs::create_dir_all(dir)?;
        }
        for id in ids {
            fs::copy(patch_dir.join(format!("{id}.png")), img_out.join(format!("{id}.png")))?;
            fs::copy(label_dir.join(format!("{id}.txt")), lbl_out.join(format!("{id}.txt")))?;
            let ids_file = label_dir.join(format!("{id}.ids"));
            if ids_file.is_file() {
                fs::copy(ids_file, lbl_out.join(format!("{id}.ids")))?;
            }
        }
    }
    let descriptor = out_dir.join(DESCRIPTOR_NAME);
    fs::write(&descriptor, descriptor_text(spec, splits.len()))?;
    Ok(DatasetSummary {
        train: splits.train.len(),
        val: splits.val.len(),
        test: splits.test.len(),
        descriptor,
    })
}

/// Reads every `<patch>.txt` in `dir`. `sizes` gives the patch size of each
/// known patch; a label file for an unknown patch is an error.
pub fn read_label_dir(dir: &Path, sizes: &BTreeMap<String, u32>) -> Result<PatchLabels, DatasetError> {
    let mut out = PatchLabels::new();
    let mut stems: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    for stem in stems {
        let size = *sizes.get(&stem).ok_or_else(|| DatasetError::UnknownPatch(stem.clone()))?;
        let boxes = read_label_file(dir, &stem, size).map_err(|source| DatasetError::Labels {
            path: dir.join(format!("{stem}.txt")).display().to_string(),
            source,
        })?;
        out.insert(stem, boxes);
    }
    Ok(out)
}

/// Writes one label file pair per patch.
pub fn write_label_dir(dir: &Path, labels: &PatchLabels, sizes: &BTreeMap<String, u32>) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    for (patch_id, boxes) in labels {
        let size = *sizes.get(patch_id).ok_or_else(|| DatasetError::UnknownPatch(patch_id.clone()))?;
        write_label_file(dir, patch_id, boxes, size).map_err(|source| DatasetError::Labels {
            path: dir.join(format!("{patch_id}.txt")).display().to_string(),
            source,
        })?;
    }
    Ok(())
}
