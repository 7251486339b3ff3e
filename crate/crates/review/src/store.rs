//! File-backed label store.
//!
//! Layout under the data directory:
//!
//! ```text
//! manifest.csv              patch_id,scene_id,x,y,size,gsd
//! patches/<patch>.png       8-bit patch images
//! labels/<patch>.txt|.ids   automatic labels (revision 0, never modified)
//! revisions/<patch>.rev<k>.txt|.ids|.json   .json: author, time, exact pixel boxes
//! ```
//!
//! A revision exists once its `.txt` file does; it is written last via rename.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use seeker_core::annotations::{read_label_file, write_yolo_labels};
use seeker_core::dataset::{merge_refinements, CorrectionStats, PatchLabels, DEFAULT_MOVE_IOU};
use seeker_core::raster::{px_from_meters, read_manifest, ManifestRecord};
use seeker_core::{BBox, ClassLabel, LabeledBox};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown patch {0}")]
    NotFound(String),
    #[error("stale base revision {base}; current revision is {current}")]
    Conflict { base: u64, current: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Internal(e.to_string())
    }
}

/// Box as exchanged with clients: pixel corners `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDto {
    #[serde(default)]
    pub ann_id: String,
    pub class: ClassLabel,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

impl From<&LabeledBox> for BoxDto {
    fn from(b: &LabeledBox) -> Self {
        Self {
            ann_id: b.ann_id.clone(),
            class: b.class,
            bbox: b.bbox.as_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub patch_id: String,
    pub n_boxes: usize,
    pub reviewed: bool,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsDto {
    pub patch_id: String,
    pub revision: u64,
    pub boxes: Vec<BoxDto>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PutLabels {
    pub base_revision: u64,
    pub boxes: Vec<BoxDto>,
    #[serde(default)]
    pub author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionMeta {
    pub patch_id: String,
    pub revision: u64,
    pub base_revision: u64,
    pub author: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Exact pixel boxes; the `.txt` file holds the normalized YOLO form.
    pub boxes: Vec<BoxDto>,
}

/// Grid lines of a metric grid anchored at the scene origin, in patch pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDto {
    pub patch_id: String,
    pub cell_m: f64,
    pub gsd: f64,
    pub spacing_px: u32,
    pub xs: Vec<u32>,
    pub ys: Vec<u32>,
}

pub struct ReviewStore {
    root: PathBuf,
    manifest: BTreeMap<String, ManifestRecord>,
    auto: PatchLabels,
    patch_locks: HashMap<String, Mutex<()>>,
    /// ann_id → owning patch, across automatic labels and all revisions.
    owners: Mutex<HashMap<String, String>>,
    move_iou: f64,
}

impl ReviewStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let manifest_path = root.join("manifest.csv");
        let records = read_manifest(&manifest_path).map_err(|e| StoreError::Internal(e.to_string()))?;
        let manifest: BTreeMap<String, ManifestRecord> = records.into_iter().map(|r| (r.patch_id.clone(), r)).collect();
        fs::create_dir_all(root.join("revisions"))?;

        let mut auto = PatchLabels::new();
        let mut owners = HashMap::new();
        for (id, rec) in &manifest {
            let boxes = if root.join("labels").join(format!("{id}.txt")).is_file() {
                read_label_file(&root.join("labels"), id, rec.size).map_err(|e| StoreError::Internal(format!("{id}: {e}")))?
            } else {
                Vec::new()
            };
            for b in &boxes {
                owners.insert(b.ann_id.clone(), id.clone());
            }
            auto.insert(id.clone(), boxes);
        }
        let store = Self {
            patch_locks: manifest.keys().map(|k| (k.clone(), Mutex::new(()))).collect(),
            root,
            manifest,
            auto,
            owners: Mutex::new(owners),
            move_iou: DEFAULT_MOVE_IOU,
        };
        for id in store.manifest.keys() {
            let (_, boxes) = store.latest(id)?;
            let mut owners = store.owners.lock().unwrap_or_else(|e| e.into_inner());
            for b in boxes {
                owners.entry(b.ann_id).or_insert_with(|| id.clone());
            }
        }
        Ok(store)
    }

    pub fn with_move_iou(mut self, move_iou: f64) -> Self {
        self.move_iou = move_iou;
        self
    }

    fn record(&self, patch_id: &str) -> Result<&ManifestRecord, StoreError> {
        self.manifest.get(patch_id).ok_or_else(|| StoreError::NotFound(patch_id.to_string()))
    }

    fn revisions_dir(&self) -> PathBuf {
        self.root.join("revisions")
    }

    fn latest_revision(&self, patch_id: &str) -> Result<u64, StoreError> {
        let prefix = format!("{patch_id}.rev");
        let mut latest = 0;
        for entry in fs::read_dir(self.revisions_dir())? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(k) = name
                .strip_prefix(&prefix)
                .and_then(|rest| rest.strip_suffix(".txt"))
                .and_then(|k| k.parse::<u64>().ok())
            {
                latest = latest.max(k);
            }
        }
        Ok(latest)
    }

    /// Latest revision number and its boxes; revision 0 is the automatic set.
    fn latest(&self, patch_id: &str) -> Result<(u64, Vec<LabeledBox>), StoreError> {
        let rec = self.record(patch_id)?;
        let rev = self.latest_revision(patch_id)?;
        if rev == 0 {
            return Ok((0, self.auto[patch_id].clone()));
        }
        let stem = format!("{patch_id}.rev{rev}");
        let meta_path = self.revisions_dir().join(format!("{stem}.json"));
        if let Ok(text) = fs::read_to_string(&meta_path) {
            let meta: RevisionMeta = serde_json::from_str(&text)
                .map_err(|e| StoreError::Internal(format!("{}: {e}", meta_path.display())))?;
            let boxes = meta
                .boxes
                .into_iter()
                .map(|d| LabeledBox {
                    ann_id: d.ann_id,
                    class: d.class,
                    bbox: BBox::new(d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]),
                })
                .collect();
            return Ok((rev, boxes));
        }
        let boxes = read_label_file(&self.revisions_dir(), &stem, rec.size)
            .map_err(|e| StoreError::Internal(e.to_string()))?;
        Ok((rev, boxes))
    }

    pub fn list(&self) -> Result<Vec<PatchSummary>, StoreError> {
        self.manifest
            .keys()
            .map(|id| {
                let (revision, boxes) = self.latest(id)?;
                Ok(PatchSummary {
                    patch_id: id.clone(),
                    n_boxes: boxes.len(),
                    reviewed: revision > 0,
                    revision,
                })
            })
            .collect()
    }

    pub fn image_path(&self, patch_id: &str) -> Result<PathBuf, StoreError> {
        self.record(patch_id)?;
        Ok(self.root.join("patches").join(format!("{patch_id}.png")))
    }

    pub fn labels(&self, patch_id: &str) -> Result<LabelsDto, StoreError> {
        let (revision, boxes) = self.latest(patch_id)?;
        Ok(LabelsDto {
            patch_id: patch_id.to_string(),
            revision,
            boxes: boxes.iter().map(BoxDto::from).collect(),
        })
    }

    fn validate(&self, patch_id: &str, size: u32, revision: u64, dtos: &[BoxDto]) -> Result<Vec<LabeledBox>, StoreError> {
        let s = size as f64;
        let mut seen = std::collections::HashSet::new();
        let mut boxes = Vec::with_capacity(dtos.len());
        for (i, d) in dtos.iter().enumerate() {
            let [x1, y1, x2, y2] = d.bbox;
            let bbox = BBox::new(x1, y1, x2, y2);
            let inside = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && (0.0..=s).contains(v));
            if !inside || !bbox.is_valid() {
                return Err(StoreError::Invalid(format!("box {i} {:?} is degenerate or outside the {size} px patch", d.bbox)));
            }
            let ann_id = if d.ann_id.trim().is_empty() {
                format!("{patch_id}-r{revision}-{i}")
            } else {
                d.ann_id.trim().to_string()
            };
            if ann_id.chars().any(|c| c.is_whitespace() || c == ',') {
                return Err(StoreError::Invalid(format!("ann_id {ann_id:?} contains whitespace or commas")));
            }
            if !seen.insert(ann_id.clone()) {
                return Err(StoreError::Invalid(format!("duplicate ann_id {ann_id}")));
            }
            boxes.push(LabeledBox {
                ann_id,
                class: d.class,
                bbox,
            });
        }
        Ok(boxes)
    }

    /// Stores a new revision if `base_revision` is current.
    pub fn put(&self, patch_id: &str, req: PutLabels) -> Result<LabelsDto, StoreError> {
        let size = self.record(patch_id)?.size;
        let _guard = self.patch_locks[patch_id].lock().unwrap_or_else(|e| e.into_inner());
        let current = self.latest_revision(patch_id)?;
        if req.base_revision != current {
            return Err(StoreError::Conflict {
                base: req.base_revision,
                current,
            });
        }
        let revision = current + 1;
        let mut boxes = self.validate(patch_id, size, revision, &req.boxes)?;
        boxes.sort_by(|a, b| a.ann_id.cmp(&b.ann_id));

        {
            let mut owners = self.owners.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((id, other)) = boxes
                .iter()
                .find_map(|b| owners.get(&b.ann_id).filter(|p| *p != patch_id).map(|p| (b.ann_id.clone(), p.clone())))
            {
                return Err(StoreError::Invalid(format!("ann_id {id} belongs to patch {other}")));
            }
            for b in &boxes {
                owners.insert(b.ann_id.clone(), patch_id.to_string());
            }
        }

        let dir = self.revisions_dir();
        let stem = format!("{patch_id}.rev{revision}");
        let labels = write_yolo_labels(&boxes, size);
        let meta = RevisionMeta {
            patch_id: patch_id.to_string(),
            revision,
            base_revision: req.base_revision,
            author: req.author.unwrap_or_else(|| "anonymous".into()),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            boxes: boxes.iter().map(BoxDto::from).collect(),
        };
        fs::write(dir.join(format!("{stem}.ids")), labels.ids)?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&meta).map_err(|e| StoreError::Internal(e.to_string()))?,
        )?;
        let tmp = dir.join(format!(".{stem}.txt.tmp"));
        fs::write(&tmp, labels.text)?;
        fs::rename(&tmp, dir.join(format!("{stem}.txt")))?;
        log::info!("{patch_id}: stored revision {revision} ({} boxes)", boxes.len());

        // Answer with what was persisted, as any later read would see it.
        self.labels(patch_id)
    }

    /// Automatic labels and the latest revision of every reviewed patch.
    pub fn label_pair(&self) -> Result<(PatchLabels, PatchLabels), StoreError> {
        let mut refined = PatchLabels::new();
        for id in self.manifest.keys() {
            let (rev, boxes) = self.latest(id)?;
            if rev > 0 {
                refined.insert(id.clone(), boxes);
            }
        }
        Ok((self.auto.clone(), refined))
    }

    pub fn correction_stats(&self) -> Result<CorrectionStats, StoreError> {
        let (auto, refined) = self.label_pair()?;
        merge_refinements(&auto, &refined, self.move_iou)
            .map(|m| m.stats)
            .map_err(|e| StoreError::Internal(e.to_string()))
    }

    pub fn grid(&self, patch_id: &str, cell_m: f64) -> Result<GridDto, StoreError> {
        let rec = self.record(patch_id)?;
        if !(cell_m.is_finite() && cell_m > 0.0) {
            return Err(StoreError::Invalid(format!("cell_m must be positive, got {cell_m}")));
        }
        let spacing = px_from_meters(cell_m, rec.gsd).map_err(|e| StoreError::Invalid(e.to_string()))?;
        let lines = |origin: u32| -> Vec<u32> {
            let first = origin.div_ceil(spacing) * spacing;
            (first..=origin + rec.size).step_by(spacing as usize).map(|v| v - origin).collect()
        };
        Ok(GridDto {
            patch_id: patch_id.to_string(),
            cell_m,
            gsd: rec.gsd,
            spacing_px: spacing,
            xs: lines(rec.x),
            ys: lines(rec.y),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
