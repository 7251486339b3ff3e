use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{rle, InstanceMask, SegmentError, SegmentErrorKind, SegmentRequest, Segmenter};

/// One stored mask, serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub patch_id: String,
    pub ann_id: String,
    pub width: u32,
    pub height: u32,
    pub rle: Vec<u32>,
    pub score: f64,
}

/// Replays masks keyed by `(patch_id, ann_id)`.
#[derive(Debug, Default, Clone)]
pub struct FixtureBackend {
    masks: HashMap<(String, String), InstanceMask>,
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, patch_id: impl Into<String>, mask: InstanceMask) {
        self.masks.insert((patch_id.into(), mask.ann_id.clone()), mask);
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Loads JSON-lines fixture records.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, String> {
        let mut backend = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let mask = rle::decode(&rec.rle, rec.width, rec.height)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            backend.insert(
                rec.patch_id,
                InstanceMask {
                    ann_id: rec.ann_id,
                    mask,
                    score: rec.score,
                },
            );
        }
        Ok(backend)
    }

    /// Writes records sorted by key so the file is reproducible.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut keys: Vec<&(String, String)> = self.masks.keys().collect();
        keys.sort();
        for key in keys {
            let m = &self.masks[key];
            let rec = FixtureRecord {
                patch_id: key.0.clone(),
                ann_id: key.1.clone(),
                width: m.width(),
                height: m.height(),
                rle: rle::encode(&m.mask),
                score: m.score,
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }
}

impl Segmenter for FixtureBackend {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<InstanceMask, SegmentError> {
        req.validate()?;
        let key = (req.patch.patch_id.clone(), req.ann_id.to_string());
        let mask = self
            .masks
            .get(&key)
            .ok_or_else(|| req.error(SegmentErrorKind::UnknownKey))?;
        if mask.width() != req.patch.size || mask.height() != req.patch.size {
            return Err(req.error(SegmentErrorKind::DimensionMismatch {
                got_w: mask.width(),
                got_h: mask.height(),
                want: req.patch.size,
            }));
        }
        Ok(mask.clone())
    }
}
