//! Train/val/test splits, the on-disk detection dataset, and merging of
//! expert-refined labels back over the automatic ones.

mod emit;
mod refine;

use std::collections::BTreeSet;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::AnnotationError;

pub use emit::{emit_dataset, read_label_dir, write_label_dir, DatasetSummary, PatchLabels, DESCRIPTOR_NAME};
pub use refine::{merge_refinements, ChangeKind, ClassCorrection, CorrectionStats, LabelChange, MergeOutcome};

/// Default IoU below which a same-class refined box counts as moved.
pub const DEFAULT_MOVE_IOU: f64 = 0.9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid split ratios {0:?}: each must be >= 0 and they must sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("no patch ids to split")]
    Empty,
    #[error("duplicate patch id: {0}")]
    DuplicateId(String),
    #[error("missing label files for: {}", .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("missing patch images for: {}", .0.join(", "))]
    MissingImages(Vec<String>),
    #[error("annotation id {ann_id} appears in both {first} and {second}")]
    IdCollision {
        ann_id: String,
        first: String,
        second: String,
    },
    #[error("refined labels for {0} have no automatic counterpart")]
    UnknownPatch(String),
    #[error("move threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("{path}: {source}")]
    Labels {
        path: String,
        #[source]
        source: AnnotationError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Split ratios (train, val, test) and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.1, 0.2],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self, DatasetError> {
        let spec = Self { ratios, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = self.ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
            && (self.ratios.iter().sum::<f64>() - 1.0).abs() < 1e-6;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidRatios(self.ratios))
        }
    }

    /// Split sizes for `n` ids: floor, floor, remainder.
    ///
    /// A small epsilon absorbs products such as `0.7 * 20 = 13.999...`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let n_train = floor(self.ratios[0]).min(n);
        let n_val = floor(self.ratios[1]).min(n - n_train);
        (n_train, n_val, n - n_train - n_val)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &[String])> {
        [("train", &self.train[..]), ("val", &self.val[..]), ("test", &self.test[..])].into_iter()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uniform integer in `0..bound` by rejection on the low end of the u64 range.
fn bounded(rng: &mut impl RngCore, bound: u64) -> u64 {
    let reject_below = bound.wrapping_neg() % bound;
    loop {
        let x = rng.next_u64();
        if x >= reject_below {
            return x % bound;
        }
    }
}

/// Fisher–Yates shuffle driven by ChaCha8 seeded with `seed`.
pub fn shuffle_ids(ids: &mut [String], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        ids.swap(i, j);
    }
}

/// Shuffles the ids and cuts them into train, val and test.
///
/// Ids are sorted before shuffling, so the split depends only on the id set
/// and the seed, not on the order the caller listed them in.
pub fn split_dataset(patch_ids: &[String], spec: &SplitSpec) -> Result<Splits, DatasetError> {
    spec.validate()?;
    if patch_ids.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut seen = BTreeSet::new();
    for id in patch_ids {
        if !seen.insert(id.as_str()) {
            return Err(DatasetError::DuplicateId(id.clone()));
        }
    }
    let mut ids: Vec<String> = seen.into_iter().map(str::to_string).collect();
    shuffle_ids(&mut ids, spec.seed);
    let (n_train, n_val, _) = spec.sizes(ids.len());
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(Splits { train: ids, val, test })
}
