//! `synth`: a self-contained synthetic survey for exercising the pipeline.
//!
//! Output layout under `--out`:
//!
//! ```text
//! patches/<id>.png  manifest.csv  local_points.csv
//! gt/<id>.txt|.ids                      generator ground truth
//! predictions/run<k>/<id>.txt           simulated detector output
//! ```
//!
//! Patches sit side by side in a virtual scene called `synth`. The simulated
//! detector drops some objects, jitters the rest, confuses certain and
//! uncertain whales now and then and adds a few false positives.

use std::fs;
use std::path::Path;

use anyhow::anyhow;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use seeker_core::annotations::{write_label_file, write_local_points};
use seeker_core::eval::{write_predictions, Detection};
use seeker_core::raster::{write_manifest, write_patch_png, ManifestRecord, Patch};
use seeker_core::segmenter::{generate_synthetic_scene, SynthParams, SyntheticScene};
use seeker_core::{BBox, ClassLabel, LabeledBox};

use crate::args::SynthArgs;
use crate::commands::{LOCAL_POINTS, MANIFEST, PATCH_DIR};
use crate::{invalid, runtime, CmdResult};

const SCENE_ID: &str = "synth";
const MISS_RATE: f64 = 0.12;
const WHALE_SWAP_RATE: f64 = 0.15;
/// Edge jitter as a fraction of the box side.
const JITTER: f64 = 0.12;
const MAX_FALSE_POSITIVES: u32 = 2;
const PREDICTION_STREAM: u64 = 1 << 40;

fn patch_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn prediction_rng(seed: u64, run: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PREDICTION_STREAM + ((run as u64) << 24) + index as u64);
    rng
}

fn generate(args: &SynthArgs, index: usize) -> Result<SyntheticScene, String> {
    let x = index as u32 * args.size;
    let params = SynthParams {
        seed: patch_seed(args.seed, index),
        n_objects: args.objects,
        size: args.size,
        touch_probability: args.touch_probability,
        patch_id: Patch::id_for(SCENE_ID, x, 0),
        ..Default::default()
    };
    let mut scene = generate_synthetic_scene(&params).map_err(|e| format!("patch {index}: {e}"))?;
    scene.patch.scene_id = SCENE_ID.to_string();
    scene.patch.x = x;
    scene.patch.y = 0;
    Ok(scene)
}

/// Noisy detections for one patch; deterministic per `(seed, run, index)`.
pub fn simulate_detections(gt: &[LabeledBox], patch: &Patch, rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let s = patch.size as f64;
    let mut out = Vec::new();
    for b in gt {
        if rng.gen_bool(MISS_RATE) {
            continue;
        }
        let (w, h) = (b.bbox.width(), b.bbox.height());
        let mut j = |len: f64| rng.gen_range(-JITTER..=JITTER) * len;
        let bbox = BBox::new(b.bbox.x1 + j(w), b.bbox.y1 + j(h), b.bbox.x2 + j(w), b.bbox.y2 + j(h)).clip(s, s);
        let class = match b.class {
            ClassLabel::CertainWhale if rng.gen_bool(WHALE_SWAP_RATE) => ClassLabel::UncertainWhale,
            ClassLabel::UncertainWhale if rng.gen_bool(WHALE_SWAP_RATE) => ClassLabel::CertainWhale,
            c => c,
        };
        let confidence = rng.gen_range(0.3..1.0);
        if bbox.area() >= 1.0 {
            out.push(Detection {
                patch_id: patch.patch_id.clone(),
                class,
                bbox,
                confidence,
            });
        }
    }
    for _ in 0..rng.gen_range(0..=MAX_FALSE_POSITIVES) {
        let side = rng.gen_range(6.0..30.0f64).min(s);
        let x = rng.gen_range(0.0..=s - side);
        let y = rng.gen_range(0.0..=s - side);
        let class = ClassLabel::ALL[rng.gen_range(0..3)];
        out.push(Detection {
            patch_id: patch.patch_id.clone(),
            class,
            bbox: BBox::new(x, y, x + side, y + side),
            confidence: rng.gen_range(0.01..0.6),
        });
    }
    out
}

fn fresh_dir(path: &Path) -> std::io::Result<()> {
    if path.exists() {
        fs::remove_dir_all(path)?;
    }
    fs::create_dir_all(path)
}

pub fn run(args: &SynthArgs) -> CmdResult {
    if args.patches == 0 {
        return Err(invalid(anyhow!("--patches must be at least 1")));
    }
    if !(args.gsd.is_finite() && args.gsd > 0.0) {
        return Err(invalid(anyhow!("--gsd must be positive")));
    }
    let scenes: Vec<SyntheticScene> = (0..args.patches)
        .into_par_iter()
        .map(|i| generate(args, i))
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(anyhow!(e)))?;

    let patch_dir = args.out.join(PATCH_DIR);
    let gt_dir = args.out.join("gt");
    let pred_root = args.out.join("predictions");
    for dir in [&patch_dir, &gt_dir, &pred_root] {
        fresh_dir(dir).map_err(runtime)?;
    }
    for k in 0..args.runs {
        fs::create_dir_all(pred_root.join(format!("run{k}"))).map_err(runtime)?;
    }

    scenes
        .par_iter()
        .enumerate()
        .try_for_each(|(i, scene)| -> anyhow::Result<()> {
            write_patch_png(&scene.patch, &patch_dir)?;
            write_label_file(&gt_dir, &scene.patch.patch_id, &scene.boxes, args.size)?;
            for k in 0..args.runs {
                let mut rng = prediction_rng(args.seed, k, i);
                let dets = simulate_detections(&scene.boxes, &scene.patch, &mut rng);
                write_predictions(&pred_root.join(format!("run{k}")), &scene.patch.patch_id, &dets, args.size)?;
            }
            Ok(())
        })
        .map_err(runtime)?;

    let records: Vec<ManifestRecord> = scenes.iter().map(|s| ManifestRecord::for_patch(&s.patch, args.gsd)).collect();
    write_manifest(&args.out.join(MANIFEST), &records).map_err(runtime)?;
    let points: Vec<_> = scenes.iter().flat_map(|s| s.points.iter().cloned()).collect();
    write_local_points(&args.out.join(LOCAL_POINTS), &points).map_err(runtime)?;
    log::info!("{} patches, {} objects, {} prediction runs", scenes.len(), points.len(), args.runs);
    Ok(())
}
