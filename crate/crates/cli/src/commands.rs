//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use seeker_core::annotations::{
    localize_points, parse_points, read_local_points, write_label_file, write_local_points, BufferMode,
};
use seeker_core::boxgen::{buffer_labels_baseline, label_patch, LabelReport};
use seeker_core::dataset::{
    emit_dataset, merge_refinements, read_label_dir, split_dataset, write_label_dir, CorrectionStats, LabelChange,
    SplitSpec,
};
use seeker_core::eval::{
    aggregate_runs, confusion_matrix, emit_report, emit_report_json, read_gt_dir, read_predictions_dir, score,
    sweep_threshold, ConfusionMatrix, Detection, GtBox, ReportRow,
};
use seeker_core::raster::{
    convert_depth, default_patch_size, filter_patches, load_scene, read_manifest, read_patch_png, read_scene_meta,
    tile_scene, write_manifest, write_patch_png, BitDepth, ManifestRecord, Patch, SceneImage, StretchParams,
};
use seeker_core::segmenter::{ExternalBackend, ExternalConfig, FixtureBackend, SyntheticBackend};
use seeker_core::{BufferConfig, LocalPoint, Segmenter};

use crate::args::{
    BackendKind, BufferModeArg, ConfusionArgs, DatasetArgs, EvalArgs, LabelArgs, PreprocessArgs, ScoringInput,
    ServeArgs, SweepArgs,
};
use crate::{invalid, runtime, CmdResult, Failure};

pub const MANIFEST: &str = "manifest.csv";
pub const LOCAL_POINTS: &str = "local_points.csv";
pub const PATCH_DIR: &str = "patches";

fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(invalid(anyhow!("{what} {} is not a directory", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(anyhow!("{what} {} not found", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    write_text(path, &text)
}

fn load_manifest(data: &Path) -> Result<Vec<ManifestRecord>, Failure> {
    let path = data.join(MANIFEST);
    require_file(&path, "manifest")?;
    read_manifest(&path).map_err(invalid)
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(invalid)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn to_8bit(scene: SceneImage, args: &PreprocessArgs, path: &Path) -> Result<SceneImage, Failure> {
    match (scene.bit_depth(), args.stretch) {
        (BitDepth::Sixteen, true) => {
            let params = StretchParams::new(args.p_low, args.p_high).map_err(invalid)?;
            convert_depth(&scene, params).map_err(runtime)
        }
        (BitDepth::Sixteen, false) => Err(invalid(anyhow!(
            "{}: 16-bit scene needs --stretch",
            path.display()
        ))),
        (BitDepth::Eight, true) => Err(invalid(anyhow!("{}: already 8-bit", path.display()))),
        (BitDepth::Eight, false) => Ok(scene),
    }
}

pub fn preprocess(args: &PreprocessArgs) -> CmdResult {
    require_dir(&args.scenes, "scene directory")?;
    require_file(&args.points, "point file")?;
    let files = scene_files(&args.scenes)?;
    if files.is_empty() {
        return Err(invalid(anyhow!("no .png or .tif scenes in {}", args.scenes.display())));
    }

    let mut scenes = Vec::with_capacity(files.len());
    for path in &files {
        let meta_path = path.with_extension("meta");
        require_file(&meta_path, "scene sidecar")?;
        let meta = read_scene_meta(&meta_path).map_err(invalid)?;
        let scene = load_scene(path, &meta)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(invalid)?;
        scenes.push(to_8bit(scene, args, path)?);
    }
    let mut seen = BTreeMap::new();
    for s in &scenes {
        if seen.insert(s.scene_id().to_string(), (s.width(), s.height())).is_some() {
            return Err(invalid(anyhow!("scene id {} used twice", s.scene_id())));
        }
    }

    let text = fs::read_to_string(&args.points)
        .with_context(|| format!("reading {}", args.points.display()))
        .map_err(invalid)?;
    let points = parse_points(&text, |id| seen.get(id).copied())
        .with_context(|| args.points.display().to_string())
        .map_err(invalid)?;

    let mut patches: Vec<(Patch, f64)> = Vec::new();
    for scene in &scenes {
        let size = match args.patch_size {
            Some(s) => s,
            None => default_patch_size(scene.gsd()).ok_or_else(|| {
                invalid(anyhow!(
                    "no default patch size for gsd {} of scene {}; pass --patch-size",
                    scene.gsd(),
                    scene.scene_id()
                ))
            })?,
        };
        let tiles = tile_scene(scene, size).map_err(invalid)?;
        patches.extend(filter_patches(tiles, &points).into_iter().map(|p| (p, scene.gsd())));
    }
    let plain: Vec<Patch> = patches.iter().map(|(p, _)| p.clone()).collect();
    let owned = localize_points(&points, &plain).map_err(invalid)?;

    let patch_dir = args.out.join(PATCH_DIR);
    create_dir(&patch_dir)?;
    plain
        .par_iter()
        .try_for_each(|p| write_patch_png(p, &patch_dir).map(|_| ()))
        .map_err(runtime)?;
    let records: Vec<ManifestRecord> = patches.iter().map(|(p, gsd)| ManifestRecord::for_patch(p, *gsd)).collect();
    write_manifest(&args.out.join(MANIFEST), &records).map_err(runtime)?;
    let mut local: Vec<LocalPoint> = owned.into_values().flatten().collect();
    local.sort_by(|a, b| (&a.patch_id, &a.ann_id).cmp(&(&b.patch_id, &b.ann_id)));
    write_local_points(&args.out.join(LOCAL_POINTS), &local).map_err(runtime)?;
    log::info!(
        "{} scenes, {} points, {} patches kept",
        scenes.len(),
        local.len(),
        records.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct FailedPatch {
    patch_id: String,
    error: String,
}

#[derive(Serialize)]
struct LabelRunReport {
    #[serde(flatten)]
    summary: LabelReport,
    backend: String,
    buffer_m: [f64; 3],
    buffer_mode: &'static str,
    seed: Option<u64>,
    failed: Vec<FailedPatch>,
}

fn make_backend(args: &LabelArgs, patch_dir: &Path, jobs: usize) -> Result<Box<dyn Segmenter>, Failure> {
    Ok(match args.backend {
        BackendKind::Synthetic => Box::new(SyntheticBackend::default()),
        BackendKind::Fixture => {
            let path = args
                .fixture
                .as_ref()
                .ok_or_else(|| invalid(anyhow!("--backend fixture needs --fixture")))?;
            require_file(path, "fixture")?;
            let file = fs::File::open(path).map_err(invalid)?;
            let backend = FixtureBackend::read_jsonl(std::io::BufReader::new(file))
                .map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?;
            Box::new(backend)
        }
        BackendKind::External => {
            let cmd = args
                .backend_cmd
                .as_ref()
                .ok_or_else(|| invalid(anyhow!("--backend external needs --backend-cmd")))?;
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(invalid(anyhow!("--backend-cmd is empty")));
            }
            let config = ExternalConfig::from_env(argv, patch_dir.to_path_buf(), jobs).map_err(|e| invalid(anyhow!(e)))?;
            Box::new(ExternalBackend::new(config).context("starting backend").map_err(runtime)?)
        }
    })
}

pub fn label(args: &LabelArgs, jobs: usize) -> CmdResult {
    require_dir(&args.data, "data directory")?;
    let records = load_manifest(&args.data)?;
    let points_path = args.data.join(LOCAL_POINTS);
    require_file(&points_path, "point file")?;
    let mut by_patch: BTreeMap<String, Vec<LocalPoint>> = BTreeMap::new();
    for p in read_local_points(&points_path).map_err(invalid)? {
        by_patch.entry(p.patch_id.clone()).or_default().push(p);
    }
    if let Some(p) = by_patch.keys().find(|id| !records.iter().any(|r| &r.patch_id == *id)) {
        return Err(invalid(anyhow!("points reference patch {p} missing from the manifest")));
    }
    let mode = match args.buffer_mode {
        BufferModeArg::HalfExtent => BufferMode::HalfExtent,
        BufferModeArg::FullSide => BufferMode::FullSide,
    };
    let cfg = BufferConfig::new(args.whale_buffer_m, args.seal_buffer_m, mode).map_err(invalid)?;
    let patch_dir = args.data.join(PATCH_DIR);
    let backend = if args.baseline_buffer {
        None
    } else {
        Some(make_backend(args, &patch_dir, jobs)?)
    };
    create_dir(&args.out)?;

    let empty = Vec::new();
    let results: Vec<Result<(Vec<_>, Vec<String>), String>> = records
        .par_iter()
        .map(|rec| {
            let points = by_patch.get(&rec.patch_id).unwrap_or(&empty);
            let outcome = match &backend {
                None => buffer_labels_baseline(points, &cfg, rec.gsd, rec.size)
                    .map(|b| (b, Vec::new()))
                    .map_err(|e| e.to_string()),
                Some(backend) => {
                    let path = patch_dir.join(format!("{}.png", rec.patch_id));
                    let patch = read_patch_png(&path, rec).map_err(|e| e.to_string())?;
                    label_patch(&patch, Some(&path), points, backend.as_ref(), &cfg, rec.gsd)
                        .map(|l| (l.boxes, l.fallbacks))
                        .map_err(|e| e.to_string())
                }
            }?;
            write_label_file(&args.out, &rec.patch_id, &outcome.0, rec.size).map_err(|e| e.to_string())?;
            Ok(outcome)
        })
        .collect();

    let method = if args.baseline_buffer { "buffer" } else { "segment" };
    let mut report = LabelRunReport {
        summary: LabelReport::new(method),
        backend: match (args.baseline_buffer, args.backend) {
            (true, _) => "none".into(),
            (false, BackendKind::Synthetic) => "synthetic".into(),
            (false, BackendKind::Fixture) => "fixture".into(),
            (false, BackendKind::External) => "external".into(),
        },
        buffer_m: cfg.meters,
        buffer_mode: match mode {
            BufferMode::HalfExtent => "half-extent",
            BufferMode::FullSide => "full-side",
        },
        seed: args.seed,
        failed: Vec::new(),
    };
    for (rec, result) in records.iter().zip(results) {
        match result {
            Ok((boxes, fallbacks)) => report.summary.add_patch(&boxes, &fallbacks),
            Err(error) => {
                log::error!("{}: {error}", rec.patch_id);
                report.failed.push(FailedPatch {
                    patch_id: rec.patch_id.clone(),
                    error,
                });
            }
        }
    }
    write_json(&args.out.join("label_report.json"), &report)?;
    log::info!(
        "{} patches labeled, {} boxes, {} fallbacks, {} failed",
        report.summary.patches,
        report.summary.boxes,
        report.summary.fallbacks,
        report.failed.len()
    );
    if report.failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow!("{} patches failed to label", report.failed.len())))
    }
}

#[derive(Serialize)]
struct CorrectionsFile<'a> {
    stats: &'a CorrectionStats,
    changes: &'a [LabelChange],
}

pub fn dataset(args: &DatasetArgs) -> CmdResult {
    require_dir(&args.data, "data directory")?;
    require_dir(&args.labels, "label directory")?;
    let records = load_manifest(&args.data)?;
    let ratios: [f64; 3] = args
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| invalid(anyhow!("--ratios needs three values")))?;
    let spec = SplitSpec::new(ratios, args.seed).map_err(invalid)?;
    let sizes: BTreeMap<String, u32> = records.iter().map(|r| (r.patch_id.clone(), r.size)).collect();
    create_dir(&args.out)?;

    let label_src = match &args.refined {
        None => args.labels.clone(),
        Some(refined_dir) => {
            require_dir(refined_dir, "refined label directory")?;
            let auto = read_label_dir(&args.labels, &sizes).map_err(invalid)?;
            let refined = read_label_dir(refined_dir, &sizes).map_err(invalid)?;
            let merged = merge_refinements(&auto, &refined, args.move_iou).map_err(invalid)?;
            let dir = args.out.join("merged_labels");
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(runtime)?;
            }
            create_dir(&dir)?;
            write_label_dir(&dir, &merged.labels, &sizes).map_err(runtime)?;
            write_json(
                &args.out.join("corrections.json"),
                &CorrectionsFile {
                    stats: &merged.stats,
                    changes: &merged.changes,
                },
            )?;
            for c in &merged.stats.classes {
                log::info!("{}: {} of {} corrected", c.class.name(), c.n_corrected, c.n_auto);
            }
            dir
        }
    };

    let ids: Vec<String> = records.iter().map(|r| r.patch_id.clone()).collect();
    let splits = split_dataset(&ids, &spec).map_err(invalid)?;
    let summary = emit_dataset(&splits, &args.data.join(PATCH_DIR), &label_src, &args.out, &spec).map_err(invalid)?;
    log::info!("split {}/{}/{}", summary.train, summary.val, summary.test);
    Ok(())
}

/// Patch sizes from the manifest, or `--patch-size` for every file stem found.
fn patch_sizes(input: &ScoringInput, pred_dirs: &[&Path]) -> Result<BTreeMap<String, u32>, Failure> {
    if let Some(m) = &input.manifest {
        require_file(m, "manifest")?;
        let records = read_manifest(m).map_err(invalid)?;
        return Ok(records.into_iter().map(|r| (r.patch_id, r.size)).collect());
    }
    let mut sizes = BTreeMap::new();
    for dir in std::iter::once(input.gt.as_path()).chain(pred_dirs.iter().copied()) {
        for entry in fs::read_dir(dir).map_err(invalid)? {
            let path = entry.map_err(invalid)?.path();
            if path.extension().is_some_and(|x| x == "txt") {
                if let Some(stem) = path.file_stem() {
                    sizes.insert(stem.to_string_lossy().into_owned(), input.patch_size);
                }
            }
        }
    }
    Ok(sizes)
}

fn check_iou(iou: f64) -> Result<(), Failure> {
    if iou > 0.0 && iou <= 1.0 {
        Ok(())
    } else {
        Err(invalid(anyhow!("--iou must be in (0, 1], got {iou}")))
    }
}

fn check_conf(conf: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&conf) {
        Ok(())
    } else {
        Err(invalid(anyhow!("--conf must be in [0, 1], got {conf}")))
    }
}

fn load_scoring(input: &ScoringInput, preds: &[&Path]) -> Result<(Vec<GtBox>, Vec<Vec<Detection>>), Failure> {
    check_iou(input.iou)?;
    require_dir(&input.gt, "ground-truth directory")?;
    for p in preds {
        require_dir(p, "prediction directory")?;
    }
    let sizes = patch_sizes(input, preds)?;
    let gts = read_gt_dir(&input.gt, &sizes).map_err(invalid)?;
    let dets = preds
        .par_iter()
        .map(|p| read_predictions_dir(p, &sizes))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    create_dir(&input.out)?;
    Ok((gts, dets))
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    check_conf(args.conf)?;
    let preds: Vec<&Path> = args.pred.iter().map(PathBuf::as_path).collect();
    let (gts, runs) = load_scoring(&args.input, &preds)?;
    let per_run: Vec<_> = runs
        .par_iter()
        .map(|dets| score(dets, &gts, args.input.iou, args.conf))
        .collect();
    let metrics = aggregate_runs(&per_run).map_err(runtime)?;
    let rows = [ReportRow {
        approach: args.name.clone(),
        metrics,
    }];
    write_text(&args.input.out.join("report.txt"), &emit_report(&rows))?;
    write_text(&args.input.out.join("report.json"), &emit_report_json(&rows))?;
    log::info!(
        "{} runs, mF1 {:.3}, whale overall F1 {:.3}",
        per_run.len(),
        metrics.mf1,
        metrics.whale_overall.f1
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> CmdResult {
    let (gts, mut runs) = load_scoring(&args.input, &[args.pred.as_path()])?;
    let dets = runs.pop().expect("one prediction directory");
    let result = sweep_threshold(&dets, &gts, args.input.iou).map_err(invalid)?;
    write_json(&args.input.out.join("sweep.json"), &result)?;
    log::info!("best threshold {:.2}, certain-whale F1 {:.3}", result.threshold, result.certain_f1);
    Ok(())
}

#[derive(Serialize)]
struct ConfusionFile<'a> {
    conf: f64,
    iou: f64,
    labels: [&'static str; 4],
    matrix: &'a ConfusionMatrix,
}

pub fn confusion(args: &ConfusionArgs) -> CmdResult {
    check_conf(args.conf)?;
    let (gts, mut runs) = load_scoring(&args.input, &[args.pred.as_path()])?;
    let dets = runs.pop().expect("one prediction directory");
    let matrix = confusion_matrix(&dets, &gts, args.conf, args.input.iou);
    write_text(&args.input.out.join("confusion.txt"), &matrix.render())?;
    write_json(
        &args.input.out.join("confusion.json"),
        &ConfusionFile {
            conf: args.conf,
            iou: args.input.iou,
            labels: ConfusionMatrix::LABELS,
            matrix: &matrix,
        },
    )?;
    Ok(())
}

pub fn serve(args: &ServeArgs) -> CmdResult {
    require_dir(&args.data, "data directory")?;
    if let Some(dir) = &args.static_dir {
        require_dir(dir, "static directory")?;
    }
    if !(args.move_iou > 0.0 && args.move_iou <= 1.0) {
        return Err(invalid(anyhow!("--move-iou must be in (0, 1]")));
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| invalid(anyhow!("bad --host/--port: {e}")))?;
    let store = seeker_review::ReviewStore::open(&args.data)
        .map_err(|e| invalid(anyhow!(e)))?
        .with_move_iou(args.move_iou);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(seeker_review::serve(store, args.static_dir.clone(), addr))
        .map_err(runtime)
}
