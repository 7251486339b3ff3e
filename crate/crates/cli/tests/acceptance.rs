//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Oracles here are written independently of the library code they check.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seeker_core::annotations::{parse_yolo_labels, write_yolo_labels};
use seeker_core::boxgen::{label_patch, resolve_overlaps};
use seeker_core::dataset::{split_dataset, SplitSpec};
use seeker_core::eval::{
    emit_report, match_class_aware, score, sweep_threshold, ClassMetrics, ClassScore, Detection, GtBox, ReportRow,
    DEFAULT_CONFUSION_CONF, DEFAULT_IOU,
};
use seeker_core::geometry::iou;
use seeker_core::segmenter::{generate_synthetic_scene, rle, SynthParams, SyntheticBackend};
use seeker_core::{BBox, Bitmask, BufferConfig, ClassLabel, InstanceMask, LabeledBox, LocalPoint};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- overlap resolution

/// Per-pixel nearest-point assignment written straight from the rule:
/// a pixel claimed by two or more masks stays only in the claimant whose
/// point is closest to the pixel center, first index on ties.
fn brute_force_resolve(masks: &[Vec<bool>], points: &[(f64, f64)], w: usize) -> Vec<Vec<bool>> {
    let mut out = masks.to_vec();
    for idx in 0..masks[0].len() {
        let claim: Vec<usize> = (0..masks.len()).filter(|&k| masks[k][idx]).collect();
        if claim.len() < 2 {
            continue;
        }
        let (cx, cy) = ((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5);
        let mut winner = claim[0];
        let mut best = f64::INFINITY;
        for &k in &claim {
            let d = (points[k].0 - cx).powi(2) + (points[k].1 - cy).powi(2);
            if d < best {
                best = d;
                winner = k;
            }
        }
        for &k in &claim {
            out[k][idx] = k == winner;
        }
    }
    out
}

fn resolve_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut differing = 0usize;
    let mut contested = 0usize;
    for scene in 0..200 {
        let w = rng.gen_range(4..=32usize);
        let h = rng.gen_range(4..=32usize);
        let n = rng.gen_range(1..=6usize);
        let mut points = Vec::new();
        let mut raw = Vec::new();
        for _ in 0..n {
            // Quarter-pixel points keep squared distances exact.
            let px = rng.gen_range(0..w * 4) as f64 / 4.0;
            let py = rng.gen_range(0..h * 4) as f64 / 4.0;
            let r = rng.gen_range(1.0..12.0f64);
            let noise = rng.gen_range(0.0..0.2);
            let m: Vec<bool> = (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                    (x - px).hypot(y - py) <= r || rng.gen_bool(noise)
                })
                .collect();
            points.push((px, py));
            raw.push(m);
        }
        contested += (0..w * h).filter(|&i| raw.iter().filter(|m| m[i]).count() > 1).count();
        let want = brute_force_resolve(&raw, &points, w);

        let local: Vec<LocalPoint> = points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| LocalPoint {
                ann_id: format!("a{k}"),
                patch_id: format!("s{scene}"),
                x,
                y,
                class: ClassLabel::CertainWhale,
            })
            .collect();
        let masks: Vec<InstanceMask> = raw
            .iter()
            .enumerate()
            .map(|(k, m)| InstanceMask {
                ann_id: format!("a{k}"),
                mask: Bitmask::from_fn(w as u32, h as u32, |x, y| m[y as usize * w + x as usize]),
                score: 1.0,
            })
            .collect();
        let got = resolve_overlaps(&format!("s{scene}"), masks, &local).map_err(|e| format!("scene {scene}: {e}"))?;
        for (k, m) in got.masks.iter().enumerate() {
            differing += (0..w * h).filter(|&i| m.mask.get_index(i) != want[k][i]).count();
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(differing == 0, "{differing} pixels differ from the brute-force assignment");
    ensure!(secs < 5.0, "took {secs:.2} s, limit 5 s");
    ensure!(contested > 0, "no contested pixels generated");
    Ok(format!("200 scenes, {contested} contested pixels, 0 differing, {secs:.2} s"))
}

// ---------------------------------------------------------------- synthetic labeling

fn pairwise_disjoint(masks: &[InstanceMask]) -> bool {
    for (i, a) in masks.iter().enumerate() {
        for b in &masks[i + 1..] {
            if (0..a.mask.len()).any(|p| a.mask.get_index(p) && b.mask.get_index(p)) {
                return false;
            }
        }
    }
    true
}

/// Fraction of labeled boxes with IoU ≥ `thr` against the generator box of the same id.
fn label_scenes(seeds: std::ops::Range<u64>, touch: f64, thr: f64) -> Result<(usize, usize, usize), String> {
    let (mut hits, mut total, mut disjoint) = (0, 0, 0);
    for seed in seeds {
        let scene = generate_synthetic_scene(&SynthParams {
            seed,
            n_objects: 4,
            touch_probability: touch,
            patch_id: format!("p{seed}"),
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let out = label_patch(&scene.patch, None, &scene.points, &SyntheticBackend::default(), &BufferConfig::default(), 0.3)
            .map_err(|e| e.to_string())?;
        let truth: BTreeMap<&str, &LabeledBox> = scene.boxes.iter().map(|b| (b.ann_id.as_str(), b)).collect();
        for b in &out.boxes {
            let t = truth.get(b.ann_id.as_str()).ok_or(format!("unknown id {}", b.ann_id))?;
            total += 1;
            if iou(&b.bbox, &t.bbox).unwrap_or(0.0) >= thr {
                hits += 1;
            }
        }
        if pairwise_disjoint(&out.resolved.masks) {
            disjoint += 1;
        }
    }
    Ok((hits, total, disjoint))
}

fn synthetic_labeling() -> Outcome {
    let start = Instant::now();
    let (hits, total, _) = label_scenes(0..50, 0.0, 0.9)?;
    let (t_hits, t_total, t_disjoint) = label_scenes(1000..1025, 1.0, 0.6)?;
    let secs = start.elapsed().as_secs_f64();
    let iso = hits as f64 / total as f64;
    let touch = t_hits as f64 / t_total as f64;
    ensure!(total > 0 && t_total > 0, "no boxes produced");
    ensure!(iso >= 0.95, "isolated: {hits}/{total} boxes with IoU >= 0.9");
    ensure!(t_disjoint == 25, "touching: only {t_disjoint}/25 patches have disjoint masks");
    ensure!(touch >= 0.90, "touching: {t_hits}/{t_total} boxes with IoU >= 0.6");
    ensure!(secs < 30.0, "took {secs:.1} s, limit 30 s");
    Ok(format!(
        "isolated {hits}/{total} IoU>=0.9; touching 25/25 disjoint, {t_hits}/{t_total} IoU>=0.6; {secs:.2} s"
    ))
}

// ---------------------------------------------------------------- metric engine

/// How a detection relates to its ground-truth box in the hand-built fixture.
#[derive(Clone, Copy)]
enum Case {
    /// Identical box, same class.
    Hit,
    /// Same class, shifted 5 px: IoU 5/15.
    Near,
    /// Same class, shifted 7 px: IoU 3/17, below 0.25.
    Far,
    /// Identical box, predicted as the given class.
    As(ClassLabel),
    /// No detection.
    Miss,
    /// Identical box, same class, confidence below the threshold.
    Faint,
    /// Identical box plus a shifted copy at lower confidence.
    Twice,
}

const CW: ClassLabel = ClassLabel::CertainWhale;
const UW: ClassLabel = ClassLabel::UncertainWhale;
const HS: ClassLabel = ClassLabel::HarpSeal;

fn metric_fixture() -> (Vec<Detection>, Vec<GtBox>) {
    use Case::*;
    let mut cases: Vec<(ClassLabel, Case)> = Vec::new();
    let mut add = |class, case, n| cases.extend(std::iter::repeat_n((class, case), n));
    add(CW, Hit, 5);
    add(CW, Near, 2);
    add(CW, Far, 1);
    add(CW, As(UW), 2);
    add(CW, As(HS), 1);
    add(CW, Miss, 2);
    add(CW, Faint, 1);
    add(CW, Twice, 2);
    add(UW, Hit, 4);
    add(UW, Near, 1);
    add(UW, Far, 1);
    add(UW, As(CW), 2);
    add(UW, Miss, 2);
    add(UW, Faint, 1);
    add(UW, Twice, 1);
    add(HS, Hit, 5);
    add(HS, Near, 2);
    add(HS, Far, 1);
    add(HS, As(CW), 1);
    add(HS, Miss, 2);
    add(HS, Twice, 1);
    assert_eq!(cases.len(), 40);

    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let det = |patch: &str, class, x: f64, conf| Detection {
        patch_id: patch.to_string(),
        class,
        bbox: BBox::new(x, 10.0, x + 10.0, 20.0),
        confidence: conf,
    };
    for (k, &(class, case)) in cases.iter().enumerate() {
        // Four boxes per patch, 50 px apart so only intended pairs overlap.
        let patch = format!("p{}", k / 4);
        let x = 10.0 + 50.0 * (k % 4) as f64;
        gts.push(GtBox {
            patch_id: patch.clone(),
            class,
            bbox: BBox::new(x, 10.0, x + 10.0, 20.0),
        });
        match case {
            Hit => dets.push(det(&patch, class, x, 0.9)),
            Near => dets.push(det(&patch, class, x + 5.0, 0.8)),
            Far => dets.push(det(&patch, class, x + 7.0, 0.8)),
            As(c) => dets.push(det(&patch, c, x, 0.7)),
            Miss => {}
            Faint => dets.push(det(&patch, class, x, 0.1)),
            Twice => {
                dets.push(det(&patch, class, x, 0.9));
                dets.push(det(&patch, class, x + 1.0, 0.6));
            }
        }
    }
    // Background detections far from every ground-truth box.
    for (k, class) in [CW, CW, CW, UW, UW, HS, HS].into_iter().enumerate() {
        dets.push(det(&format!("p{k}"), class, 260.0, 0.5));
    }
    (dets, gts)
}

/// Exact IoU of integer boxes as (intersection, union).
fn iou_frac(a: &[i64; 4], b: &[i64; 4]) -> (i64, i64) {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = iw * ih;
    let area = |r: &[i64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    (inter, area(a) + area(b) - inter)
}

fn frac_cmp(a: (i64, i64), b: (i64, i64)) -> std::cmp::Ordering {
    (a.0 as i128 * b.1 as i128).cmp(&(b.0 as i128 * a.1 as i128))
}

/// Exhaustive matcher for one group of integer boxes.
///
/// Detections are ranked by confidence, then best IoU against the group,
/// then box coordinates, then index; ground truth by box coordinates, then
/// index. Every injective assignment of detections to ground truth at
/// IoU ≥ `thr` is enumerated and the lexicographically best one kept, where
/// each detection in rank order prefers any match over none, a higher IoU,
/// and then the lower-ranked ground truth. Returns `(det, gt)` index pairs.
fn exhaustive_match(dets: &[([i64; 4], u32)], gts: &[[i64; 4]], thr: (i64, i64)) -> Vec<(usize, usize)> {
    let mut g_order: Vec<usize> = (0..gts.len()).collect();
    g_order.sort_by(|&a, &b| gts[a].cmp(&gts[b]).then(a.cmp(&b)));
    let best_iou = |d: &[i64; 4]| gts.iter().map(|g| iou_frac(d, g)).max_by(|a, b| frac_cmp(*a, *b)).unwrap_or((0, 1));
    let mut d_order: Vec<usize> = (0..dets.len()).collect();
    d_order.sort_by(|&a, &b| {
        dets[b].1
            .cmp(&dets[a].1)
            .then(frac_cmp(best_iou(&dets[b].0), best_iou(&dets[a].0)))
            .then(dets[a].0.cmp(&dets[b].0))
            .then(a.cmp(&b))
    });

    type Key = Vec<Option<((i64, i64), std::cmp::Reverse<usize>)>>;
    fn better(a: &Key, b: &Key) -> bool {
        for (x, y) in a.iter().zip(b) {
            let ord = match (x, y) {
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some((fa, ra)), Some((fb, rb))) => frac_cmp(*fa, *fb).then(ra.cmp(rb)),
            };
            if ord != std::cmp::Ordering::Equal {
                return ord == std::cmp::Ordering::Greater;
            }
        }
        false
    }
    struct Search<'a> {
        dets: &'a [([i64; 4], u32)],
        gts: &'a [[i64; 4]],
        d_order: Vec<usize>,
        g_order: Vec<usize>,
        thr: (i64, i64),
        best: Option<(Key, Vec<(usize, usize)>)>,
    }
    fn go(s: &mut Search, depth: usize, used: &mut Vec<bool>, key: &mut Key, pairs: &mut Vec<(usize, usize)>) {
        if depth == s.d_order.len() {
            if s.best.as_ref().is_none_or(|(k, _)| better(key, k)) {
                s.best = Some((key.clone(), pairs.clone()));
            }
            return;
        }
        let d = s.d_order[depth];
        key.push(None);
        go(s, depth + 1, used, key, pairs);
        key.pop();
        for rank in 0..s.g_order.len() {
            let g = s.g_order[rank];
            if used[g] {
                continue;
            }
            let f = iou_frac(&s.dets[d].0, &s.gts[g]);
            if frac_cmp(f, s.thr).is_lt() {
                continue;
            }
            used[g] = true;
            key.push(Some((f, std::cmp::Reverse(rank))));
            pairs.push((d, g));
            go(s, depth + 1, used, key, pairs);
            pairs.pop();
            key.pop();
            used[g] = false;
        }
    }
    let mut s = Search {
        dets,
        gts,
        d_order,
        g_order,
        thr,
        best: None,
    };
    go(&mut s, 0, &mut vec![false; gts.len()], &mut Vec::new(), &mut Vec::new());
    let mut pairs = s.best.map(|(_, p)| p).unwrap_or_default();
    pairs.sort();
    pairs
}

fn to_bbox(r: &[i64; 4]) -> BBox {
    BBox::new(r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64)
}

fn random_rect(rng: &mut ChaCha8Rng) -> [i64; 4] {
    let x = rng.gen_range(0..16);
    let y = rng.gen_range(0..16);
    [x, y, x + rng.gen_range(2..8), y + rng.gen_range(2..8)]
}

fn f1_frac(tp: usize, fp: usize, fn_: usize) -> (i64, i64) {
    (2 * tp as i64, (2 * tp + fp + fn_) as i64)
}

fn metric_engine() -> Outcome {
    let (dets, gts) = metric_fixture();
    ensure!(dets.len() == 45 && gts.len() == 40, "fixture has {} detections, {} gt", dets.len(), gts.len());
    let patches: std::collections::BTreeSet<_> = gts.iter().map(|g| &g.patch_id).collect();
    ensure!(patches.len() == 10, "fixture spans {} patches", patches.len());
    let m = score(&dets, &gts, 0.25, 0.15);

    // Counted by hand from the case table above.
    let expect = [
        ("certain whale", &m.certain_whale, (9, 9, 7)),
        ("uncertain whale", &m.uncertain_whale, (6, 6, 6)),
        ("harp seal", &m.harp_seal, (8, 5, 4)),
        ("whale overall", &m.whale_overall, (19, 11, 9)),
    ];
    let rates = [
        (1.0 / 2.0, 9.0 / 16.0, 9.0 / 17.0),
        (1.0 / 2.0, 1.0 / 2.0, 1.0 / 2.0),
        (8.0 / 13.0, 2.0 / 3.0, 16.0 / 25.0),
        (19.0 / 30.0, 19.0 / 28.0, 19.0 / 29.0),
    ];
    for ((name, s, counts), (p, r, f)) in expect.iter().zip(rates) {
        ensure!((s.tp, s.fp, s.fn_) == *counts, "{name}: counts {:?}, expected {counts:?}", (s.tp, s.fp, s.fn_));
        ensure!(
            (s.precision - p).abs() < 1e-9 && (s.recall - r).abs() < 1e-9 && (s.f1 - f).abs() < 1e-9,
            "{name}: P/R/F1 {}/{}/{}, expected {p}/{r}/{f}",
            s.precision,
            s.recall,
            s.f1
        );
    }
    let mf1 = (9.0 / 17.0 + 0.5 + 16.0 / 25.0) / 3.0;
    ensure!((m.mf1 - mf1).abs() < 1e-9, "mF1 {} expected {mf1}", m.mf1);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut matched = 0;
    for case in 0..500 {
        let nd = rng.gen_range(0..=6);
        let ng = rng.gen_range(0..=6);
        let d_raw: Vec<([i64; 4], u32)> = (0..nd).map(|_| (random_rect(&mut rng), rng.gen_range(1..4) * 25)).collect();
        let g_raw: Vec<[i64; 4]> = (0..ng).map(|_| random_rect(&mut rng)).collect();
        let want = exhaustive_match(&d_raw, &g_raw, (1, 4));
        let dets: Vec<Detection> = d_raw
            .iter()
            .map(|(r, c)| Detection {
                patch_id: "p".into(),
                class: CW,
                bbox: to_bbox(r),
                confidence: *c as f64 / 100.0,
            })
            .collect();
        let gts: Vec<GtBox> = g_raw
            .iter()
            .map(|r| GtBox {
                patch_id: "p".into(),
                class: CW,
                bbox: to_bbox(r),
            })
            .collect();
        let [cw, _, _] = match_class_aware(&dets, &gts, 0.25, 0.0);
        let mut got: Vec<(usize, usize)> = cw.pairs.iter().map(|p| (p.det, p.gt)).collect();
        got.sort();
        ensure!(got == want, "case {case}: greedy {got:?}, exhaustive {want:?}");
        ensure!(
            cw.tp == want.len() && cw.fp == nd - want.len() && cw.fn_ == ng - want.len(),
            "case {case}: counts disagree"
        );
        matched += want.len();
    }
    Ok(format!("fixture 10 patches/40 gt/45 det exact; 500 oracle cases agree ({matched} matches)"))
}

// ---------------------------------------------------------------- protocol constants

fn help_text(sub: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seeker"))
        .args([sub, "--help"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{sub} --help failed");
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn flag_default(help: &str, flag: &str) -> Option<String> {
    let start = help.find(&format!("--{flag} "))?;
    let rest = &help[start..];
    let end = rest.find("\n  -").unwrap_or(rest.len());
    let block = &rest[..end];
    let d = block.find("[default: ")?;
    Some(block[d + 10..].split(']').next()?.to_string())
}

fn protocol_constants() -> Outcome {
    ensure!(DEFAULT_IOU == 0.25, "library IoU default {DEFAULT_IOU}");
    ensure!(DEFAULT_CONFUSION_CONF == 0.15, "library confusion default {DEFAULT_CONFUSION_CONF}");
    let buf = BufferConfig::default();
    ensure!(buf.meters == [4.0, 4.0, 2.0], "library buffer default {:?}", buf.meters);
    ensure!(SplitSpec::default().ratios == [0.7, 0.1, 0.2], "library split default {:?}", SplitSpec::default().ratios);

    let checks = [
        ("eval", "iou", "0.25"),
        ("sweep", "iou", "0.25"),
        ("confusion", "iou", "0.25"),
        ("confusion", "conf", "0.15"),
        ("label", "whale-buffer-m", "4"),
        ("label", "seal-buffer-m", "2"),
        ("dataset", "ratios", "0.7,0.1,0.2"),
    ];
    for (sub, flag, want) in checks {
        let help = help_text(sub)?;
        let got = flag_default(&help, flag).ok_or(format!("{sub} --{flag}: no default shown"))?;
        let got_norm = got.split([' ', ',']).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(",");
        ensure!(got_norm == want, "{sub} --{flag} defaults to {got}, expected {want}");
    }
    Ok("IoU 0.25, confusion conf 0.15, buffers 4 m/2 m, split 70:10:20 (library and CLI)".into())
}

// ---------------------------------------------------------------- splits

fn split_determinism() -> Outcome {
    let ids: Vec<String> = (0..538).map(|i| format!("scene_{}_{}", (i % 23) * 320, (i / 23) * 320)).collect();
    let spec = SplitSpec::default();
    let mut outputs = Vec::new();
    for _ in 0..3 {
        let s = split_dataset(&ids, &spec).map_err(|e| e.to_string())?;
        ensure!(
            (s.train.len(), s.val.len(), s.test.len()) == (376, 53, 109),
            "sizes {}/{}/{}",
            s.train.len(),
            s.val.len(),
            s.test.len()
        );
        let mut all: Vec<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        all.sort();
        all.dedup();
        ensure!(all.len() == 538, "splits are not a partition");
        let bytes = format!("{}\n--\n{}\n--\n{}\n", s.train.join("\n"), s.val.join("\n"), s.test.join("\n"));
        outputs.push(bytes.into_bytes());
    }
    ensure!(outputs[0] == outputs[1] && outputs[1] == outputs[2], "runs differ");
    Ok("538 -> 376/53/109, 3 runs byte-identical".into())
}

// ---------------------------------------------------------------- formats

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut n_boxes = 0;
    while n_boxes < 1000 {
        let size = [192u32, 320, 640][rng.gen_range(0..3)];
        let s = size as f64;
        let boxes: Vec<LabeledBox> = (0..10)
            .map(|k| {
                let x1 = rng.gen_range(0.0..s - 1.0);
                let y1 = rng.gen_range(0.0..s - 1.0);
                LabeledBox {
                    ann_id: format!("b{n_boxes}_{k}"),
                    class: ClassLabel::ALL[rng.gen_range(0..3)],
                    bbox: BBox::new(x1, y1, rng.gen_range(x1 + 0.5..=s), rng.gen_range(y1 + 0.5..=s)),
                }
            })
            .collect();
        let file = write_yolo_labels(&boxes, size);
        let back = parse_yolo_labels(&file.text, size, Some(&file.ids)).map_err(|e| e.to_string())?;
        ensure!(back.len() == boxes.len(), "box count changed");
        for b in &back {
            let orig = boxes.iter().find(|o| o.ann_id == b.ann_id).ok_or("id lost")?;
            ensure!(orig.class == b.class, "class changed for {}", b.ann_id);
            for (u, v) in orig.bbox.as_array().iter().zip(b.bbox.as_array()) {
                worst = worst.max((u - v).abs());
            }
        }
        n_boxes += boxes.len();
    }
    ensure!(worst <= 0.5, "worst corner error {worst} px");

    for i in 0..1000 {
        let w = rng.gen_range(1..=64);
        let h = rng.gen_range(1..=64);
        let density = match i % 4 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        };
        let mask = Bitmask::from_fn(w, h, |_, _| rng.gen_bool(density));
        let back = rle::decode(&rle::encode(&mask), w, h).map_err(|e| e.to_string())?;
        ensure!(back == mask, "rle round trip changed mask {i} ({w}x{h})");
    }
    Ok(format!("1000 YOLO boxes, worst corner error {worst:.2e} px; 1000 RLE masks identical"))
}

// ---------------------------------------------------------------- sweep

fn threshold_sweep() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let n_patches = rng.gen_range(1..=3);
        // (patch, rect, class, confidence in percent)
        let mut d_raw: Vec<(usize, [i64; 4], ClassLabel, u32)> = Vec::new();
        let mut g_raw: Vec<(usize, [i64; 4], ClassLabel)> = Vec::new();
        for p in 0..n_patches {
            for _ in 0..rng.gen_range(0..=5) {
                let class = if rng.gen_bool(0.8) { CW } else { UW };
                g_raw.push((p, random_rect(&mut rng), class));
            }
            for _ in 0..rng.gen_range(0..=6) {
                let class = if rng.gen_bool(0.8) { CW } else { HS };
                d_raw.push((p, random_rect(&mut rng), class, rng.gen_range(0..=20) * 5));
            }
        }
        if !g_raw.iter().any(|g| g.2 == CW) {
            g_raw.push((0, random_rect(&mut rng), CW));
        }

        let mut best: Option<(u32, (i64, i64))> = None;
        for thr in 0..=100u32 {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for p in 0..n_patches {
                let pd: Vec<([i64; 4], u32)> = d_raw
                    .iter()
                    .filter(|d| d.0 == p && d.2 == CW && d.3 >= thr)
                    .map(|d| (d.1, d.3))
                    .collect();
                let pg: Vec<[i64; 4]> = g_raw.iter().filter(|g| g.0 == p && g.2 == CW).map(|g| g.1).collect();
                let m = exhaustive_match(&pd, &pg, (1, 4)).len();
                tp += m;
                fp += pd.len() - m;
                fn_ += pg.len() - m;
            }
            let f = f1_frac(tp, fp, fn_);
            if best.is_none_or(|(_, b)| frac_cmp(f, b).is_gt()) {
                best = Some((thr, f));
            }
        }
        let (want_thr, want_f) = best.expect("grid non-empty");

        let dets: Vec<Detection> = d_raw
            .iter()
            .map(|d| Detection {
                patch_id: format!("p{}", d.0),
                class: d.2,
                bbox: to_bbox(&d.1),
                confidence: d.3 as f64 / 100.0,
            })
            .collect();
        let gts: Vec<GtBox> = g_raw
            .iter()
            .map(|g| GtBox {
                patch_id: format!("p{}", g.0),
                class: g.2,
                bbox: to_bbox(&g.1),
            })
            .collect();
        let got = sweep_threshold(&dets, &gts, 0.25).map_err(|e| format!("case {case}: {e}"))?;
        let want_f1 = want_f.0 as f64 / want_f.1 as f64;
        ensure!(
            got.threshold == want_thr as f64 / 100.0,
            "case {case}: threshold {} expected {}",
            got.threshold,
            want_thr as f64 / 100.0
        );
        ensure!((got.certain_f1 - want_f1).abs() < 1e-12, "case {case}: F1 {} expected {want_f1}", got.certain_f1);
    }
    Ok("100 fixtures match the exhaustive grid argmax".into())
}

// ---------------------------------------------------------------- report

fn report_golden() -> Outcome {
    let golden = include_str!("../../core/tests/fixtures/table2_yolo_sam.txt");
    let mut metrics = ClassMetrics::new(
        ClassScore::from_rates(0.735, 0.582, 0.647),
        ClassScore::from_rates(0.618, 0.372, 0.461),
        ClassScore::from_rates(0.858, 0.627, 0.722),
        ClassScore::from_rates(0.691, 0.731, 0.703),
    );
    metrics.mf1 = 0.604;
    let got = emit_report(&[ReportRow {
        approach: "YOLO-SAM".into(),
        metrics,
    }]);
    ensure!(got == golden, "report differs from golden:\n{got}\nvs\n{golden}");
    Ok("YOLO-SAM row matches golden file".into())
}

// ---------------------------------------------------------------- pipeline

fn seeker(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seeker"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "seeker {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("inside root").to_path_buf();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn run_pipeline(root: &Path, jobs: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let (synth, labels, dataset, eval) = (p("synth"), p("labels"), p("dataset"), p("eval"));
    let manifest = p("synth/manifest.csv");
    let gt = p("synth/gt");
    let runs: Vec<String> = (0..3).map(|k| p(&format!("synth/predictions/run{k}"))).collect();
    seeker(&["--jobs", jobs, "synth", "--out", &synth, "--seed", "11", "--patches", "16", "--runs", "3", "--touch-probability", "0.5"])?;
    seeker(&["--jobs", jobs, "label", "--data", &synth, "--out", &labels, "--backend", "synthetic", "--seed", "7"])?;
    seeker(&["--jobs", jobs, "dataset", "--data", &synth, "--labels", &labels, "--out", &dataset, "--seed", "5"])?;
    let mut eval_args = vec!["--jobs", jobs, "eval", "--gt", &gt, "--manifest", &manifest, "--out", &eval, "--name", "synthetic"];
    for r in &runs {
        eval_args.extend(["--pred", r.as_str()]);
    }
    seeker(&eval_args)?;
    seeker(&["--jobs", jobs, "sweep", "--pred", &runs[0], "--gt", &gt, "--manifest", &manifest, "--out", &eval])?;
    seeker(&["--jobs", jobs, "confusion", "--pred", &runs[0], "--gt", &gt, "--manifest", &manifest, "--out", &eval])?;
    Ok(tree(root))
}

fn pipeline_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_pipeline(&tmp.path().join("a"), "1")?;
    let b = run_pipeline(&tmp.path().join("b"), "8")?;
    let c = run_pipeline(&tmp.path().join("c"), "8")?;
    ensure!(a.contains_key(Path::new("eval/report.txt")), "no report produced");
    ensure!(a.contains_key(Path::new("dataset/dataset.txt")), "no dataset descriptor produced");
    for (name, other) in [("--jobs 8", &b), ("repeat", &c)] {
        let differ: Vec<_> = a
            .keys()
            .chain(other.keys())
            .filter(|k| a.get(*k) != other.get(*k))
            .map(|k| k.display().to_string())
            .collect();
        ensure!(differ.is_empty(), "{name} differs in {differ:?}");
    }
    Ok(format!("synth -> label -> dataset -> eval: {} files identical across runs and --jobs 1/8", a.len()))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("overlap-resolution oracle", resolve_oracle),
        ("synthetic end-to-end labeling", synthetic_labeling),
        ("metric engine", metric_engine),
        ("protocol constants", protocol_constants),
        ("split determinism", split_determinism),
        ("format round trips", format_round_trips),
        ("threshold sweep", threshold_sweep),
        ("report golden file", report_golden),
        ("full pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
