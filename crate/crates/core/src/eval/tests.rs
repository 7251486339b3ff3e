use super::*;
use crate::geometry::iou;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;

fn det(patch: &str, class: ClassLabel, b: [f64; 4], conf: f64) -> Detection {
    Detection {
        patch_id: patch.into(),
        class,
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        confidence: conf,
    }
}

fn gt(patch: &str, class: ClassLabel, b: [f64; 4]) -> GtBox {
    GtBox {
        patch_id: patch.into(),
        class,
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
    }
}

const CW: ClassLabel = ClassLabel::CertainWhale;
const UW: ClassLabel = ClassLabel::UncertainWhale;
const HS: ClassLabel = ClassLabel::HarpSeal;

/// Box of width 10 at x offset `dx` from (0,0,10,10); IoU with it is (10-dx)/(10+dx).
fn shifted(dx: f64) -> [f64; 4] {
    [dx, 0.0, 10.0 + dx, 10.0]
}

// ---- exhaustive oracle ---------------------------------------------------

fn iou0(a: &BBox, b: &BBox) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

fn canonical_box_cmp(a: &BBox, b: &BBox) -> Ordering {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| x.total_cmp(&y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Key per detection: (matched, IoU, earlier GT preferred).
type Key = (u8, f64, i64);

fn key_cmp(a: &[Key], b: &[Key]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2));
        if o.is_ne() {
            return o;
        }
    }
    Ordering::Equal
}

/// Enumerates every one-to-one assignment with IoU ≥ thr and keeps the
/// lexicographically best key sequence in processing order. Returns tp.
fn exhaustive_tp(dets: &[&Detection], gts: &[&GtBox], thr: f64) -> usize {
    let mut gts: Vec<&GtBox> = gts.to_vec();
    gts.sort_by(|a, b| canonical_box_cmp(&a.bbox, &b.bbox));
    let best_iou = |d: &Detection| gts.iter().map(|g| iou0(&d.bbox, &g.bbox)).fold(0.0, f64::max);
    let mut dets: Vec<&Detection> = dets.to_vec();
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(best_iou(b).total_cmp(&best_iou(a)))
            .then(canonical_box_cmp(&a.bbox, &b.bbox))
    });

    fn rec(k: usize, dets: &[&Detection], gts: &[&GtBox], thr: f64, used: &mut Vec<bool>, cur: &mut Vec<Key>, best: &mut Option<Vec<Key>>) {
        if k == dets.len() {
            if best.as_ref().is_none_or(|b| key_cmp(cur, b).is_gt()) {
                *best = Some(cur.clone());
            }
            return;
        }
        cur.push((0, 0.0, 0));
        rec(k + 1, dets, gts, thr, used, cur, best);
        cur.pop();
        for g in 0..gts.len() {
            let v = iou0(&dets[k].bbox, &gts[g].bbox);
            if !used[g] && v >= thr {
                used[g] = true;
                cur.push((1, v, -(g as i64)));
                rec(k + 1, dets, gts, thr, used, cur, best);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut best = None;
    rec(0, &dets, &gts, thr, &mut vec![false; gts.len()], &mut Vec::new(), &mut best);
    best.unwrap().iter().filter(|k| k.0 == 1).count()
}

fn oracle_tp(dets: &[Detection], gts: &[GtBox], thr: f64, conf: f64, in_group: impl Fn(ClassLabel) -> bool) -> usize {
    let mut patches: Vec<&str> = dets.iter().map(|d| d.patch_id.as_str()).chain(gts.iter().map(|g| g.patch_id.as_str())).collect();
    patches.sort();
    patches.dedup();
    patches
        .iter()
        .map(|p| {
            let d: Vec<&Detection> = dets.iter().filter(|d| d.patch_id == *p && in_group(d.class) && d.confidence >= conf).collect();
            let g: Vec<&GtBox> = gts.iter().filter(|g| g.patch_id == *p && in_group(g.class)).collect();
            exhaustive_tp(&d, &g, thr)
        })
        .sum()
}

fn random_instance(rng: &mut impl Rng, max_d: usize, max_g: usize) -> (Vec<Detection>, Vec<GtBox>) {
    let classes = [CW, UW, HS];
    let patches = ["a", "b"];
    let rbox = |rng: &mut dyn rand::RngCore| {
        let x = rng.gen_range(0..16) as f64;
        let y = rng.gen_range(0..16) as f64;
        let w = rng.gen_range(2..9) as f64;
        let h = rng.gen_range(2..9) as f64;
        [x, y, x + w, y + h]
    };
    let nd = rng.gen_range(0..=max_d);
    let ng = rng.gen_range(0..=max_g);
    let dets = (0..nd)
        .map(|_| {
            let b = rbox(rng);
            det(patches[rng.gen_range(0..2)], classes[rng.gen_range(0..3)], b, rng.gen_range(1..10) as f64 / 10.0)
        })
        .collect();
    let gts = (0..ng)
        .map(|_| {
            let b = rbox(rng);
            gt(patches[rng.gen_range(0..2)], classes[rng.gen_range(0..3)], b)
        })
        .collect();
    (dets, gts)
}

// ---- iou and matching ------------------------------------------------------

#[test]
fn iou_examples() {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0);
    assert_eq!(iou(&a, &a), Some(1.0));
    assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), Some(0.0));
    assert!((iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)).unwrap() - 1.0 / 7.0).abs() < 1e-15);
}

#[test]
fn single_match_above_threshold() {
    // dx = 5.3846 gives IoU 0.3
    let dets = [det("p", CW, shifted(70.0 / 13.0), 0.5)];
    let gts = [gt("p", CW, shifted(0.0))];
    assert!((iou(&dets[0].bbox, &gts[0].bbox).unwrap() - 0.3).abs() < 1e-9);
    let [m, _, _] = match_class_aware(&dets, &gts, 0.25, 0.0);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
}

#[test]
fn confidence_beats_overlap() {
    // conf 0.9 at IoU ~0.26 and conf 0.8 at IoU ~0.9 on one GT
    let low_overlap = det("p", CW, shifted(10.0 * 0.74 / 1.26), 0.9);
    let high_overlap = det("p", CW, shifted(10.0 * 0.1 / 1.9), 0.8);
    let gts = [gt("p", CW, shifted(0.0))];
    assert!((iou(&low_overlap.bbox, &gts[0].bbox).unwrap() - 0.26).abs() < 1e-9);
    let dets = [low_overlap, high_overlap];
    let [m, _, _] = match_class_aware(&dets, &gts, 0.25, 0.0);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
    assert_eq!(m.pairs[0].det, 0);
    // the exhaustive oracle under the same ordering agrees
    assert_eq!(oracle_tp(&dets, &gts, 0.25, 0.0, |c| c == CW), 1);
}

#[test]
fn equal_confidence_prefers_larger_overlap() {
    let gts = [gt("p", CW, shifted(0.0))];
    let dets = [det("p", CW, shifted(4.0), 0.5), det("p", CW, shifted(1.0), 0.5)];
    let [m, _, _] = match_class_aware(&dets, &gts, 0.25, 0.0);
    assert_eq!(m.pairs, vec![MatchPair { det: 1, gt: 0, iou: 9.0 / 11.0 }]);
}

#[test]
fn boxes_in_other_patches_never_match() {
    let [m, _, _] = match_class_aware(&[det("a", CW, shifted(0.0), 0.9)], &[gt("b", CW, shifted(0.0))], 0.25, 0.0);
    assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
}

#[test]
fn greedy_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..300 {
        let (dets, gts) = random_instance(&mut rng, 6, 6);
        let conf = [0.0, 0.35][case % 2];
        let m = match_class_aware(&dets, &gts, 0.25, conf);
        for (k, class) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(m[k].tp, oracle_tp(&dets, &gts, 0.25, conf, |c| c == *class), "case {case} class {class}");
        }
        let merged = score(&dets, &gts, 0.25, conf).whale_overall;
        assert_eq!(merged.tp, oracle_tp(&dets, &gts, 0.25, conf, |c| c.is_whale()), "case {case}");
    }
}

// ---- score ----------------------------------------------------------------

#[test]
fn two_tp_one_fp_on_three_gt() {
    let gts = [gt("p", CW, [0.0, 0.0, 10.0, 10.0]), gt("p", CW, [20.0, 0.0, 30.0, 10.0]), gt("p", CW, [40.0, 0.0, 50.0, 10.0])];
    let dets = [det("p", CW, [0.0, 0.0, 10.0, 10.0], 0.9), det("p", CW, [20.0, 0.0, 30.0, 10.0], 0.9), det("p", CW, [80.0, 80.0, 90.0, 90.0], 0.9)];
    let s = score(&dets, &gts, 0.25, 0.0).certain_whale;
    assert_eq!((s.tp, s.fp, s.fn_), (2, 1, 1));
    for v in [s.precision, s.recall, s.f1] {
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn no_detections_scores_zero() {
    let m = score(&[], &[gt("p", CW, shifted(0.0)), gt("p", HS, shifted(20.0))], 0.25, 0.0);
    for c in m.columns() {
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
    }
    assert_eq!(m.mf1, 0.0);
}

#[test]
fn wrong_whale_class_counts_in_merged_class() {
    let m = score(&[det("p", UW, shifted(0.0), 0.9)], &[gt("p", CW, shifted(0.0))], 0.25, 0.0);
    assert_eq!((m.certain_whale.tp, m.certain_whale.fn_), (0, 1));
    assert_eq!((m.uncertain_whale.tp, m.uncertain_whale.fp), (0, 1));
    assert_eq!((m.whale_overall.tp, m.whale_overall.fp, m.whale_overall.fn_), (1, 0, 0));
}

#[test]
fn mf1_is_mean_of_three_classes() {
    let m = ClassMetrics::new(
        ClassScore::from_counts(1, 0, 0),
        ClassScore::from_counts(0, 1, 1),
        ClassScore::from_counts(5, 5, 5),
        ClassScore::from_counts(1, 1, 0),
    );
    assert!((m.mf1 - (1.0 + 0.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn score_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = random_instance(&mut rng, 12, 12);
        let conf = rng.gen_range(0..10) as f64 / 10.0;
        let m = score(&dets, &gts, 0.25, conf);
        for class in ClassLabel::ALL {
            let s = m.class(class);
            prop_assert_eq!(s.tp + s.fn_, gts.iter().filter(|g| g.class == class).count());
            prop_assert_eq!(s.tp + s.fp, dets.iter().filter(|d| d.class == class && d.confidence >= conf).count());
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        prop_assert!(m.whale_overall.tp >= m.certain_whale.tp + m.uncertain_whale.tp);

        // permutation invariance
        let (mut d2, mut g2) = (dets.clone(), gts.clone());
        d2.shuffle(&mut rng);
        g2.shuffle(&mut rng);
        prop_assert_eq!(score(&d2, &g2, 0.25, conf), m);

        // raising the threshold never adds kept detections
        let higher = score(&dets, &gts, 0.25, conf + 0.1);
        for (a, b) in higher.columns().iter().zip(m.columns()) {
            prop_assert!(a.tp + a.fp <= b.tp + b.fp);
        }
    }
}

// ---- sweep -----------------------------------------------------------------

/// Independent full-grid evaluation of certain-whale F1 using the oracle matcher.
fn grid_oracle(dets: &[Detection], gts: &[GtBox]) -> Vec<(f64, f64)> {
    let n_gt = gts.iter().filter(|g| g.class == CW).count();
    (0..=100)
        .map(|i| {
            let thr = i as f64 / 100.0;
            let kept = dets.iter().filter(|d| d.class == CW && d.confidence >= thr).count();
            let tp = oracle_tp(dets, gts, 0.25, thr, |c| c == CW);
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (kept + n_gt) as f64 };
            (thr, f1)
        })
        .collect()
}

#[test]
fn sweep_ties_pick_lowest_threshold() {
    let r = sweep_threshold(&[det("p", CW, shifted(0.0), 0.4)], &[gt("p", CW, shifted(0.0))], 0.25).unwrap();
    assert_eq!(r.threshold, 0.0);
    assert_eq!(r.certain_f1, 1.0);
}

#[test]
fn sweep_skips_past_false_positive() {
    let dets = [det("p", CW, shifted(0.0), 0.4), det("p", CW, [50.0, 50.0, 60.0, 60.0], 0.3)];
    let r = sweep_threshold(&dets, &[gt("p", CW, shifted(0.0))], 0.25).unwrap();
    assert_eq!(r.threshold, 0.31);
    assert_eq!(r.certain_f1, 1.0);
}

#[test]
fn sweep_needs_certain_ground_truth() {
    let err = sweep_threshold(&[], &[], 0.25).unwrap_err();
    assert!(err.to_string().contains("nothing to optimize"));
    assert!(sweep_threshold(&[], &[gt("p", HS, shifted(0.0))], 0.25).is_err());
}

#[test]
fn sweep_reproduces_full_grid_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..40 {
        let (mut dets, mut gts) = random_instance(&mut rng, 6, 6);
        gts.push(gt("a", CW, [1.0, 1.0, 6.0, 6.0]));
        for d in &mut dets {
            d.confidence = rng.gen_range(0..=100) as f64 / 100.0;
        }
        let r = sweep_threshold(&dets, &gts, 0.25).unwrap();
        let grid = grid_oracle(&dets, &gts);
        let max = grid.iter().map(|g| g.1).fold(0.0, f64::max);
        assert!((r.certain_f1 - max).abs() < 1e-12, "case {case}");
        let first = grid.iter().find(|g| (g.1 - max).abs() < 1e-12).unwrap().0;
        assert_eq!(r.threshold, first, "case {case}");
    }
}

// ---- confusion -------------------------------------------------------------

#[test]
fn seal_detection_on_whale() {
    let cm = confusion_matrix(&[det("p", HS, shifted(10.0 / 3.0), 0.5)], &[gt("p", CW, shifted(0.0))], 0.15, 0.25);
    assert_eq!(cm.get(0, 2), 1);
    assert_eq!(cm.counts.iter().flatten().sum::<u64>(), 1);
}

#[test]
fn missed_seals_go_to_background() {
    let cm = confusion_matrix(&[], &[gt("p", HS, shifted(0.0)), gt("p", HS, shifted(30.0))], 0.15, 0.25);
    assert_eq!(cm.get(2, ConfusionMatrix::BACKGROUND), 2);
}

#[test]
fn low_confidence_detections_are_dropped() {
    let cm = confusion_matrix(&[det("p", HS, shifted(0.0), 0.1)], &[], 0.15, 0.25);
    assert_eq!(cm, ConfusionMatrix::default());
}

proptest! {
    #[test]
    fn confusion_mass_is_conserved(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = random_instance(&mut rng, 12, 12);
        let cm = confusion_matrix(&dets, &gts, 0.15, 0.25);
        prop_assert_eq!(cm.get(3, 3), 0);
        for class in ClassLabel::ALL {
            let i = class.index();
            prop_assert_eq!(cm.row_sum(i), gts.iter().filter(|g| g.class == class).count() as u64);
            prop_assert_eq!(cm.col_sum(i), dets.iter().filter(|d| d.class == class && d.confidence >= 0.15).count() as u64);
        }
        let matched: u64 = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| cm.get(r, c)).sum();
        prop_assert_eq!(matched as usize, oracle_tp(&dets, &gts, 0.25, 0.15, |_| true));
    }
}

// ---- aggregation -----------------------------------------------------------

fn metrics_with_f1(f1: f64) -> ClassMetrics {
    let s = ClassScore::from_rates(f1, f1, f1);
    ClassMetrics::new(s, s, s, s)
}

#[test]
fn one_run_is_identity() {
    let m = score(&[det("p", CW, shifted(0.0), 0.9)], &[gt("p", CW, shifted(0.0))], 0.25, 0.0);
    assert_eq!(aggregate_runs(&[m]).unwrap(), m);
}

#[test]
fn two_runs_average() {
    let a = aggregate_runs(&[metrics_with_f1(0.6), metrics_with_f1(0.8)]).unwrap();
    assert!((a.certain_whale.f1 - 0.7).abs() < 1e-12);
    assert!((a.mf1 - 0.7).abs() < 1e-12);
    assert_eq!(a.runs, 2);
}

#[test]
fn empty_run_list_is_error() {
    assert!(matches!(aggregate_runs(&[]), Err(EvalError::NoRuns)));
}

#[test]
fn five_random_runs_match_fieldwise_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let runs: Vec<ClassMetrics> = (0..5)
        .map(|_| {
            let (d, g) = random_instance(&mut rng, 12, 12);
            score(&d, &g, 0.25, 0.0)
        })
        .collect();
    let a = aggregate_runs(&runs).unwrap();
    for k in 0..4 {
        let mut p = 0.0;
        let mut r = 0.0;
        let mut f = 0.0;
        let mut tp = 0;
        for run in &runs {
            let c = run.columns()[k];
            p += c.precision;
            r += c.recall;
            f += c.f1;
            tp += c.tp;
        }
        let c = a.columns()[k];
        assert!((c.precision - p / 5.0).abs() < 1e-12);
        assert!((c.recall - r / 5.0).abs() < 1e-12);
        assert!((c.f1 - f / 5.0).abs() < 1e-12);
        assert_eq!(c.tp, tp);
    }
    let mf1: f64 = runs.iter().map(|r| r.mf1).sum::<f64>() / 5.0;
    assert!((a.mf1 - mf1).abs() < 1e-12);
}

// ---- report ----------------------------------------------------------------

#[test]
fn empty_report_is_header_only() {
    let text = emit_report(&[]);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("approach"));
    assert!(parse_report(&text).unwrap().is_empty());
}

proptest! {
    #[test]
    fn report_round_trip(vals in proptest::collection::vec(0.0f64..=1.0, 13), name in "[A-Za-z][A-Za-z0-9 -]{0,20}[A-Za-z0-9]") {
        let col = |k: usize| ClassScore::from_rates(vals[1 + 3 * k], vals[2 + 3 * k], vals[3 + 3 * k]);
        let mut metrics = ClassMetrics::new(col(0), col(1), col(2), col(3));
        metrics.mf1 = vals[0];
        let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
        let rows = vec![ReportRow { approach: name.clone(), metrics }];
        let back = parse_report(&emit_report(&rows)).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0].approach, &name);
        let m = back[0].metrics;
        prop_assert!((m.mf1 - metrics.mf1).abs() * 100.0 <= 0.05 + 1e-9);
        for (a, b) in m.columns().iter().zip(metrics.columns()) {
            for (x, y) in [(a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1)] {
                prop_assert!((x - y).abs() * 100.0 <= 0.05 + 1e-9);
            }
        }
    }
}
