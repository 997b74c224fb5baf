use alpha_iou::eval::*;
use alpha_iou::geometry::{iou, BBox};
use proptest::prelude::*;

/// 101-point AP from the raw step PR curve. Every recall level scans every
/// operating point; recall comparisons stay in integers.
fn brute_force_ap(flags: &[bool], n_gt: usize) -> f64 {
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (rank, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        points.push((tp, rank + 1));
    }
    let mut total = 0.0;
    for k in 0..=100usize {
        let best = points
            .iter()
            .filter(|(tp, _)| tp * 100 >= k * n_gt)
            .map(|&(tp, n)| tp as f64 / n as f64)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

fn all_sequences(len: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << len).map(move |mask| (0..len).map(|i| mask >> i & 1 == 1).collect())
}

#[test]
fn engine_matches_brute_force_on_every_small_instance() {
    let mut checked = 0;
    for n_gt in 1..=4usize {
        for len in 0..=6usize {
            for flags in all_sequences(len) {
                if flags.iter().filter(|&&f| f).count() > n_gt {
                    continue;
                }
                // descending scores, fed to the engine in reverse order
                let mut records: Vec<(f64, bool)> = flags
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| (1.0 - i as f64 / 8.0, f))
                    .collect();
                records.reverse();
                let ap = average_precision(&records, n_gt).unwrap();
                let oracle = brute_force_ap(&flags, n_gt);
                assert!(
                    (ap - oracle).abs() <= 1e-12,
                    "{flags:?} n_gt={n_gt}: {ap} vs {oracle}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn tp_fp_tp_over_two_ground_truths() {
    let records = [(0.9, true), (0.8, false), (0.7, true)];
    let ap = average_precision(&records, 2).unwrap();
    // recall ≤ 0.5 at precision 1, then recall 1 at precision 2/3
    let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
    assert!((ap - expected).abs() < 1e-15);
    assert_eq!(ap, brute_force_ap(&[true, false, true], 2));
}

fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    BBox::new(cx, cy, w, h).unwrap()
}

fn det(bbox: BBox, score: f64) -> Detection {
    Detection {
        image_id: 1,
        category: 0,
        bbox,
        score,
    }
}

fn gt(bbox: BBox) -> GroundTruth {
    GroundTruth {
        image_id: 1,
        category: 0,
        bbox,
    }
}

/// Flags of the best one-to-one assignment, preferring higher-scored
/// detections lexicographically. `dets` are sorted by score.
fn brute_force_flags(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> Vec<bool> {
    fn go(
        i: usize,
        dets: &[Detection],
        gts: &[GroundTruth],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<bool>,
        best: &mut Vec<bool>,
    ) {
        if i == dets.len() {
            if *cur > *best {
                best.clone_from(cur);
            }
            return;
        }
        for j in 0..gts.len() {
            if !used[j] && iou(&dets[i].bbox, &gts[j].bbox) >= thr {
                used[j] = true;
                cur.push(true);
                go(i + 1, dets, gts, thr, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
        cur.push(false);
        go(i + 1, dets, gts, thr, used, cur, best);
        cur.pop();
    }
    let mut best = vec![false; dets.len()];
    go(
        0,
        dets,
        gts,
        thr,
        &mut vec![false; gts.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

#[test]
fn greedy_matching_agrees_with_assignment_search() {
    let truth = [gt(b(0.5, 0.5, 0.4, 0.4))];
    let dets = [
        det(b(0.52, 0.5, 0.4, 0.4), 0.9),
        det(b(0.5, 0.49, 0.38, 0.4), 0.6),
    ];
    for thr in [0.5, 0.75, 0.9] {
        let greedy: Vec<bool> = match_detections(&dets, &truth, thr)
            .iter()
            .map(|f| f.tp)
            .collect();
        assert_eq!(greedy, brute_force_flags(&dets, &truth, thr), "thr={thr}");
    }
    let flags = match_detections(&dets, &truth, 0.5);
    assert!(flags[0].tp && !flags[1].tp);
}

#[test]
fn single_detection_at_iou_point_six() {
    let g = b(0.5, 0.5, 0.625, 0.5);
    let d = b(0.5, 0.5, 0.375, 0.5);
    assert_eq!(iou(&d, &g), 0.6);
    let report = evaluate(&[det(d, 1.0)], &[gt(g)], &coco_thresholds()).unwrap();
    assert_eq!(report.map_50_95, Some(0.3));
    for t in report.ap_per_threshold {
        assert_eq!(
            t.ap,
            if t.threshold <= 0.6 { 1.0 } else { 0.0 },
            "t={}",
            t.threshold
        );
    }
}

fn instance() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
    let bbox = (0.1f64..0.9, 0.1f64..0.9, 0.05f64..0.2, 0.05f64..0.2)
        .prop_map(|(cx, cy, w, h)| b(cx, cy, w, h));
    let gts = prop::collection::vec((bbox.clone(), 0u64..3, 0u64..2), 1..8);
    gts.prop_flat_map(move |gts| {
        let n = gts.len();
        let jitter = (
            0usize..n,
            -0.05f64..0.05,
            -0.05f64..0.05,
            0.7f64..1.3,
            0.01f64..1.0,
        );
        let dets = prop::collection::vec(jitter, 0..12);
        (Just(gts), dets)
    })
    .prop_map(|(gts, jit)| {
        let truth: Vec<GroundTruth> = gts
            .iter()
            .map(|&(bbox, image_id, category)| GroundTruth {
                image_id,
                category,
                bbox,
            })
            .collect();
        let dets = jit
            .iter()
            .map(|&(k, dx, dy, s, score)| {
                let g = truth[k];
                let [cx, cy, w, h] = g.bbox.params();
                Detection {
                    image_id: g.image_id,
                    category: g.category,
                    bbox: b(cx + dx, cy + dy, w * s, h),
                    score,
                }
            })
            .collect();
        (dets, truth)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ap_is_nonincreasing_in_threshold((dets, gts) in instance()) {
        let report = evaluate(&dets, &gts, &coco_thresholds()).unwrap();
        for w in report.ap_per_threshold.windows(2) {
            prop_assert!(w[1].ap <= w[0].ap);
        }
        prop_assert!(report.ap_per_threshold.iter().all(|t| (0.0..=1.0).contains(&t.ap)));
        let mean = report.ap_per_threshold.iter().map(|t| t.ap).sum::<f64>() / 10.0;
        prop_assert!((report.map_50_95.unwrap() - mean).abs() < 1e-15);
    }

    #[test]
    fn scores_only_matter_through_their_order((dets, gts) in instance(), c in 0.01f64..1.0) {
        let scaled: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score * c, ..*d }).collect();
        let a = evaluate(&dets, &gts, &coco_thresholds()).unwrap();
        let s = evaluate(&scaled, &gts, &coco_thresholds()).unwrap();
        prop_assert_eq!(a.ap_per_threshold, s.ap_per_threshold);
    }

    #[test]
    fn histogram_counts_are_nested((dets, gts) in instance()) {
        let report = evaluate(&dets, &gts, &coco_thresholds()).unwrap();
        prop_assert_eq!(report.iou_histogram.len(), HISTOGRAM_BUCKETS.len());
        for w in report.iou_histogram.windows(2) {
            prop_assert!(w[1].count <= w[0].count);
        }
    }

    #[test]
    fn nms_keeps_a_well_separated_subset((dets, _) in instance()) {
        let kept = nms(&dets, NMS_IOU);
        prop_assert!(!dets.is_empty() || kept.is_empty());
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(dets.contains(a));
            for c in &kept[i + 1..] {
                prop_assert!(a.score >= c.score);
                prop_assert!(iou(&a.bbox, &c.bbox) <= NMS_IOU);
            }
        }
        if let Some(top) = dets.iter().map(|d| d.score).reduce(f64::max) {
            prop_assert_eq!(kept[0].score, top);
        }
    }
}
