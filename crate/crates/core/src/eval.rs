//! Detection evaluation: greedy NMS, per-threshold matching, 101-point
//! interpolated AP and the mAP aggregates over IoU-threshold ranges.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// IoU threshold used for NMS before matching.
pub const NMS_IOU: f64 = 0.5;
/// Lower edges of the matched-IoU histogram buckets.
pub const HISTOGRAM_BUCKETS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub category: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: u64,
    pub category: u64,
    pub bbox: BBox,
}

/// `start, start + step, …` up to and including `stop`.
pub fn threshold_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + THRESHOLD_EPS).floor() as usize;
    // built from integer multiples and rounded so 0.5 + 9 * 0.05 prints as 0.95
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect()
}

/// Thresholds `0.50, 0.55, …, 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    threshold_range(0.5, 0.95, 0.05)
}

/// Indices of `dets` ordered by descending score; equal scores keep input
/// order.
fn score_order<T>(items: &[T], score: impl Fn(&T) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        score(&items[b])
            .partial_cmp(&score(&items[a]))
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy non-maximum suppression. A detection survives iff its IoU with
/// every higher-ranked survivor is at most `iou_thresh`. Output is in
/// descending score order.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets, |d| d.score) {
        let d = dets[i];
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_thresh) {
            kept.push(d);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchFlag {
    pub tp: bool,
    /// IoU with the matched ground truth, zero for false positives.
    pub iou: f64,
}

/// Greedy one-to-one matching of score-sorted detections against the ground
/// truths of one image and category. Each detection takes the unmatched
/// ground truth of highest IoU if that IoU reaches `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> Vec<MatchFlag> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(j, _)| !taken[*j])
                .map(|(j, g)| (j, iou(&d.bbox, &g.bbox)))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            match best {
                Some((j, v)) if v >= iou_threshold => {
                    taken[j] = true;
                    MatchFlag { tp: true, iou: v }
                }
                _ => MatchFlag {
                    tp: false,
                    iou: 0.0,
                },
            }
        })
        .collect()
}

/// 101-point interpolated AP for one category.
///
/// `records` holds `(score, is_tp)` for every detection of the category. The
/// precision at each recall level `r ∈ {0, 0.01, …, 1}` is the maximum
/// precision over operating points with recall at least `r`, or zero if
/// recall never reaches `r`.
pub fn average_precision(records: &[(f64, bool)], n_gt: usize) -> Result<f64> {
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let order = score_order(records, |r| r.0);
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        if records[i].1 {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    // precision envelope: running max from the right
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let total: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Ok(total / 101.0)
}

/// Per category: `(score, is_tp)` records and the ground-truth count.
pub type CategoryRecords = BTreeMap<u64, (Vec<(f64, bool)>, usize)>;

/// Mean of per-category APs over categories with at least one ground truth.
pub fn mean_average_precision(per_category: &CategoryRecords) -> Result<f64> {
    let aps: Vec<f64> = per_category
        .values()
        .filter(|(_, n)| *n > 0)
        .map(|(recs, n)| average_precision(recs, *n))
        .collect::<Result<_>>()?;
    if aps.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub iou_threshold: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_per_threshold: Vec<ThresholdAp>,
    /// Mean AP over 0.50..0.95; present when all ten thresholds were evaluated.
    pub map_50_95: Option<f64>,
    /// Mean AP over 0.75..0.95; present when all five thresholds were evaluated.
    pub map_75_95: Option<f64>,
    /// Count of true positives at the 0.5 threshold whose matched IoU reaches
    /// each bucket's lower edge.
    pub iou_histogram: Vec<HistogramBucket>,
}

impl EvalReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.ap_per_threshold
            .iter()
            .find(|t| (t.threshold - threshold).abs() < THRESHOLD_EPS)
            .map(|t| t.ap)
    }

    fn mean_over(&self, thresholds: &[f64]) -> Option<f64> {
        let aps: Option<Vec<f64>> = thresholds.iter().map(|&t| self.ap_at(t)).collect();
        aps.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_histogram_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iou_threshold,count")?;
        for b in &self.iou_histogram {
            writeln!(out, "{},{}", b.iou_threshold, b.count)?;
        }
        Ok(())
    }
}

type GroupKey = (u64, u64);

/// NMS at [`NMS_IOU`] per image and category, then matching and AP at every
/// threshold.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::param(
            "thresholds",
            "at least one threshold is required",
        ));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("thresholds", "must be sorted ascending"));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::param("thresholds", format!("{t} is outside (0, 1]")));
    }

    let mut det_groups: BTreeMap<GroupKey, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        det_groups
            .entry((d.image_id, d.category))
            .or_default()
            .push(*d);
    }
    let mut gt_groups: BTreeMap<GroupKey, Vec<GroundTruth>> = BTreeMap::new();
    for g in gts {
        gt_groups
            .entry((g.image_id, g.category))
            .or_default()
            .push(*g);
    }
    let kept: BTreeMap<GroupKey, Vec<Detection>> = det_groups
        .into_iter()
        .map(|(k, v)| (k, nms(&v, NMS_IOU)))
        .collect();

    let categories: BTreeSet<u64> = gts
        .iter()
        .map(|g| g.category)
        .chain(dets.iter().map(|d| d.category))
        .collect();
    let mut n_gt: BTreeMap<u64, usize> = categories.iter().map(|&c| (c, 0)).collect();
    for g in gts {
        *n_gt.entry(g.category).or_default() += 1;
    }

    let empty_gts: Vec<GroundTruth> = Vec::new();
    let run_matching = |threshold: f64| {
        let mut per_category: CategoryRecords =
            n_gt.iter().map(|(&c, &n)| (c, (Vec::new(), n))).collect();
        let mut matched_ious = Vec::new();
        for (key, group) in &kept {
            let group_gts = gt_groups.get(key).unwrap_or(&empty_gts);
            let flags = match_detections(group, group_gts, threshold);
            let records = &mut per_category.get_mut(&key.1).expect("category registered").0;
            for (d, f) in group.iter().zip(&flags) {
                records.push((d.score, f.tp));
                if f.tp {
                    matched_ious.push(f.iou);
                }
            }
        }
        (per_category, matched_ious)
    };

    let mut ap_per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let (per_category, _) = run_matching(t);
        ap_per_threshold.push(ThresholdAp {
            threshold: t,
            ap: mean_average_precision(&per_category)?,
        });
    }

    let (_, matched_ious) = run_matching(HISTOGRAM_BUCKETS[0]);
    let iou_histogram = HISTOGRAM_BUCKETS
        .iter()
        .map(|&edge| HistogramBucket {
            iou_threshold: edge,
            count: matched_ious.iter().filter(|&&v| v >= edge).count(),
        })
        .collect();

    let mut report = EvalReport {
        ap_per_threshold,
        map_50_95: None,
        map_75_95: None,
        iou_histogram,
    };
    report.map_50_95 = report.mean_over(&coco_thresholds());
    report.map_75_95 = report.mean_over(&threshold_range(0.75, 0.95, 0.05));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(bbox: BBox, score: f64) -> Detection {
        Detection {
            image_id: 1,
            category: 1,
            bbox,
            score,
        }
    }

    fn gt(bbox: BBox) -> GroundTruth {
        GroundTruth {
            image_id: 1,
            category: 1,
            bbox,
        }
    }

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    /// Concentric pair with IoU exactly 0.6 in floating point.
    fn iou_060_pair() -> (BBox, BBox) {
        (b(0.5, 0.5, 0.375, 0.5), b(0.5, 0.5, 0.625, 0.5))
    }

    #[test]
    fn thresholds_are_clean() {
        let t = coco_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        assert_eq!(
            threshold_range(0.75, 0.95, 0.05),
            vec![0.75, 0.8, 0.85, 0.9, 0.95]
        );
    }

    #[test]
    fn nms_cases() {
        let a = b(0.3, 0.3, 0.2, 0.2);
        assert_eq!(nms(&[det(a, 0.4)], 0.5).len(), 1);
        let kept = nms(&[det(a, 0.8), det(a, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
        let far = b(0.8, 0.8, 0.2, 0.2);
        assert_eq!(nms(&[det(a, 0.8), det(far, 0.9)], 0.5).len(), 2);
    }

    #[test]
    fn nms_tie_keeps_earlier() {
        let a = b(0.3, 0.3, 0.2, 0.2);
        let first = det(a, 0.7);
        let second = Detection {
            image_id: 2,
            ..first
        };
        let kept = nms(&[first, second], 0.5);
        assert_eq!(kept, vec![first]);
    }

    #[test]
    fn match_threshold() {
        let (p, g) = iou_060_pair();
        assert!(match_detections(&[det(p, 0.9)], &[gt(g)], 0.5)[0].tp);
        assert!(!match_detections(&[det(p, 0.9)], &[gt(g)], 0.75)[0].tp);
    }

    #[test]
    fn two_dets_one_gt() {
        let g = b(0.5, 0.5, 0.4, 0.4);
        let d1 = det(b(0.51, 0.5, 0.4, 0.4), 0.9);
        let d2 = det(b(0.5, 0.49, 0.4, 0.4), 0.6);
        let flags = match_detections(&[d1, d2], &[gt(g)], 0.5);
        assert!(flags[0].tp);
        assert!(!flags[1].tp);
    }

    #[test]
    fn ap_trivial_cases() {
        assert_eq!(average_precision(&[(0.9, true)], 1).unwrap(), 1.0);
        assert_eq!(average_precision(&[], 3).unwrap(), 0.0);
        assert!(matches!(
            average_precision(&[(0.5, false)], 0),
            Err(Error::NoGroundTruth)
        ));
    }

    #[test]
    fn ap_tp_fp_tp() {
        // recall 0.5 at precision 1, recall 1 at precision 2/3
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        let expected = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-15);
    }

    #[test]
    fn perfect_detector() {
        let gts = vec![gt(b(0.3, 0.3, 0.2, 0.2)), gt(b(0.7, 0.6, 0.3, 0.2))];
        let dets: Vec<Detection> = gts.iter().map(|g| det(g.bbox, 1.0)).collect();
        let r = evaluate(&dets, &gts, &coco_thresholds()).unwrap();
        assert!(r.ap_per_threshold.iter().all(|t| t.ap == 1.0));
        assert_eq!(r.map_50_95, Some(1.0));
        assert_eq!(r.map_75_95, Some(1.0));
    }

    #[test]
    fn single_detection_at_iou_060() {
        let (p, g) = iou_060_pair();
        assert_eq!(iou(&p, &g), 0.6);
        let r = evaluate(&[det(p, 0.9)], &[gt(g)], &coco_thresholds()).unwrap();
        for t in r.ap_per_threshold.iter() {
            let expected = if t.threshold <= 0.6 { 1.0 } else { 0.0 };
            assert_eq!(t.ap, expected, "threshold {}", t.threshold);
        }
        assert_eq!(r.map_50_95, Some(0.3));
        let counts: Vec<usize> = r.iou_histogram.iter().map(|h| h.count).collect();
        assert_eq!(counts, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn empty_detections() {
        let r = evaluate(&[], &[gt(b(0.5, 0.5, 0.2, 0.2))], &coco_thresholds()).unwrap();
        assert!(r.ap_per_threshold.iter().all(|t| t.ap == 0.0));
        assert_eq!(r.map_50_95, Some(0.0));
    }

    #[test]
    fn no_ground_truth_errors() {
        let d = det(b(0.5, 0.5, 0.2, 0.2), 0.5);
        assert!(matches!(
            evaluate(&[d], &[], &[0.5]),
            Err(Error::NoGroundTruth)
        ));
    }

    #[test]
    fn partial_thresholds_leave_aggregates_empty() {
        let g = b(0.5, 0.5, 0.2, 0.2);
        let r = evaluate(&[det(g, 1.0)], &[gt(g)], &[0.5, 0.75]).unwrap();
        assert_eq!(r.map_50_95, None);
        assert_eq!(r.ap_at(0.75), Some(1.0));
    }

    #[test]
    fn rejects_unsorted_thresholds() {
        let g = b(0.5, 0.5, 0.2, 0.2);
        assert!(evaluate(&[], &[gt(g)], &[0.7, 0.5]).is_err());
        assert!(evaluate(&[], &[gt(g)], &[]).is_err());
    }

    #[test]
    fn categories_do_not_cross_match() {
        let g = b(0.5, 0.5, 0.2, 0.2);
        let d = Detection {
            category: 2,
            ..det(g, 1.0)
        };
        let r = evaluate(&[d], &[gt(g)], &[0.5]).unwrap();
        // category 1 has a missed gt; category 2 has no gt and is skipped
        assert_eq!(r.ap_at(0.5), Some(0.0));
    }
}
