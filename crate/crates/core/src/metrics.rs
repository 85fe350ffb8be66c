//! Action segmentation metrics: frame accuracy, segmental edit score, overlap F1 and top-k.
//!
//! All scores are percentages. Multi-video reports pool frames for accuracy and top-k and
//! average edit and F1 per video.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{segment_runs, Run};

pub type Segment = Run;

/// Overlap thresholds reported by [`full_report`].
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(())
}

/// Percentage of frames predicted correctly, skipping frames whose ground truth is `background`
/// when it is given. No counted frames yields 100.
pub fn frame_accuracy(pred: &[usize], gt: &[usize], background: Option<usize>) -> Result<f64> {
    check_lengths(pred, gt)?;
    let (hit, total) = count_correct(pred, gt, background);
    Ok(percent(hit, total))
}

fn count_correct(pred: &[usize], gt: &[usize], background: Option<usize>) -> (usize, usize) {
    pred.iter()
        .zip(gt)
        .filter(|(_, g)| Some(**g) != background)
        .fold((0, 0), |(h, t), (p, g)| (h + usize::from(p == g), t + 1))
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Maximal same-label runs, in order.
pub fn extract_segments(labels: &[usize]) -> Result<Vec<Segment>> {
    segment_runs(labels)
}

fn drop_background(segs: Vec<Segment>, background: Option<usize>) -> Vec<Segment> {
    segs.into_iter().filter(|s| Some(s.label) != background).collect()
}

/// Unit-cost Levenshtein distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 (1 - lev / max(|pred|, |gt|))` over segment class sequences. Both empty gives 100.
pub fn edit_score(pred: &[Segment], gt: &[Segment]) -> f64 {
    let p: Vec<usize> = pred.iter().map(|s| s.label).collect();
    let g: Vec<usize> = gt.iter().map(|s| s.label).collect();
    let longest = p.len().max(g.len());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(&p, &g) as f64 / longest as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Frame IoU of two inclusive intervals.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy one-to-one matching in predicted-segment order. Each predicted segment takes the
/// unmatched same-class ground-truth segment of highest IoU (first on ties) when that IoU is at
/// least `threshold`.
pub fn f1_at(pred: &[Segment], gt: &[Segment], threshold: f64) -> F1Score {
    let mut matched = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt.iter().enumerate() {
            if matched[j] || g.label != p.label {
                continue;
            }
            let v = iou(p, g);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            if v >= threshold {
                matched[j] = true;
                tp += 1;
            }
        }
    }
    f1_from_counts(threshold, tp, pred.len() - tp, gt.len() - tp)
}

fn f1_from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize) -> F1Score {
    let (precision, recall, f1) = if tp + fp + fn_ == 0 {
        (100.0, 100.0, 100.0)
    } else if tp == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let p = tp as f64 / (tp + fp) as f64;
        let r = tp as f64 / (tp + fn_) as f64;
        (100.0 * p, 100.0 * r, 100.0 * 2.0 * p * r / (p + r))
    };
    F1Score {
        threshold,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
    }
}

/// True when the ground-truth class ranks among the `k` highest scores of its row. Ties rank the
/// smaller class id first.
fn in_top_k(row: ndarray::ArrayView1<f64>, truth: usize, k: usize) -> bool {
    let s = row[truth];
    let rank = row
        .iter()
        .enumerate()
        .filter(|&(c, &v)| v > s || (v == s && c < truth))
        .count();
    rank < k
}

/// Percentage of frames whose true class is among the `k` best-scoring classes.
pub fn top_k(scores: &Array2<f64>, gt: &[usize], k: usize, background: Option<usize>) -> Result<f64> {
    if scores.nrows() != gt.len() {
        return Err(Error::Shape(format!(
            "{} score rows for {} frames",
            scores.nrows(),
            gt.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    let (hit, total) = count_top_k(scores, gt, k, background)?;
    Ok(percent(hit, total))
}

fn count_top_k(scores: &Array2<f64>, gt: &[usize], k: usize, background: Option<usize>) -> Result<(usize, usize)> {
    let classes = scores.ncols();
    let mut hit = 0;
    let mut total = 0;
    for (row, &y) in scores.rows().into_iter().zip(gt) {
        if y >= classes {
            return Err(Error::InvalidLabel { id: y, classes });
        }
        if Some(y) == background {
            continue;
        }
        total += 1;
        hit += usize::from(in_top_k(row, y, k));
    }
    Ok((hit, total))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Frames and segments of this class are left out of every metric.
    pub exclude_background: Option<usize>,
}

/// One video's predictions, scores and ground truth.
#[derive(Debug, Clone)]
pub struct VideoResult {
    pub video_id: String,
    pub pred: Vec<usize>,
    /// Per-frame class scores (log-probabilities), `T × C`.
    pub scores: Array2<f64>,
    pub gt: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub frames: usize,
    pub accuracy: f64,
    pub edit: f64,
    pub f1: Vec<F1Score>,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub edit: f64,
    /// Keyed `"F1@10"`, `"F1@25"`, `"F1@50"`.
    pub f1: BTreeMap<String, f64>,
    pub top1: f64,
    pub top5: f64,
    /// TP/FP/FN summed over videos, per threshold.
    pub counts: BTreeMap<String, [usize; 3]>,
    pub options: MetricOptions,
    pub videos: Vec<VideoMetrics>,
}

fn f1_key(threshold: f64) -> String {
    format!("F1@{}", (threshold * 100.0).round() as u32)
}

/// Scores every video and aggregates. The result does not depend on input order.
pub fn full_report(videos: &[VideoResult], options: MetricOptions) -> Result<MetricsReport> {
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bg = options.exclude_background;
    let mut order: Vec<&VideoResult> = videos.iter().collect();
    order.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let mut per_video = Vec::with_capacity(order.len());
    let (mut acc_hit, mut acc_total) = (0, 0);
    let (mut t1_hit, mut t1_total, mut t5_hit, mut t5_total) = (0, 0, 0, 0);
    for v in order {
        check_lengths(&v.pred, &v.gt)?;
        let (h, t) = count_correct(&v.pred, &v.gt, bg);
        let (h1, n1) = count_top_k(&v.scores, &v.gt, 1, bg)?;
        let (h5, n5) = count_top_k(&v.scores, &v.gt, 5, bg)?;
        let ps = drop_background(extract_segments(&v.pred)?, bg);
        let gs = drop_background(extract_segments(&v.gt)?, bg);
        acc_hit += h;
        acc_total += t;
        t1_hit += h1;
        t1_total += n1;
        t5_hit += h5;
        t5_total += n5;
        per_video.push(VideoMetrics {
            video_id: v.video_id.clone(),
            frames: v.gt.len(),
            accuracy: percent(h, t),
            edit: edit_score(&ps, &gs),
            f1: F1_THRESHOLDS.iter().map(|&tau| f1_at(&ps, &gs, tau)).collect(),
            top1: percent(h1, n1),
            top5: percent(h5, n5),
        });
    }
    let n = per_video.len() as f64;
    let mut f1 = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (i, &tau) in F1_THRESHOLDS.iter().enumerate() {
        let mean = per_video.iter().map(|v| v.f1[i].f1).sum::<f64>() / n;
        let c = per_video.iter().fold([0; 3], |c, v| {
            [c[0] + v.f1[i].tp, c[1] + v.f1[i].fp, c[2] + v.f1[i].fn_]
        });
        f1.insert(f1_key(tau), mean);
        counts.insert(f1_key(tau), c);
    }
    Ok(MetricsReport {
        accuracy: percent(acc_hit, acc_total),
        edit: per_video.iter().map(|v| v.edit).sum::<f64>() / n,
        f1,
        top1: percent(t1_hit, t1_total),
        top5: percent(t5_hit, t5_total),
        counts,
        options,
        videos: per_video,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn segs(labels: &[usize]) -> Vec<Segment> {
        extract_segments(labels).unwrap()
    }

    /// Full-table Levenshtein, written independently of the rolling-row version.
    fn lev_oracle(a: &[usize], b: &[usize]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = *[d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost]
                    .iter()
                    .min()
                    .unwrap();
            }
        }
        d[a.len()][b.len()]
    }

    /// Frame-set IoU computed by enumeration.
    fn iou_oracle(a: &Segment, b: &Segment) -> f64 {
        let lo = a.start.min(b.start);
        let hi = a.end.max(b.end);
        let (mut inter, mut union) = (0, 0);
        for t in lo..=hi {
            let ia = (a.start..=a.end).contains(&t);
            let ib = (b.start..=b.end).contains(&t);
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
        inter as f64 / union as f64
    }

    /// Largest number of disjoint (pred, gt) pairs with same class and IoU >= tau.
    fn max_matching(pred: &[Segment], gt: &[Segment], tau: f64) -> usize {
        fn go(i: usize, pred: &[Segment], gt: &[Segment], tau: f64, used: &mut Vec<bool>) -> usize {
            if i == pred.len() {
                return 0;
            }
            let mut best = go(i + 1, pred, gt, tau, used);
            for j in 0..gt.len() {
                if !used[j] && gt[j].label == pred[i].label && iou_oracle(&pred[i], &gt[j]) >= tau {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, pred, gt, tau, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, pred, gt, tau, &mut vec![false; gt.len()])
    }

    fn random_labels(rng: &mut ChaCha8Rng, max_segments: usize, classes: usize) -> Vec<usize> {
        let n = rng.random_range(1..=max_segments);
        let mut out: Vec<usize> = Vec::new();
        for _ in 0..n {
            let mut c = rng.random_range(0..classes);
            if out.last() == Some(&c) {
                c = (c + 1) % classes;
            }
            let len = rng.random_range(1..8);
            out.extend(std::iter::repeat_n(c, len));
        }
        out
    }

    /// Random pair of equal-length sequences with at most `max_segments` segments each.
    fn random_pair(rng: &mut ChaCha8Rng, max_segments: usize) -> (Vec<usize>, Vec<usize>) {
        let gt = random_labels(rng, max_segments, 3);
        let mut pred = random_labels(rng, max_segments, 3);
        let t = gt.len();
        pred.resize(t, *pred.last().unwrap());
        // resizing never adds segments, but truncation may drop some: still within the cap
        (pred, gt)
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(frame_accuracy(&[0, 1, 2], &[0, 1, 2], None).unwrap(), 100.0);
        assert_eq!(frame_accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1], None).unwrap(), 75.0);
        assert_eq!(frame_accuracy(&[1, 1], &[0, 0], None).unwrap(), 0.0);
        assert!(frame_accuracy(&[0], &[0, 0], None).is_err());
        // background frames are skipped
        assert_eq!(
            frame_accuracy(&[0, 0, 1, 1], &[0, 2, 1, 1], Some(0)).unwrap(),
            200.0 / 3.0
        );
    }

    #[test]
    fn segments_mirror_runs() {
        let s = segs(&[0, 0, 0, 0, 1, 1, 2]);
        let got: Vec<_> = s.iter().map(|r| (r.label, r.start, r.end)).collect();
        assert_eq!(got, vec![(0, 0, 3), (1, 4, 5), (2, 6, 6)]);
        assert!(extract_segments(&[]).is_err());
    }

    #[test]
    fn edit_examples() {
        assert_eq!(edit_score(&segs(&[0, 1, 1, 2]), &segs(&[0, 0, 1, 2, 2])), 100.0);
        let e = edit_score(&segs(&[0, 1, 0]), &segs(&[0, 0, 1]));
        assert!((e - 100.0 * (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(edit_score(&[], &[]), 100.0);
        assert_eq!(edit_score(&segs(&[1]), &[]), 0.0);
    }

    #[test]
    fn edit_matches_dp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let (p, g) = random_pair(&mut rng, 12);
            let (ps, gs) = (segs(&p), segs(&g));
            let pc: Vec<usize> = ps.iter().map(|s| s.label).collect();
            let gc: Vec<usize> = gs.iter().map(|s| s.label).collect();
            let expect = 100.0 * (1.0 - lev_oracle(&pc, &gc) as f64 / pc.len().max(gc.len()) as f64);
            assert_eq!(edit_score(&ps, &gs), expect);
        }
    }

    #[test]
    fn f1_worked_example() {
        // gt: class a over 0..=9; pred: a over 0..=5, b over 6..=9
        let gt = segs(&[0; 10]);
        let pred = segs(&[0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let s = f1_at(&pred, &gt, 0.5);
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 0));
        assert_eq!(s.precision, 50.0);
        assert_eq!(s.recall, 100.0);
        assert!((s.f1 - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_edge_cases() {
        let a = segs(&[0, 0, 1, 1, 2]);
        for tau in [0.1, 0.25, 0.5, 1.0] {
            let s = f1_at(&a, &a, tau);
            assert_eq!((s.precision, s.recall, s.f1), (100.0, 100.0, 100.0));
        }
        assert_eq!(f1_at(&[], &[], 0.5).f1, 100.0);
        let s = f1_at(&segs(&[1, 1]), &segs(&[0, 0]), 0.1);
        assert_eq!((s.f1, s.tp, s.fp, s.fn_), (0.0, 0, 1, 1));
    }

    #[test]
    fn f1_greedy_verified_by_exhaustive_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let (p, g) = random_pair(&mut rng, 8);
            let (ps, gs) = (segs(&p), segs(&g));
            assert!(ps.len() <= 8 && gs.len() <= 8);
            for tau in F1_THRESHOLDS {
                let s = f1_at(&ps, &gs, tau);
                let best = max_matching(&ps, &gs, tau);
                assert!(s.tp <= best);
                // above one half, each segment has at most one partner, so greedy is optimal
                if tau >= 0.5 {
                    assert_eq!(s.tp, best, "tau {tau}: {p:?} vs {g:?}");
                }
                assert_eq!(s.tp + s.fp, ps.len());
                assert_eq!(s.tp + s.fn_, gs.len());
            }
        }
    }

    #[test]
    fn f1_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let (p, g) = random_pair(&mut rng, 10);
            let (ps, gs) = (segs(&p), segs(&g));
            let scores: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|&t| f1_at(&ps, &gs, t).f1)
                .collect();
            assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
        }
    }

    #[test]
    fn top_k_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let scores = Array2::from_shape_fn((6, 4), |_| rng.random_range(0..3) as f64);
        let gt = [0, 1, 2, 3, 1, 0];
        assert_eq!(top_k(&scores, &gt, 4, None).unwrap(), 100.0);
        assert_eq!(top_k(&scores, &gt, 9, None).unwrap(), 100.0);

        let argmax = crate::dgcn::argmax_rows(&scores);
        let acc = frame_accuracy(&argmax, &gt, None).unwrap();
        assert_eq!(top_k(&scores, &gt, 1, None).unwrap(), acc);

        // sort-based oracle: stable sort by descending score keeps smaller ids first on ties
        for k in 1..=4 {
            let mut hit = 0;
            for (i, &y) in gt.iter().enumerate() {
                let mut ids: Vec<usize> = (0..4).collect();
                ids.sort_by(|&a, &b| scores[[i, b]].partial_cmp(&scores[[i, a]]).unwrap());
                hit += usize::from(ids[..k].contains(&y));
            }
            assert_eq!(top_k(&scores, &gt, k, None).unwrap(), 100.0 * hit as f64 / 6.0);
        }
        assert!(top_k(&scores, &gt, 0, None).is_err());
    }

    fn video(id: &str, pred: Vec<usize>, gt: Vec<usize>) -> VideoResult {
        let scores = Array2::from_shape_fn((pred.len(), 3), |(i, c)| if pred[i] == c { 0.0 } else { -5.0 });
        VideoResult {
            video_id: id.into(),
            pred,
            scores,
            gt,
        }
    }

    #[test]
    fn report_aggregation() {
        let perfect = video("a", vec![0, 0, 1, 1, 2, 2], vec![0, 0, 1, 1, 2, 2]);
        let r = full_report(std::slice::from_ref(&perfect), MetricOptions::default()).unwrap();
        assert_eq!((r.accuracy, r.edit, r.top1, r.top5), (100.0, 100.0, 100.0, 100.0));
        assert!(r.f1.values().all(|&v| v == 100.0));

        let wrong = video("b", vec![1, 1], vec![0, 0]);
        let r = full_report(&[perfect.clone(), wrong.clone()], MetricOptions::default()).unwrap();
        assert_eq!(r.accuracy, 75.0);
        assert_eq!(r.edit, 50.0);
        assert_eq!(r.f1["F1@50"], 50.0);
        assert_eq!(r.counts["F1@50"], [3, 1, 1]);
        let swapped = full_report(&[wrong, perfect], MetricOptions::default()).unwrap();
        assert_eq!(r, swapped);
        assert!(r.top1 <= r.top5);
    }

    #[test]
    fn background_exclusion() {
        let v = video("a", vec![0, 0, 1, 1, 0, 2], vec![0, 1, 1, 1, 0, 2]);
        let r = full_report(
            &[v],
            MetricOptions {
                exclude_background: Some(0),
            },
        )
        .unwrap();
        assert_eq!(r.accuracy, 75.0);
        assert_eq!(r.edit, 100.0);
    }

    proptest! {
        #[test]
        fn scores_ignore_class_relabeling(seed in 0u64..10_000, shift in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = random_pair(&mut rng, 10);
            let relabel = |v: &[usize]| v.iter().map(|c| (c + shift) % 3).collect::<Vec<_>>();
            let (ps, gs) = (segs(&p), segs(&g));
            let (rp, rg) = (segs(&relabel(&p)), segs(&relabel(&g)));
            prop_assert_eq!(edit_score(&ps, &gs), edit_score(&rp, &rg));
            for tau in F1_THRESHOLDS {
                prop_assert_eq!(f1_at(&ps, &gs, tau), f1_at(&rp, &rg, tau));
            }
        }

        #[test]
        fn edit_ignores_durations(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = random_pair(&mut rng, 10);
            let stretch = |v: &[usize]| v.iter().flat_map(|&c| [c, c]).collect::<Vec<_>>();
            prop_assert_eq!(
                edit_score(&segs(&p), &segs(&g)),
                edit_score(&segs(&stretch(&p)), &segs(&g))
            );
        }
    }
}
