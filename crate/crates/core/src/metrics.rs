//! Lane-level evaluation: anchor-row point accuracy and IoU-based F1.
//!
//! Both metrics match predicted lanes to ground-truth lanes greedily (best
//! score first, ties to the lower ground-truth id, then the lower predicted
//! id). Counts always satisfy `tp + fp = |pred|` and `tp + fn = |gt|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Lane, LaneSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Max |x_pred - x_gt| in pixels for a point to count as correct.
    pub point_tolerance: f64,
    /// Per-lane point accuracy needed for a matched lane to be a TP.
    pub lane_accuracy_threshold: f64,
    /// Rasterized lane width for the IoU metric.
    pub lane_width: usize,
    pub iou_threshold: f64,
    /// Sample rows for point accuracy; every 10th row when `None`.
    pub row_anchors: Option<Vec<usize>>,
    /// Also compute the optimal (exhaustive) TP count when both sides have
    /// at most [`EXHAUSTIVE_MAX_LANES`] lanes.
    pub exhaustive_check: bool,
}

pub const EXHAUSTIVE_MAX_LANES: usize = 6;
pub const DEFAULT_ANCHOR_STEP: usize = 10;

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            point_tolerance: 20.0,
            lane_accuracy_threshold: 0.85,
            lane_width: 30,
            iou_threshold: 0.5,
            row_anchors: None,
            exhaustive_check: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.point_tolerance.is_nan() || self.point_tolerance < 0.0 {
            return Err(Error::InvalidInput("point_tolerance must be >= 0".into()));
        }
        for (name, v) in [
            ("lane_accuracy_threshold", self.lane_accuracy_threshold),
            ("iou_threshold", self.iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.lane_width == 0 {
            return Err(Error::InvalidInput("lane_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// A matched (pred, gt) pair and its score: correct points for point mode,
/// IoU for iou mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanePairScore {
    pub pred_id: u32,
    pub gt_id: u32,
    pub score: f64,
    /// Fraction of the gt lane's points predicted correctly (point mode).
    pub lane_accuracy: Option<f64>,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mode: &'static str,
    /// Correct gt points over all gt points; point mode only.
    pub accuracy: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `fp / |pred lanes|` (0 for no predictions).
    pub fp_rate_per_pred_lane: f64,
    /// `fn / |gt lanes|` (0 for no ground truth).
    pub fn_rate_per_gt_lane: f64,
    pub per_lane: Vec<LanePairScore>,
    /// Optimal TP count, when requested and small enough to enumerate.
    pub exhaustive_tp: Option<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(precision: f64, recall: f64) -> f64 {
    let den = precision + recall;
    if den > 0.0 {
        2.0 * precision * recall / den
    } else {
        0.0
    }
}

fn build_report(
    mode: &'static str,
    accuracy: Option<f64>,
    n_pred: usize,
    n_gt: usize,
    per_lane: Vec<LanePairScore>,
    exhaustive_tp: Option<usize>,
) -> MetricReport {
    let tp = per_lane.iter().filter(|p| p.true_positive).count();
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gt);
    MetricReport {
        mode,
        accuracy,
        precision,
        recall,
        f1: f1_score(precision, recall),
        tp,
        fp: n_pred - tp,
        fn_: n_gt - tp,
        fp_rate_per_pred_lane: ratio(n_pred - tp, n_pred),
        fn_rate_per_gt_lane: ratio(n_gt - tp, n_gt),
        per_lane,
        exhaustive_tp,
    }
}

/// Greedy one-to-one matching on `score[pred][gt]`, highest first. Pairs
/// failing `eligible` are never taken. Returns `(pred index, gt index)`.
fn greedy_match(
    score: &[Vec<f64>],
    pred_ids: &[u32],
    gt_ids: &[u32],
    eligible: impl Fn(f64) -> bool,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (p, row) in score.iter().enumerate() {
        for (g, &s) in row.iter().enumerate() {
            if eligible(s) {
                pairs.push((s, p, g));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(gt_ids[a.2].cmp(&gt_ids[b.2]))
            .then(pred_ids[a.1].cmp(&pred_ids[b.1]))
    });
    let mut pred_used = vec![false; pred_ids.len()];
    let mut gt_used = vec![false; gt_ids.len()];
    let mut out = Vec::new();
    for (_, p, g) in pairs {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            out.push((p, g));
        }
    }
    out
}

/// Maximum number of qualifying pairs over all one-to-one matchings.
fn exhaustive_max_matching(qualifies: &[Vec<bool>], n_gt: usize) -> usize {
    fn go(q: &[Vec<bool>], p: usize, used: u32, n_gt: usize) -> usize {
        if p == q.len() {
            return 0;
        }
        let mut best = go(q, p + 1, used, n_gt);
        for g in 0..n_gt {
            if q[p][g] && used & (1 << g) == 0 {
                best = best.max(1 + go(q, p + 1, used | (1 << g), n_gt));
            }
        }
        best
    }
    go(qualifies, 0, 0, n_gt)
}

fn default_anchors(pred: &LaneSet, gt: &LaneSet) -> Vec<usize> {
    let max_row = pred
        .lanes()
        .iter()
        .chain(gt.lanes())
        .filter_map(|l| l.points.first().map(|p| p.row))
        .max()
        .unwrap_or(0);
    (0..=max_row).step_by(DEFAULT_ANCHOR_STEP).collect()
}

fn sample(lane: &Lane, anchors: &[usize]) -> Vec<Option<f64>> {
    anchors.iter().map(|&r| lane.column_at(r)).collect()
}

/// Fraction of ground-truth anchor points hit within `point_tolerance`.
pub fn point_accuracy(pred: &LaneSet, gt: &LaneSet, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let anchors = match &cfg.row_anchors {
        Some(a) if a.is_empty() => return Err(Error::InvalidInput("row_anchors is empty".into())),
        Some(a) => a.clone(),
        None => default_anchors(pred, gt),
    };
    // lanes that miss every anchor cannot be scored and are left out
    let sampled = |set: &LaneSet| -> Vec<(u32, Vec<Option<f64>>)> {
        set.lanes()
            .iter()
            .map(|l| (l.id, sample(l, &anchors)))
            .filter(|(_, s)| s.iter().any(Option::is_some))
            .collect()
    };
    let (gt_samples, gt_ids): (Vec<_>, Vec<_>) = sampled(gt).into_iter().map(|(id, s)| (s, id)).unzip();
    let (pred_samples, pred_ids): (Vec<_>, Vec<_>) = sampled(pred).into_iter().map(|(id, s)| (s, id)).unzip();
    let gt_points: Vec<usize> = gt_samples.iter().map(|s| s.iter().flatten().count()).collect();
    let n_gt_points: usize = gt_points.iter().sum();

    let correct: Vec<Vec<f64>> = pred_samples
        .iter()
        .map(|ps| {
            gt_samples
                .iter()
                .map(|gs| {
                    ps.iter()
                        .zip(gs)
                        .filter(|(p, g)| matches!((p, g), (Some(p), Some(g)) if (p - g).abs() <= cfg.point_tolerance))
                        .count() as f64
                })
                .collect()
        })
        .collect();

    let matched = greedy_match(&correct, &pred_ids, &gt_ids, |s| s > 0.0);

    let lane_acc = |p: usize, g: usize| correct[p][g] / gt_points[g] as f64;
    let mut hit_points = 0.0;
    let per_lane: Vec<LanePairScore> = matched
        .iter()
        .map(|&(p, g)| {
            hit_points += correct[p][g];
            let acc = lane_acc(p, g);
            LanePairScore {
                pred_id: pred_ids[p],
                gt_id: gt_ids[g],
                score: correct[p][g],
                lane_accuracy: Some(acc),
                true_positive: acc >= cfg.lane_accuracy_threshold,
            }
        })
        .collect();

    let accuracy = if n_gt_points == 0 {
        1.0
    } else {
        hit_points / n_gt_points as f64
    };
    let exhaustive = exhaustive_tp(cfg, pred_ids.len(), gt_ids.len(), |p, g| {
        correct[p][g] > 0.0 && lane_acc(p, g) >= cfg.lane_accuracy_threshold
    });
    Ok(build_report("point", Some(accuracy), pred_ids.len(), gt_ids.len(), per_lane, exhaustive))
}

fn exhaustive_tp(
    cfg: &MetricConfig,
    n_pred: usize,
    n_gt: usize,
    qualifies: impl Fn(usize, usize) -> bool,
) -> Option<usize> {
    if !cfg.exhaustive_check || n_pred > EXHAUSTIVE_MAX_LANES || n_gt > EXHAUSTIVE_MAX_LANES {
        return None;
    }
    let q: Vec<Vec<bool>> = (0..n_pred).map(|p| (0..n_gt).map(|g| qualifies(p, g)).collect()).collect();
    Some(exhaustive_max_matching(&q, n_gt))
}

/// Center a run of `width` pixels on a real column, returning the first
/// column (possibly negative).
fn run_start(col: f64, width: usize) -> i64 {
    (col - (width as f64 - 1.0) / 2.0 + 0.5).floor() as i64
}

/// Rasterize a lane polyline: every row between consecutive points gets the
/// linearly interpolated column, dilated to `width` pixels and clipped.
pub fn rasterize_lane(lane: &Lane, width: usize, height: usize, img_width: usize) -> Result<BinaryMask> {
    if width == 0 {
        return Err(Error::InvalidInput("lane width must be >= 1".into()));
    }
    let mut fg = vec![false; height * img_width];
    let mut paint = |row: usize, col: f64| {
        if row >= height {
            return;
        }
        let start = run_start(col, width);
        let lo = start.max(0);
        let hi = (start + width as i64 - 1).min(img_width as i64 - 1);
        for x in lo..=hi {
            fg[row * img_width + x as usize] = true;
        }
    };
    match lane.points.as_slice() {
        [] => {}
        [only] => paint(only.row, only.col),
        pts => {
            for seg in pts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let span = (a.row - b.row) as f64;
                for row in (b.row..=a.row).rev() {
                    let t = (a.row - row) as f64 / span;
                    paint(row, a.col + t * (b.col - a.col));
                }
            }
        }
    }
    BinaryMask::new(height, img_width, fg)
}

fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU between two rasterized lanes.
pub fn lane_iou(a: &Lane, b: &Lane, width: usize, height: usize, img_width: usize) -> Result<f64> {
    Ok(mask_iou(
        &rasterize_lane(a, width, height, img_width)?,
        &rasterize_lane(b, width, height, img_width)?,
    ))
}

/// Lane-level precision/recall/F1 with rasterized-IoU matching.
pub fn lane_f1(pred: &LaneSet, gt: &LaneSet, height: usize, width: usize, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let raster = |set: &LaneSet| -> Result<Vec<BinaryMask>> {
        set.lanes()
            .iter()
            .map(|l| rasterize_lane(l, cfg.lane_width, height, width))
            .collect()
    };
    let pred_masks = raster(pred)?;
    let gt_masks = raster(gt)?;
    let iou: Vec<Vec<f64>> = pred_masks
        .iter()
        .map(|p| gt_masks.iter().map(|g| mask_iou(p, g)).collect())
        .collect();

    let pred_ids: Vec<u32> = pred.lanes().iter().map(|l| l.id).collect();
    let gt_ids: Vec<u32> = gt.lanes().iter().map(|l| l.id).collect();
    let thr = cfg.iou_threshold;
    let matched = greedy_match(&iou, &pred_ids, &gt_ids, |s| s >= thr && s > 0.0);
    let per_lane = matched
        .iter()
        .map(|&(p, g)| LanePairScore {
            pred_id: pred_ids[p],
            gt_id: gt_ids[g],
            score: iou[p][g],
            lane_accuracy: None,
            true_positive: true,
        })
        .collect();
    let exhaustive = exhaustive_tp(cfg, pred.len(), gt.len(), |p, g| iou[p][g] >= thr && iou[p][g] > 0.0);
    Ok(build_report("iou", None, pred.len(), gt.len(), per_lane, exhaustive))
}
