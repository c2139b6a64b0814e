//! Row-by-row lane decoding from a binary mask and affinity fields.
//!
//! Rows are processed from the bottom (`height - 1`) to the top (`0`):
//!
//! 1. Foreground columns of the row are split into clusters wherever the HAF
//!    x-component turns from `<= 0` to `> 0` ([`cluster_row`]).
//! 2. Every (lane tail, cluster) pair gets an association error measuring how
//!    well the tail's VAF predicts the displacement to the cluster center
//!    ([`association_error`]).
//! 3. Pairs are matched one-to-one greedily by ascending error, accepting
//!    only errors `<= tau` ([`assign_clusters`]).
//! 4. Matched clusters extend their lane and become its new tail; leftover
//!    clusters spawn new lanes.
//!
//! After the sweep, lanes smaller than `min_lane_pixels` are erased and the
//! survivors are relabeled `1..=L` in order of first appearance.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AffinityFields, BinaryMask, LabelMask};
use crate::scalar::{Real, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Largest association error (pixels) accepted when attaching a cluster
    /// to an existing lane.
    pub tau: f64,
    /// Lanes with fewer pixels are erased after decoding. `0` keeps all.
    pub min_lane_pixels: usize,
    /// Keep only the largest `n` lanes (ties go to the earlier lane).
    pub max_lanes: Option<usize>,
}

impl DecodeConfig {
    pub const DEFAULT_TAU: f64 = 1.5;

    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::InvalidInput(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            tau: Self::DEFAULT_TAU,
            min_lane_pixels: 0,
            max_lanes: None,
        }
    }
}

/// A horizontal run of foreground pixels grouped by the HAF rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCluster {
    pub row: usize,
    /// Strictly ascending, nonempty.
    pub columns: Vec<usize>,
    pub mean_col: f64,
}

impl RowCluster {
    pub fn new(row: usize, columns: Vec<usize>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("cluster needs at least one column".into()));
        }
        if columns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("cluster columns must be strictly ascending".into()));
        }
        Ok(Self::from_sorted(row, columns))
    }

    fn from_sorted(row: usize, columns: Vec<usize>) -> Self {
        let mean_col = columns.iter().sum::<usize>() as f64 / columns.len() as f64;
        Self {
            row,
            columns,
            mean_col,
        }
    }
}

/// The pixels most recently added to a lane.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneTail {
    pub lane_id: u32,
    pub last_row: usize,
    pub last_columns: Vec<usize>,
}

/// Split the ascending foreground columns of one row into clusters.
///
/// `haf_row` is the full HAF row, indexed by column. A new cluster begins at
/// the first column and wherever the previous foreground column has
/// `haf.x <= 0` and the current one has `haf.x > 0`, regardless of any
/// background gap between them.
pub fn cluster_row<T: Real>(row: usize, fg_columns: &[usize], haf_row: &[Vec2<T>]) -> Vec<RowCluster> {
    let mut clusters = Vec::new();
    let Some((&first, rest)) = fg_columns.split_first() else {
        return clusters;
    };
    let mut current = vec![first];
    let mut prev_x = haf_row[first].x;
    for &col in rest {
        let x = haf_row[col].x;
        if prev_x <= T::zero() && x > T::zero() {
            clusters.push(RowCluster::from_sorted(row, std::mem::take(&mut current)));
        }
        current.push(col);
        prev_x = x;
    }
    clusters.push(RowCluster::from_sorted(row, current));
    clusters
}

/// Mean residual between the true tail-to-cluster displacement and the VAF
/// prediction scaled to the same length.
///
/// For each tail pixel `x_i` at row `y_t`, with `d_i = (mean - x_i, row - y_t)`,
/// the residual is `|d_i - V(x_i, y_t) * |d_i||`. The tail row may lie more
/// than one row below the cluster.
pub fn association_error<T: Real>(
    tail: &LaneTail,
    cluster: &RowCluster,
    vaf: &AffinityFields<T>,
) -> Result<T> {
    if cluster.row >= tail.last_row {
        return Err(Error::Precondition(format!(
            "cluster row {} must be above tail row {}",
            cluster.row, tail.last_row
        )));
    }
    if tail.last_columns.is_empty() {
        return Err(Error::Precondition(format!("lane {} has an empty tail", tail.lane_id)));
    }
    if tail.last_row >= vaf.height() || tail.last_columns.iter().any(|&x| x >= vaf.width()) {
        return Err(Error::Precondition("tail lies outside the field".into()));
    }
    Ok(association_error_unchecked(tail, cluster, vaf.vaf_row(tail.last_row)))
}

fn association_error_unchecked<T: Real>(tail: &LaneTail, cluster: &RowCluster, vaf_row: &[Vec2<T>]) -> T {
    let mean = T::of(cluster.mean_col);
    let dy = -T::of((tail.last_row - cluster.row) as f64);
    let mut sum = T::zero();
    for &x in &tail.last_columns {
        let d = Vec2::new(mean - T::of(x as f64), dy);
        let residual = d - vaf_row[x] * d.norm();
        sum = sum + residual.norm();
    }
    sum / T::of(tail.last_columns.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub tail_index: usize,
    pub cluster_index: usize,
    pub lane_id: u32,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub matches: Vec<Match>,
    /// Indices of clusters no tail claimed, ascending.
    pub leftover: Vec<usize>,
}

/// One-to-one greedy matching over a precomputed `errors[tail][cluster]`
/// matrix. Pairs are visited by ascending error, ties by lower lane id then
/// lower cluster mean column; pairs above `tau` are never taken.
pub fn greedy_assign(errors: &[Vec<f64>], lane_ids: &[u32], cluster_means: &[f64], tau: f64) -> Assignment {
    let n_clusters = cluster_means.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(errors.len() * n_clusters);
    for (t, row) in errors.iter().enumerate() {
        for (c, &e) in row.iter().enumerate() {
            if e <= tau {
                pairs.push((e, t, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(lane_ids[a.1].cmp(&lane_ids[b.1]))
            .then(cluster_means[a.2].partial_cmp(&cluster_means[b.2]).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });

    let mut tail_used = vec![false; errors.len()];
    let mut cluster_used = vec![false; n_clusters];
    let mut matches = Vec::new();
    for (e, t, c) in pairs {
        if tail_used[t] || cluster_used[c] {
            continue;
        }
        tail_used[t] = true;
        cluster_used[c] = true;
        matches.push(Match {
            tail_index: t,
            cluster_index: c,
            lane_id: lane_ids[t],
            error: e,
        });
    }
    let leftover = (0..n_clusters).filter(|&c| !cluster_used[c]).collect();
    Assignment { matches, leftover }
}

/// Match the clusters of one row to existing lane tails.
pub fn assign_clusters<T: Real>(
    tails: &[LaneTail],
    clusters: &[RowCluster],
    vaf: &AffinityFields<T>,
    cfg: &DecodeConfig,
) -> Result<Assignment> {
    if let Some(first) = clusters.first() {
        if clusters.iter().any(|c| c.row != first.row) {
            return Err(Error::Precondition("clusters must share one row".into()));
        }
    }
    let mut errors = Vec::with_capacity(tails.len());
    for tail in tails {
        let row = clusters
            .iter()
            .map(|c| association_error(tail, c, vaf).map(|e| e.to_f64_lossy()))
            .collect::<Result<Vec<_>>>()?;
        errors.push(row);
    }
    let ids: Vec<u32> = tails.iter().map(|t| t.lane_id).collect();
    let means: Vec<f64> = clusters.iter().map(|c| c.mean_col).collect();
    Ok(greedy_assign(&errors, &ids, &means, cfg.tau))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceAssignment {
    pub lane_id: u32,
    pub cluster_index: usize,
    pub error: f64,
}

/// What happened in one foreground row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowTrace {
    pub row: usize,
    pub clusters: Vec<RowCluster>,
    pub assignments: Vec<TraceAssignment>,
    /// `(new lane id, cluster index)`.
    pub spawned: Vec<(u32, usize)>,
}

/// Full decode history. Lane ids in rows are the raw spawn ids; `final_labels`
/// maps raw id `k` (at index `k - 1`) to its output label, `0` if erased.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeTrace {
    pub height: usize,
    pub width: usize,
    pub rows: Vec<RowTrace>,
    pub lane_pixels: Vec<usize>,
    pub final_labels: Vec<u8>,
}

impl DecodeTrace {
    pub fn raw_lane_count(&self) -> usize {
        self.lane_pixels.len()
    }

    /// Rebuild the decoder output from the recorded decisions.
    pub fn replay(&self) -> Result<LabelMask> {
        let mut labels = vec![0u8; self.height * self.width];
        for rt in &self.rows {
            let mut paint = |lane_id: u32, ci: usize| {
                let label = self.final_labels[lane_id as usize - 1];
                for &x in &rt.clusters[ci].columns {
                    labels[rt.row * self.width + x] = label;
                }
            };
            for a in &rt.assignments {
                paint(a.lane_id, a.cluster_index);
            }
            for &(id, ci) in &rt.spawned {
                paint(id, ci);
            }
        }
        LabelMask::new(self.height, self.width, labels)
    }
}

impl fmt::Display for DecodeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "decode trace {}x{}: {} raw lanes, {} kept",
            self.height,
            self.width,
            self.raw_lane_count(),
            self.final_labels.iter().filter(|&&l| l > 0).count()
        )?;
        for rt in &self.rows {
            write!(f, "row {:>4}: clusters", rt.row)?;
            for c in &rt.clusters {
                write!(
                    f,
                    " [{}..{} mean {:.2}]",
                    c.columns[0],
                    c.columns[c.columns.len() - 1],
                    c.mean_col
                )?;
            }
            writeln!(f)?;
            for a in &rt.assignments {
                writeln!(f, "          lane {} <- cluster {} (error {:.4})", a.lane_id, a.cluster_index, a.error)?;
            }
            for &(id, ci) in &rt.spawned {
                writeln!(f, "          spawn lane {id} from cluster {ci}")?;
            }
        }
        for (i, &l) in self.final_labels.iter().enumerate() {
            writeln!(f, "lane {} ({} px) -> label {}", i + 1, self.lane_pixels[i], l)?;
        }
        Ok(())
    }
}

/// Decode a binary mask plus fields into lane instances.
pub fn decode<T: Real>(
    bw: &BinaryMask,
    fields: &AffinityFields<T>,
    cfg: &DecodeConfig,
) -> Result<(LabelMask, DecodeTrace)> {
    if bw.dims() != fields.dims() {
        return Err(Error::Dimension {
            expected: bw.dims(),
            actual: fields.dims(),
        });
    }
    cfg.validate()?;
    let (h, w) = bw.dims();

    let mut raw = vec![0u32; h * w];
    let mut tails: Vec<LaneTail> = Vec::new();
    let mut lane_pixels: Vec<usize> = Vec::new();
    let mut rows = Vec::new();
    let mut errors: Vec<Vec<f64>> = Vec::new();

    for y in (0..h).rev() {
        let cols = bw.row_columns(y);
        if cols.is_empty() {
            continue;
        }
        let clusters = cluster_row(y, &cols, fields.haf_row(y));

        errors.clear();
        for tail in &tails {
            let vaf_row = fields.vaf_row(tail.last_row);
            errors.push(
                clusters
                    .iter()
                    .map(|c| association_error_unchecked(tail, c, vaf_row).to_f64_lossy())
                    .collect(),
            );
        }
        let ids: Vec<u32> = tails.iter().map(|t| t.lane_id).collect();
        let means: Vec<f64> = clusters.iter().map(|c| c.mean_col).collect();
        let assignment = greedy_assign(&errors, &ids, &means, cfg.tau);

        let mut trace_assign = Vec::with_capacity(assignment.matches.len());
        for m in &assignment.matches {
            let cluster = &clusters[m.cluster_index];
            for &x in &cluster.columns {
                raw[y * w + x] = m.lane_id;
            }
            lane_pixels[m.lane_id as usize - 1] += cluster.columns.len();
            let tail = &mut tails[m.tail_index];
            tail.last_row = y;
            tail.last_columns.clone_from(&cluster.columns);
            trace_assign.push(TraceAssignment {
                lane_id: m.lane_id,
                cluster_index: m.cluster_index,
                error: m.error,
            });
        }
        let mut spawned = Vec::with_capacity(assignment.leftover.len());
        for &ci in &assignment.leftover {
            let cluster = &clusters[ci];
            let id = tails.len() as u32 + 1;
            for &x in &cluster.columns {
                raw[y * w + x] = id;
            }
            lane_pixels.push(cluster.columns.len());
            tails.push(LaneTail {
                lane_id: id,
                last_row: y,
                last_columns: cluster.columns.clone(),
            });
            spawned.push((id, ci));
        }
        rows.push(RowTrace {
            row: y,
            clusters,
            assignments: trace_assign,
            spawned,
        });
    }

    let final_labels = surviving_labels(&lane_pixels, cfg)?;
    let labels = raw
        .iter()
        .map(|&id| if id == 0 { 0 } else { final_labels[id as usize - 1] })
        .collect();
    let mask = LabelMask::new(h, w, labels)?;
    Ok((
        mask,
        DecodeTrace {
            height: h,
            width: w,
            rows,
            lane_pixels,
            final_labels,
        },
    ))
}

/// Apply the size filter and lane cap, then number survivors densely in
/// spawn order (which is bottom-most-first appearance order).
fn surviving_labels(lane_pixels: &[usize], cfg: &DecodeConfig) -> Result<Vec<u8>> {
    let mut keep: Vec<bool> = lane_pixels.iter().map(|&n| n >= cfg.min_lane_pixels).collect();
    if let Some(cap) = cfg.max_lanes {
        let mut kept: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
        if kept.len() > cap {
            kept.sort_by(|&a, &b| lane_pixels[b].cmp(&lane_pixels[a]).then(a.cmp(&b)));
            for &i in &kept[cap..] {
                keep[i] = false;
            }
        }
    }
    let survivors = keep.iter().filter(|&&k| k).count();
    if survivors > 255 {
        return Err(Error::TooManyLanes(survivors));
    }
    let mut next = 0u8;
    Ok(keep
        .iter()
        .map(|&k| {
            if k {
                next += 1;
                next
            } else {
                0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode;
    use crate::grid::{binarize, label_agreement};

    fn haf_row(values: &[(usize, f64)], width: usize) -> Vec<Vec2<f64>> {
        let mut row = vec![Vec2::zero(); width];
        for &(c, x) in values {
            row[c] = Vec2::new(x, 0.0);
        }
        row
    }

    #[test]
    fn clusters_split_on_sign_turn() {
        let cols = [10, 11, 12, 30, 31, 32];
        let row = haf_row(
            &[(10, 1.0), (11, 0.0), (12, -1.0), (30, 1.0), (31, 0.0), (32, -1.0)],
            40,
        );
        let cl = cluster_row(3, &cols, &row);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].columns, vec![10, 11, 12]);
        assert_eq!(cl[1].columns, vec![30, 31, 32]);
        assert_eq!(cl[1].mean_col, 31.0);
        assert!(cl.iter().all(|c| c.row == 3));
    }

    #[test]
    fn single_pixel_cluster() {
        let row = haf_row(&[(5, 0.0)], 8);
        let cl = cluster_row(0, &[5], &row);
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].columns, vec![5]);
        assert_eq!(cl[0].mean_col, 5.0);
        assert!(cluster_row::<f64>(0, &[], &row).is_empty());
    }

    #[test]
    fn no_split_on_background_gap_alone() {
        let row = haf_row(&[(2, -1.0), (9, -1.0)], 12);
        assert_eq!(cluster_row(0, &[2, 9], &row).len(), 1);
    }

    fn column_field(h: usize, w: usize, row: usize, col: usize, v: Vec2<f64>) -> AffinityFields<f64> {
        let mut vaf = vec![Vec2::zero(); h * w];
        vaf[row * w + col] = v;
        AffinityFields::new(h, w, vec![Vec2::zero(); h * w], vaf).unwrap()
    }

    #[test]
    fn association_error_examples() {
        let tail = LaneTail {
            lane_id: 1,
            last_row: 6,
            last_columns: vec![10],
        };
        let cluster = RowCluster::new(5, vec![10]).unwrap();
        let up = column_field(8, 16, 6, 10, Vec2::new(0.0, -1.0));
        assert_eq!(association_error(&tail, &cluster, &up).unwrap(), 0.0);
        let right = column_field(8, 16, 6, 10, Vec2::new(1.0, 0.0));
        let d = association_error(&tail, &cluster, &right).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn association_error_gt_fields_zero() {
        let (h, w) = (10, 10);
        let mut labels = vec![0u8; h * w];
        labels[9 * w + 4] = 1;
        labels[9 * w + 6] = 1;
        labels[8 * w + 5] = 1;
        let (f, _) = encode::<f64>(&LabelMask::new(h, w, labels).unwrap());
        let tail = LaneTail {
            lane_id: 1,
            last_row: 9,
            last_columns: vec![4, 6],
        };
        let cluster = RowCluster::new(8, vec![5]).unwrap();
        assert!(association_error(&tail, &cluster, &f).unwrap().abs() < 1e-6);
    }

    #[test]
    fn association_error_rejects_cluster_below() {
        let tail = LaneTail {
            lane_id: 1,
            last_row: 3,
            last_columns: vec![1],
        };
        let f = AffinityFields::<f64>::zeros(5, 5).unwrap();
        let c = RowCluster::new(3, vec![1]).unwrap();
        assert!(matches!(association_error(&tail, &c, &f), Err(Error::Precondition(_))));
        let c = RowCluster::new(4, vec![1]).unwrap();
        assert!(association_error(&tail, &c, &f).is_err());
    }

    #[test]
    fn greedy_threshold_and_conflicts() {
        let a = greedy_assign(&[vec![0.0]], &[1], &[3.0], 0.5);
        assert_eq!(a.matches.len(), 1);
        assert!(a.leftover.is_empty());

        let a = greedy_assign(&[vec![0.9]], &[1], &[3.0], 0.5);
        assert!(a.matches.is_empty());
        assert_eq!(a.leftover, vec![0]);

        let errs = vec![vec![0.1, 0.3], vec![0.2, 5.0]];
        let a = greedy_assign(&errs, &[1, 2], &[1.0, 9.0], 1.0);
        assert_eq!(a.matches.len(), 1);
        assert_eq!((a.matches[0].tail_index, a.matches[0].cluster_index), (0, 0));
        assert_eq!(a.leftover, vec![1]);
    }

    #[test]
    fn greedy_tie_prefers_lower_lane_id() {
        let errs = vec![vec![0.2], vec![0.2]];
        let a = greedy_assign(&errs, &[5, 2], &[4.0], 1.0);
        assert_eq!(a.matches[0].lane_id, 2);
    }

    #[test]
    fn empty_bw_decodes_to_nothing() {
        let bw = BinaryMask::new(4, 4, vec![false; 16]).unwrap();
        let f = AffinityFields::<f32>::zeros(4, 4).unwrap();
        let (m, trace) = decode(&bw, &f, &DecodeConfig::default()).unwrap();
        assert_eq!(m.foreground_count(), 0);
        assert_eq!(trace.raw_lane_count(), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let bw = BinaryMask::new(4, 4, vec![false; 16]).unwrap();
        let f = AffinityFields::<f32>::zeros(4, 5).unwrap();
        assert!(matches!(decode(&bw, &f, &DecodeConfig::default()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn negative_tau_rejected() {
        let bw = BinaryMask::new(1, 1, vec![true]).unwrap();
        let f = AffinityFields::<f32>::zeros(1, 1).unwrap();
        assert!(decode(&bw, &f, &DecodeConfig::with_tau(-1.0)).is_err());
    }

    fn two_lane_mask() -> LabelMask {
        let (h, w) = (12, 20);
        let mut labels = vec![0u8; h * w];
        for r in 0..h {
            for c in 2..5 {
                labels[r * w + c] = 1;
            }
            let off = 12 + r / 4;
            for c in off..off + 2 {
                labels[r * w + c] = 2;
            }
        }
        LabelMask::new(h, w, labels).unwrap()
    }

    #[test]
    fn roundtrip_and_replay() {
        let gt = two_lane_mask();
        let (f, _) = encode::<f32>(&gt);
        let (out, trace) = decode(&binarize(&gt), &f, &DecodeConfig::default()).unwrap();
        assert!(label_agreement(&gt, &out).unwrap().is_exact());
        assert_eq!(trace.replay().unwrap(), out);
        assert!(trace.to_string().contains("spawn lane 1"));
    }

    #[test]
    fn min_size_filter_relabels_densely() {
        let (h, w) = (6, 12);
        let mut labels = vec![0u8; h * w];
        // tiny blob spawned first (bottom row), then a long lane
        labels[5 * w + 1] = 1;
        for r in 0..h {
            labels[r * w + 8] = 2;
            labels[r * w + 9] = 2;
        }
        let gt = LabelMask::new(h, w, labels).unwrap();
        let (f, _) = encode::<f64>(&gt);
        let cfg = DecodeConfig {
            min_lane_pixels: 2,
            ..DecodeConfig::default()
        };
        let (out, trace) = decode(&binarize(&gt), &f, &cfg).unwrap();
        assert_eq!(out.lane_labels(), vec![1]);
        assert_eq!(out.get(5, 1), 0);
        assert_eq!(out.get(0, 8), 1);
        assert_eq!(trace.final_labels, vec![0, 1]);
        assert_eq!(trace.replay().unwrap(), out);
    }

    #[test]
    fn max_lanes_keeps_largest() {
        let gt = two_lane_mask();
        let (f, _) = encode::<f64>(&gt);
        let cfg = DecodeConfig {
            max_lanes: Some(1),
            ..DecodeConfig::default()
        };
        let (out, _) = decode(&binarize(&gt), &f, &cfg).unwrap();
        assert_eq!(out.lane_labels(), vec![1]);
        // lane 1 is 3 px wide, lane 2 is 2 px wide
        assert_eq!(out.get(0, 3), 1);
        assert_eq!(out.get(0, 12), 0);
    }
}
