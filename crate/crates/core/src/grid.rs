//! Grid types shared by every stage of the codec.
//!
//! Rows are indexed `0` (top) to `height - 1` (bottom), columns `0` (left) to
//! `width - 1` (right). All grids are row-major. Decoding runs bottom to top,
//! so the "previous" row of row `y` is `y - 1`, the row above it.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec2};

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidInput(format!(
            "grid dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    match height.checked_mul(width) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "{height}x{width} grid needs {} cells, got {len}",
            height.saturating_mul(width)
        ))),
    }
}

/// Instance labels: `0` is background, `k >= 1` is lane `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        check_dims(height, width, labels.len())?;
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height.saturating_mul(width)])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.labels[row * self.width..(row + 1) * self.width]
    }

    /// Distinct nonzero labels in ascending order.
    pub fn lane_labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Apply `map` to every label. `map(0)` should normally be `0`.
    pub fn relabel(&self, map: impl Fn(u8) -> u8) -> Self {
        Self {
            height: self.height,
            width: self.width,
            labels: self.labels.iter().map(|&l| map(l)).collect(),
        }
    }

    /// Mirror left to right.
    pub fn flip_lr(&self) -> Self {
        let mut labels = Vec::with_capacity(self.labels.len());
        for row in self.labels.chunks_exact(self.width) {
            labels.extend(row.iter().rev());
        }
        Self {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

/// Foreground flags, the decoder's mask input.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    fg: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, fg: Vec<bool>) -> Result<Self> {
        check_dims(height, width, fg.len())?;
        Ok(Self { height, width, fg })
    }

    /// Any nonzero source value counts as foreground.
    pub fn from_values(height: usize, width: usize, values: &[u8]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&v| v != 0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[bool] {
        &self.fg
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.fg[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.fg[row * self.width..(row + 1) * self.width]
    }

    pub fn count(&self) -> usize {
        self.fg.iter().filter(|&&b| b).count()
    }

    /// Ascending foreground columns of one row.
    pub fn row_columns(&self, row: usize) -> Vec<usize> {
        self.row(row)
            .iter()
            .enumerate()
            .filter_map(|(x, &b)| b.then_some(x))
            .collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            fg: self.fg.iter().map(|b| !b).collect(),
        }
    }

    pub fn flip_lr(&self) -> Self {
        let mut fg = Vec::with_capacity(self.fg.len());
        for row in self.fg.chunks_exact(self.width) {
            fg.extend(row.iter().rev());
        }
        Self {
            height: self.height,
            width: self.width,
            fg,
        }
    }
}

/// A dense real-valued grid, used for loss targets and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Real> ScalarGrid<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, v: T) -> Result<Self> {
        Self::new(height, width, vec![v; height.saturating_mul(width)])
    }

    /// `1` on foreground, `0` elsewhere.
    pub fn from_binary(bw: &BinaryMask) -> Self {
        Self {
            height: bw.height,
            width: bw.width,
            values: bw
                .fg
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }
}

/// Paired horizontal and vertical affinity fields over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityFields<T> {
    height: usize,
    width: usize,
    haf: Vec<Vec2<T>>,
    vaf: Vec<Vec2<T>>,
}

impl<T: Real> AffinityFields<T> {
    pub fn new(height: usize, width: usize, haf: Vec<Vec2<T>>, vaf: Vec<Vec2<T>>) -> Result<Self> {
        check_dims(height, width, haf.len())?;
        check_dims(height, width, vaf.len())?;
        Ok(Self {
            height,
            width,
            haf,
            vaf,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        let n = height.saturating_mul(width);
        Self::new(height, width, vec![Vec2::zero(); n], vec![Vec2::zero(); n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn haf(&self) -> &[Vec2<T>] {
        &self.haf
    }

    pub fn vaf(&self) -> &[Vec2<T>] {
        &self.vaf
    }

    pub fn haf_at(&self, row: usize, col: usize) -> Vec2<T> {
        self.haf[row * self.width + col]
    }

    pub fn vaf_at(&self, row: usize, col: usize) -> Vec2<T> {
        self.vaf[row * self.width + col]
    }

    pub fn haf_row(&self, row: usize) -> &[Vec2<T>] {
        &self.haf[row * self.width..(row + 1) * self.width]
    }

    pub fn vaf_row(&self, row: usize) -> &[Vec2<T>] {
        &self.vaf[row * self.width..(row + 1) * self.width]
    }

    pub fn into_parts(self) -> (Vec<Vec2<T>>, Vec<Vec2<T>>) {
        (self.haf, self.vaf)
    }

    pub fn cast<U: Real>(&self) -> AffinityFields<U> {
        AffinityFields {
            height: self.height,
            width: self.width,
            haf: self.haf.iter().map(Vec2::cast).collect(),
            vaf: self.vaf.iter().map(Vec2::cast).collect(),
        }
    }

    /// Mirror left to right, negating the x-component of every vector.
    pub fn flip_lr(&self) -> Self {
        let flip = |v: &[Vec2<T>]| {
            let mut out = Vec::with_capacity(v.len());
            for row in v.chunks_exact(self.width) {
                out.extend(row.iter().rev().map(Vec2::flip_x));
            }
            out
        };
        Self {
            height: self.height,
            width: self.width,
            haf: flip(&self.haf),
            vaf: flip(&self.vaf),
        }
    }
}

/// One sampled lane position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePoint {
    pub row: usize,
    pub col: f64,
}

impl LanePoint {
    pub fn new(row: usize, col: f64) -> Self {
        Self { row, col }
    }
}

/// A lane as a bottom-to-top polyline of per-row mean columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: u32,
    /// Strictly decreasing `row`.
    pub points: Vec<LanePoint>,
}

impl Lane {
    pub fn new(id: u32, points: Vec<LanePoint>) -> Result<Self> {
        if id == 0 {
            return Err(Error::InvalidInput("lane id must be positive".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidInput(format!("lane {id} has no points")));
        }
        if points.windows(2).any(|w| w[1].row >= w[0].row) {
            return Err(Error::InvalidInput(format!(
                "lane {id} points must have strictly decreasing rows"
            )));
        }
        if points.iter().any(|p| !p.col.is_finite()) {
            return Err(Error::InvalidInput(format!("lane {id} has a non-finite column")));
        }
        Ok(Self { id, points })
    }

    /// Column at `row`: the stored point, or linear interpolation between the
    /// bracketing points. `None` outside the lane's row extent.
    pub fn column_at(&self, row: usize) -> Option<f64> {
        let bottom = self.points.first()?.row;
        let top = self.points.last()?.row;
        if row > bottom || row < top {
            return None;
        }
        // points are sorted by decreasing row
        let idx = self.points.partition_point(|p| p.row > row);
        let hi = self.points[idx];
        if hi.row == row {
            return Some(hi.col);
        }
        let lo = self.points[idx - 1];
        let t = (lo.row - row) as f64 / (lo.row - hi.row) as f64;
        Some(lo.col + t * (hi.col - lo.col))
    }
}

/// Ordered collection of lanes with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneSet {
    lanes: Vec<Lane>,
}

impl LaneSet {
    pub fn new(lanes: Vec<Lane>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(lanes.len());
        for lane in &lanes {
            if !ids.insert(lane.id) {
                return Err(Error::InvalidInput(format!("duplicate lane id {}", lane.id)));
            }
        }
        Ok(Self { lanes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    pub fn into_lanes(self) -> Vec<Lane> {
        self.lanes
    }
}

/// Foreground flags of a label mask.
pub fn binarize(mask: &LabelMask) -> BinaryMask {
    BinaryMask {
        height: mask.height,
        width: mask.width,
        fg: mask.labels.iter().map(|&l| l > 0).collect(),
    }
}

/// One lane per label present, with a point per occupied row at the mean
/// column of that label's pixels in the row. Lanes are ordered by label.
pub fn lanes_from_label_mask(mask: &LabelMask) -> LaneSet {
    // label -> (row -> (sum, count)), rows visited bottom-up
    let mut acc: BTreeMap<u8, Vec<(usize, f64)>> = BTreeMap::new();
    for row in (0..mask.height).rev() {
        let mut sums: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
        for (x, &l) in mask.row(row).iter().enumerate() {
            if l > 0 {
                let e = sums.entry(l).or_default();
                e.0 += x as u64;
                e.1 += 1;
            }
        }
        for (l, (s, n)) in sums {
            acc.entry(l).or_default().push((row, s as f64 / n as f64));
        }
    }
    let lanes = acc
        .into_iter()
        .map(|(id, pts)| Lane {
            id: id as u32,
            points: pts.into_iter().map(|(r, c)| LanePoint::new(r, c)).collect(),
        })
        .collect();
    LaneSet { lanes }
}

/// Pixel agreement between two label masks after the best greedy
/// one-to-one mapping of `a`'s lanes onto `b`'s lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAgreement {
    /// Fraction of all pixels whose mapped label matches.
    pub fraction: f64,
    /// Lane count in `a` and `b`.
    pub lanes_a: usize,
    pub lanes_b: usize,
    /// `(label in a, label in b, overlapping pixels)` for every pair that
    /// shares at least one pixel, including background (label 0).
    pub confusion: Vec<(u8, u8, usize)>,
    /// `a` label mapped to `b` label.
    pub mapping: Vec<(u8, u8)>,
}

impl LabelAgreement {
    /// Identical up to a relabeling of lanes.
    pub fn is_exact(&self) -> bool {
        self.fraction == 1.0 && self.lanes_a == self.lanes_b
    }
}

pub fn label_agreement(a: &LabelMask, b: &LabelMask) -> Result<LabelAgreement> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    let mut counts = vec![0usize; 256 * 256];
    for (&la, &lb) in a.labels.iter().zip(&b.labels) {
        counts[la as usize * 256 + lb as usize] += 1;
    }
    let confusion: Vec<(u8, u8, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| ((i / 256) as u8, (i % 256) as u8, c))
        .collect();

    let mut pairs: Vec<&(u8, u8, usize)> =
        confusion.iter().filter(|(la, lb, _)| *la > 0 && *lb > 0).collect();
    pairs.sort_by(|p, q| q.2.cmp(&p.2).then(p.0.cmp(&q.0)).then(p.1.cmp(&q.1)));
    let mut map_a = [None::<u8>; 256];
    let mut used_b = [false; 256];
    map_a[0] = Some(0);
    used_b[0] = true;
    for &&(la, lb, _) in &pairs {
        if map_a[la as usize].is_none() && !used_b[lb as usize] {
            map_a[la as usize] = Some(lb);
            used_b[lb as usize] = true;
        }
    }
    let agree: usize = confusion
        .iter()
        .filter(|(la, lb, _)| map_a[*la as usize] == Some(*lb))
        .map(|c| c.2)
        .sum();
    let mapping = (1..=255u8)
        .filter_map(|la| map_a[la as usize].map(|lb| (la, lb)))
        .collect();
    Ok(LabelAgreement {
        fraction: agree as f64 / a.labels.len() as f64,
        lanes_a: a.lane_labels().len(),
        lanes_b: b.lane_labels().len(),
        confusion,
        mapping,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_zero_mask() {
        let m = LabelMask::zeros(4, 4).unwrap();
        let bw = binarize(&m);
        assert_eq!(bw.count(), 0);
        assert_eq!(bw.dims(), (4, 4));
    }

    #[test]
    fn binarize_follows_labels() {
        let m = LabelMask::new(2, 3, vec![0, 1, 3, 3, 0, 1]).unwrap();
        let bw = binarize(&m);
        assert_eq!(bw.pixels(), &[false, true, true, true, false, true]);
    }

    #[test]
    fn binarize_popcount_205x74() {
        let (h, w) = (74usize, 205usize);
        let mut labels = vec![0u8; h * w];
        // 500 foreground pixels spread with a stride coprime to the size
        let mut idx = 0usize;
        for k in 0..500 {
            idx = (idx + 29) % (h * w);
            labels[idx] = (k % 4 + 1) as u8;
        }
        let expected = labels.iter().filter(|&&l| l != 0).count();
        assert_eq!(expected, 500);
        let bw = binarize(&LabelMask::new(h, w, labels).unwrap());
        assert_eq!(bw.count(), 500);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(LabelMask::new(0, 3, vec![]).is_err());
        assert!(LabelMask::new(2, 2, vec![0; 3]).is_err());
        assert!(BinaryMask::new(1, 0, vec![]).is_err());
    }

    #[test]
    fn vertical_lane_points() {
        let (h, w) = (10, 12);
        let mut labels = vec![0u8; h * w];
        for r in 0..h {
            labels[r * w + 7] = 1;
        }
        let set = lanes_from_label_mask(&LabelMask::new(h, w, labels).unwrap());
        assert_eq!(set.len(), 1);
        let lane = &set.lanes()[0];
        assert_eq!(lane.points.len(), 10);
        assert_eq!(lane.points[0], LanePoint::new(9, 7.0));
        assert_eq!(lane.points[9], LanePoint::new(0, 7.0));
    }

    #[test]
    fn row_mean_column() {
        let mut labels = vec![0u8; 10];
        labels[4] = 2;
        labels[5] = 2;
        labels[6] = 2;
        let set = lanes_from_label_mask(&LabelMask::new(1, 10, labels).unwrap());
        assert_eq!(set.lanes()[0].id, 2);
        assert_eq!(set.lanes()[0].points, vec![LanePoint::new(0, 5.0)]);
    }

    #[test]
    fn column_at_interpolates() {
        let lane = Lane::new(1, vec![LanePoint::new(9, 0.0), LanePoint::new(5, 8.0)]).unwrap();
        assert_eq!(lane.column_at(9), Some(0.0));
        assert_eq!(lane.column_at(7), Some(4.0));
        assert_eq!(lane.column_at(5), Some(8.0));
        assert_eq!(lane.column_at(4), None);
        assert_eq!(lane.column_at(10), None);
    }

    #[test]
    fn lane_validation() {
        assert!(Lane::new(0, vec![LanePoint::new(1, 1.0)]).is_err());
        assert!(Lane::new(1, vec![]).is_err());
        assert!(Lane::new(1, vec![LanePoint::new(1, 1.0), LanePoint::new(1, 2.0)]).is_err());
        let l = Lane::new(1, vec![LanePoint::new(1, 1.0)]).unwrap();
        assert!(LaneSet::new(vec![l.clone(), l]).is_err());
    }

    #[test]
    fn agreement_permutation() {
        let a = LabelMask::new(1, 6, vec![1, 1, 0, 2, 2, 0]).unwrap();
        let b = a.relabel(|l| match l {
            1 => 7,
            2 => 3,
            x => x,
        });
        let ag = label_agreement(&a, &b).unwrap();
        assert!(ag.is_exact());
        let c = LabelMask::new(1, 6, vec![1, 1, 0, 1, 1, 0]).unwrap();
        let ag = label_agreement(&a, &c).unwrap();
        assert!(!ag.is_exact());
        assert!((ag.fraction - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn flips_are_involutions() {
        let m = LabelMask::new(2, 3, vec![1, 0, 2, 0, 3, 0]).unwrap();
        assert_eq!(m.flip_lr().flip_lr(), m);
        assert_eq!(m.flip_lr().labels(), &[2, 0, 1, 0, 3, 0]);
    }
}
