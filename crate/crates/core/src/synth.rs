//! Deterministic synthetic lane scenes and perturbations.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so a seed reproduces the same bytes on every platform.
//!
//! Each lane is a quadratic `x(y) = a*y^2 + b*y + c` rasterized as a run of
//! `thickness` pixels centered on `round(x(y))`. Generated lanes stay inside
//! the image, never touch, and keep at least `min_separation` background
//! columns between neighbours in every row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AffinityFields, BinaryMask, LabelMask};
use crate::scalar::{Real, Vec2};

pub const RETRY_BUDGET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LaneCurve {
    pub fn at(&self, y: f64) -> f64 {
        self.a * y * y + self.b * y + self.c
    }

    /// The quadratic through `(0, top)`, `(bottom_row, bottom)` whose midpoint
    /// deviates from the chord by `bend` pixels.
    pub fn through(top: f64, bottom: f64, bend: f64, bottom_row: f64) -> Self {
        if bottom_row <= 0.0 {
            return Self { a: 0.0, b: 0.0, c: bottom };
        }
        let a = -4.0 * bend / (bottom_row * bottom_row);
        let b = (bottom - top) / bottom_row - a * bottom_row;
        Self { a, b, c: top }
    }
}

/// Rows kept per lane: row `y` survives when
/// `(height - 1 - y + phase) % period < round(period * duty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dash {
    pub period: usize,
    pub duty: f64,
}

impl Dash {
    fn on_rows(&self) -> usize {
        ((self.period as f64 * self.duty).round() as usize).clamp(1, self.period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub num_lanes: usize,
    pub thickness: usize,
    /// Minimum background columns between neighbouring lanes in a row.
    pub min_separation: usize,
    /// Max midpoint deviation (pixels) of the shared road curvature.
    pub max_bend: f64,
    /// Range for the top-row spread of lanes around the vanishing point,
    /// as a fraction of their bottom-row spread.
    pub top_spread: (f64, f64),
    pub dash: Option<Dash>,
    /// Make one adjacent pair meet at exactly `min_separation` in row 0.
    pub converge: bool,
    /// Explicit curves; overrides the random geometry when set.
    pub curves: Option<Vec<LaneCurve>>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 74,
            width: 205,
            num_lanes: 4,
            thickness: 3,
            min_separation: 2,
            max_bend: 0.0,
            top_spread: (0.15, 0.5),
            dash: None,
            converge: false,
            curves: None,
            seed: 0,
        }
    }
}

/// First column of the run a center column rasterizes to.
fn run_start(center: f64, thickness: usize) -> i64 {
    (center - (thickness as f64 - 1.0) / 2.0).round() as i64
}

fn validate_spec(spec: &SceneSpec) -> Result<()> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::InvalidInput("scene needs a nonzero size".into()));
    }
    if spec.thickness == 0 {
        return Err(Error::InvalidInput("thickness must be >= 1".into()));
    }
    if let Some(d) = spec.dash {
        if d.period == 0 || !(d.duty > 0.0 && d.duty <= 1.0) {
            return Err(Error::InvalidInput("dash needs period >= 1 and duty in (0, 1]".into()));
        }
    }
    let (lo, hi) = spec.top_spread;
    if !(0.0 <= lo && lo <= hi) {
        return Err(Error::InvalidInput("top_spread must satisfy 0 <= lo <= hi".into()));
    }
    if let Some(curves) = &spec.curves {
        if curves.len() != spec.num_lanes {
            return Err(Error::InvalidInput(format!(
                "{} explicit curves for {} lanes",
                curves.len(),
                spec.num_lanes
            )));
        }
    }
    if spec.num_lanes > 255 {
        return Err(Error::InvalidInput("at most 255 lanes fit a label mask".into()));
    }
    Ok(())
}

/// Per-lane first column for every row, or why the layout is rejected.
fn layout(spec: &SceneSpec, curves: &[LaneCurve]) -> std::result::Result<Vec<Vec<i64>>, String> {
    let t = spec.thickness as i64;
    let starts: Vec<Vec<i64>> = curves
        .iter()
        .map(|c| (0..spec.height).map(|y| run_start(c.at(y as f64), spec.thickness)).collect())
        .collect();
    for (i, s) in starts.iter().enumerate() {
        if s.iter().any(|&x| x < 0 || x + t > spec.width as i64) {
            return Err(format!("lane {} leaves the image", i + 1));
        }
    }
    for y in 0..spec.height {
        for pair in starts.windows(2) {
            let gap = pair[1][y] - (pair[0][y] + t);
            if gap < spec.min_separation as i64 {
                return Err(format!("separation {gap} < {} at row {y}", spec.min_separation));
            }
        }
    }
    Ok(starts)
}

fn random_curves(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<LaneCurve> {
    let k = spec.num_lanes;
    let w = spec.width as f64;
    let half = spec.thickness as f64 / 2.0;
    let bottom_row = (spec.height - 1) as f64;

    let mut bottoms: Vec<f64> = (0..k).map(|_| rng.random_range(half..(w - half).max(half + 1e-9))).collect();
    bottoms.sort_by(f64::total_cmp);
    let vp = rng.random_range(0.3 * w..=0.7 * w);
    let (lo, hi) = spec.top_spread;
    let spread = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let bend = if spec.max_bend > 0.0 {
        rng.random_range(-spec.max_bend..=spec.max_bend)
    } else {
        0.0
    };
    let mut tops: Vec<f64> = bottoms.iter().map(|&b| vp + (b - vp) * spread).collect();

    if spec.converge && k >= 2 {
        // the pair shares curvature so the gap shrinks linearly to the top row
        let i = rng.random_range(0..k - 1);
        tops[i] = tops[i].round();
        tops[i + 1] = tops[i] + (spec.thickness + spec.min_separation) as f64;
    }
    bottoms
        .iter()
        .zip(&tops)
        .map(|(&b, &t)| LaneCurve::through(t, b, bend, bottom_row))
        .collect()
}

/// Generate a labeled scene. Lanes are numbered `1..=K` left to right by
/// their curve position at the bottom row.
pub fn generate_scene(spec: &SceneSpec) -> Result<LabelMask> {
    validate_spec(spec)?;
    let (h, w) = (spec.height, spec.width);
    if spec.num_lanes == 0 {
        return LabelMask::zeros(h, w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attempts = if spec.curves.is_some() { 1 } else { RETRY_BUDGET };
    let mut last_reason = String::new();
    for _ in 0..attempts {
        let mut curves = match &spec.curves {
            Some(c) => c.clone(),
            None => random_curves(spec, &mut rng),
        };
        let bottom = (h - 1) as f64;
        curves.sort_by(|p, q| p.at(bottom).total_cmp(&q.at(bottom)));
        let starts = match layout(spec, &curves) {
            Ok(s) => s,
            Err(reason) => {
                last_reason = reason;
                continue;
            }
        };
        let phases: Vec<usize> = match spec.dash {
            Some(d) => (0..curves.len()).map(|_| rng.random_range(0..d.period)).collect(),
            None => vec![0; curves.len()],
        };
        let mut labels = vec![0u8; h * w];
        for (i, s) in starts.iter().enumerate() {
            for (y, &x0) in s.iter().enumerate() {
                if let Some(d) = spec.dash {
                    if (h - 1 - y + phases[i]) % d.period >= d.on_rows() {
                        continue;
                    }
                }
                for x in x0..x0 + spec.thickness as i64 {
                    labels[y * w + x as usize] = i as u8 + 1;
                }
            }
        }
        let mask = LabelMask::new(h, w, labels)?;
        check_separation(&mask, spec.min_separation).map_err(Error::InvalidInput)?;
        return Ok(mask);
    }
    Err(Error::Infeasible {
        attempts,
        reason: last_reason,
    })
}

/// Verify that neighbouring lanes in every row are ordered by label and have
/// at least `min_separation` background columns between them.
pub fn check_separation(mask: &LabelMask, min_separation: usize) -> std::result::Result<(), String> {
    for y in 0..mask.height() {
        let mut last: Option<(u8, usize)> = None;
        for (x, &l) in mask.row(y).iter().enumerate() {
            if l == 0 {
                continue;
            }
            if let Some((pl, px)) = last {
                if pl != l {
                    if pl > l {
                        return Err(format!("lanes {pl} and {l} out of order in row {y}"));
                    }
                    let gap = x - px - 1;
                    if gap < min_separation {
                        return Err(format!("lanes {pl} and {l} only {gap} px apart in row {y}"));
                    }
                }
            }
            last = Some((l, x));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation, in degrees, of the rotation applied to every
    /// nonzero field vector.
    pub angle_sigma: f64,
    /// Per-pixel probability of flipping a binary mask pixel.
    pub mask_flip_prob: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            angle_sigma: 0.0,
            mask_flip_prob: 0.0,
            seed: 0,
        }
    }
}

/// Rotate each nonzero HAF and VAF vector by an independent Gaussian angle
/// and renormalize it. Vectors are visited row-major, HAF before VAF per
/// pixel; zero vectors draw nothing.
pub fn perturb_fields<T: Real>(fields: &AffinityFields<T>, noise: &NoiseSpec) -> Result<AffinityFields<T>> {
    if !(noise.angle_sigma >= 0.0 && noise.angle_sigma.is_finite()) {
        return Err(Error::InvalidInput("angle_sigma must be finite and >= 0".into()));
    }
    if noise.angle_sigma == 0.0 {
        return Ok(fields.clone());
    }
    let normal = Normal::new(0.0, noise.angle_sigma.to_radians())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut haf = fields.haf().to_vec();
    let mut vaf = fields.vaf().to_vec();
    let mut rotate = |v: &mut Vec2<T>| {
        if !v.is_zero() {
            let angle: f64 = normal.sample(&mut rng);
            *v = v.rotated(T::of(angle)).normalized();
        }
    };
    for i in 0..haf.len() {
        rotate(&mut haf[i]);
        rotate(&mut vaf[i]);
    }
    AffinityFields::new(fields.height(), fields.width(), haf, vaf)
}

/// Flip each pixel independently with probability `mask_flip_prob`.
pub fn perturb_mask(bw: &BinaryMask, noise: &NoiseSpec) -> Result<BinaryMask> {
    let p = noise.mask_flip_prob;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("mask_flip_prob {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let fg = bw
        .pixels()
        .iter()
        .map(|&b| if rng.random::<f64>() < p { !b } else { b })
        .collect();
    BinaryMask::new(bw.height(), bw.width(), fg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lanes_from_label_mask;

    #[test]
    fn zero_lanes_is_background() {
        let spec = SceneSpec {
            num_lanes: 0,
            ..SceneSpec::default()
        };
        assert_eq!(generate_scene(&spec).unwrap().foreground_count(), 0);
    }

    #[test]
    fn straight_single_lane() {
        let spec = SceneSpec {
            num_lanes: 1,
            thickness: 1,
            curves: Some(vec![LaneCurve { a: 0.0, b: 0.0, c: 40.0 }]),
            ..SceneSpec::default()
        };
        let m = generate_scene(&spec).unwrap();
        let set = lanes_from_label_mask(&m);
        assert_eq!(set.len(), 1);
        assert_eq!(set.lanes()[0].points.len(), spec.height);
        assert!(set.lanes()[0].points.iter().all(|p| p.col == 40.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SceneSpec {
            num_lanes: 5,
            max_bend: 12.0,
            seed: 42,
            ..SceneSpec::default()
        };
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lane_labels(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn converging_pair_meets_min_separation() {
        for seed in 0..20 {
            let spec = SceneSpec {
                num_lanes: 3,
                converge: true,
                thickness: 2,
                min_separation: 2,
                seed,
                ..SceneSpec::default()
            };
            let m = generate_scene(&spec).unwrap();
            check_separation(&m, 2).unwrap();
            let row0 = m.row(0);
            let min_gap = (1..3u8)
                .map(|l| {
                    let right = row0.iter().rposition(|&v| v == l).unwrap();
                    let left = row0.iter().position(|&v| v == l + 1).unwrap();
                    left - right - 1
                })
                .min()
                .unwrap();
            assert_eq!(min_gap, 2, "seed {seed}");
        }
    }

    #[test]
    fn dashes_remove_rows() {
        let spec = SceneSpec {
            num_lanes: 2,
            dash: Some(Dash { period: 10, duty: 0.6 }),
            seed: 3,
            ..SceneSpec::default()
        };
        let m = generate_scene(&spec).unwrap();
        let set = lanes_from_label_mask(&m);
        for lane in set.lanes() {
            let rows = lane.points.len();
            assert!(rows < spec.height && rows >= spec.height * 6 / 10 - 6, "{rows}");
        }
    }

    #[test]
    fn infeasible_spec_errors() {
        let spec = SceneSpec {
            width: 20,
            num_lanes: 8,
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn mask_flip_extremes() {
        let bw = BinaryMask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
        let none = NoiseSpec::default();
        assert_eq!(perturb_mask(&bw, &none).unwrap(), bw);
        let all = NoiseSpec {
            mask_flip_prob: 1.0,
            ..none
        };
        assert_eq!(perturb_mask(&bw, &all).unwrap(), bw.complement());
    }

    #[test]
    fn zero_sigma_is_identity() {
        let f = AffinityFields::new(1, 2, vec![Vec2::new(1.0f32, 0.0); 2], vec![Vec2::new(0.6, -0.8); 2]).unwrap();
        assert_eq!(perturb_fields(&f, &NoiseSpec::default()).unwrap(), f);
    }
}
