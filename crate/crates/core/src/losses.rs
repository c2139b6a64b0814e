//! Forward-only reference losses for a binary-mask + affinity-field model.
//!
//! * weighted BCE: `-(1/N) sum [w t log o + (1 - t) log(1 - o)]`
//! * IoU: `(1/N) sum [1 - t o / (t + o - t o + eps)]`
//! * AF: `(1/N_fg) sum_fg [|t_haf - o_haf|_1 + |t_vaf - o_vaf|_1]`
//! * total: the plain sum of the three.
//!
//! Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before use.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{AffinityFields, BinaryMask, ScalarGrid};
use crate::scalar::Real;

/// Probability clamp applied before logarithms.
pub const PROB_EPS: f64 = 1e-7;
/// Guard added to the IoU denominator.
pub const IOU_EPS: f64 = 1e-6;
/// Foreground weight: background outnumbers lane pixels roughly 9.6 to 1.
pub const DEFAULT_FG_WEIGHT: f64 = 9.6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs<T> {
    pub targets: ScalarGrid<T>,
    pub outputs: ScalarGrid<T>,
    pub af_targets: AffinityFields<T>,
    pub af_preds: AffinityFields<T>,
    pub fg_mask: BinaryMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValues<T> {
    pub bce: T,
    pub iou: T,
    pub af: T,
    pub total: T,
    pub w: T,
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

fn check_segmentation<T: Real>(targets: &ScalarGrid<T>, outputs: &ScalarGrid<T>) -> Result<()> {
    same_dims(targets.dims(), outputs.dims())?;
    if let Some(t) = targets.values().iter().find(|t| !(**t >= T::zero() && **t <= T::one())) {
        return Err(Error::InvalidInput(format!("target {t} outside [0, 1]")));
    }
    if let Some(o) = outputs.values().iter().find(|o| !o.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite output {o}")));
    }
    Ok(())
}

fn clamp_prob<T: Real>(o: T) -> T {
    let eps = T::of(PROB_EPS);
    o.max(eps).min(T::one() - eps)
}

pub fn weighted_bce<T: Real>(targets: &ScalarGrid<T>, outputs: &ScalarGrid<T>, w: T) -> Result<T> {
    check_segmentation(targets, outputs)?;
    if !(w > T::zero() && w.is_finite()) {
        return Err(Error::InvalidInput(format!("weight must be positive, got {w}")));
    }
    let mut sum = T::zero();
    for (&t, &o) in targets.values().iter().zip(outputs.values()) {
        let o = clamp_prob(o);
        sum = sum + w * t * o.ln() + (T::one() - t) * (T::one() - o).ln();
    }
    Ok(-sum / T::of(targets.values().len() as f64))
}

pub fn iou_loss<T: Real>(targets: &ScalarGrid<T>, outputs: &ScalarGrid<T>) -> Result<T> {
    check_segmentation(targets, outputs)?;
    let eps = T::of(IOU_EPS);
    let mut sum = T::zero();
    for (&t, &o) in targets.values().iter().zip(outputs.values()) {
        let o = clamp_prob(o);
        let inter = t * o;
        sum = sum + T::one() - inter / (t + o - inter + eps);
    }
    Ok(sum / T::of(targets.values().len() as f64))
}

pub fn af_l1_loss<T: Real>(
    af_targets: &AffinityFields<T>,
    af_preds: &AffinityFields<T>,
    fg_mask: &BinaryMask,
) -> Result<T> {
    same_dims(af_targets.dims(), af_preds.dims())?;
    same_dims(af_targets.dims(), fg_mask.dims())?;
    let mut sum = T::zero();
    let mut n_fg = 0usize;
    for (i, &fg) in fg_mask.pixels().iter().enumerate() {
        if !fg {
            continue;
        }
        n_fg += 1;
        let (th, ph) = (af_targets.haf()[i], af_preds.haf()[i]);
        let (tv, pv) = (af_targets.vaf()[i], af_preds.vaf()[i]);
        sum = sum
            + (th.x - ph.x).abs()
            + (th.y - ph.y).abs()
            + (tv.x - pv.x).abs()
            + (tv.y - pv.y).abs();
    }
    if n_fg == 0 {
        return Ok(T::zero());
    }
    if !sum.is_finite() {
        return Err(Error::InvalidInput("non-finite affinity values on foreground".into()));
    }
    Ok(sum / T::of(n_fg as f64))
}

pub fn total_loss<T: Real>(inputs: &LossInputs<T>, w: T) -> Result<LossValues<T>> {
    let bce = weighted_bce(&inputs.targets, &inputs.outputs, w)?;
    let iou = iou_loss(&inputs.targets, &inputs.outputs)?;
    let af = af_l1_loss(&inputs.af_targets, &inputs.af_preds, &inputs.fg_mask)?;
    Ok(LossValues {
        bce,
        iou,
        af,
        total: bce + iou + af,
        w,
    })
}
