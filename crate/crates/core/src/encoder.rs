//! Ground-truth affinity field generation.
//!
//! Every lane is walked bottom to top. In each occupied row the HAF of a lane
//! pixel is `(sign(mean - x), 0)`. The VAF of a lane pixel points from the
//! pixel to the lane's mean column in the next occupied row above it
//! (possibly several rows up for dashed markings). The topmost row of a lane
//! keeps a zero VAF.

use crate::grid::{binarize, AffinityFields, BinaryMask, LabelMask};
use crate::scalar::{Real, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncodeConfig {
    /// Store the per-axis sign form `(sign(dx), -1)` instead of the unit
    /// displacement. Off by default. Vectors have norm `sqrt(2)` off-center.
    pub vaf_sign_form: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodeReport {
    pub lanes_encoded: usize,
    /// Occupied rows per lane, in ascending label order.
    pub rows_touched_per_lane: Vec<usize>,
    /// Lane rows that contain exactly one pixel.
    pub degenerate_rows: usize,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Encode with the default configuration.
pub fn encode<T: Real>(mask: &LabelMask) -> (AffinityFields<T>, EncodeReport) {
    encode_with(mask, &EncodeConfig::default())
}

pub fn encode_with<T: Real>(mask: &LabelMask, cfg: &EncodeConfig) -> (AffinityFields<T>, EncodeReport) {
    let (h, w) = mask.dims();
    let mut haf = vec![Vec2::<T>::zero(); h * w];
    let mut vaf = vec![Vec2::<T>::zero(); h * w];

    // per label: list of (row, columns) bottom to top
    let mut rows_by_label: Vec<Vec<(usize, Vec<usize>)>> = vec![Vec::new(); 256];
    for y in (0..h).rev() {
        for (x, &l) in mask.row(y).iter().enumerate() {
            if l == 0 {
                continue;
            }
            let rows = &mut rows_by_label[l as usize];
            match rows.last_mut() {
                Some((r, cols)) if *r == y => cols.push(x),
                _ => rows.push((y, vec![x])),
            }
        }
    }

    let mut report = EncodeReport::default();
    for rows in rows_by_label.iter().filter(|r| !r.is_empty()) {
        report.lanes_encoded += 1;
        report.rows_touched_per_lane.push(rows.len());

        let means: Vec<f64> = rows
            .iter()
            .map(|(_, cols)| cols.iter().sum::<usize>() as f64 / cols.len() as f64)
            .collect();

        for (i, (y, cols)) in rows.iter().enumerate() {
            if cols.len() == 1 {
                report.degenerate_rows += 1;
            }
            let mean = means[i];
            for &x in cols {
                haf[y * w + x] = Vec2::new(T::of(sign(mean - x as f64)), T::zero());
            }
            // link to the next occupied row above, carried across gaps
            let Some((y_up, _)) = rows.get(i + 1) else {
                continue;
            };
            let mean_up = means[i + 1];
            let gap = (y - y_up) as f64;
            for &x in cols {
                let dx = mean_up - x as f64;
                let v = if cfg.vaf_sign_form {
                    Vec2::new(sign(dx), -1.0)
                } else {
                    Vec2::new(dx, -gap).normalized()
                };
                vaf[y * w + x] = Vec2::new(T::of(v.x), T::of(v.y));
            }
        }
    }

    let fields = AffinityFields::new(h, w, haf, vaf).expect("dimensions come from a valid mask");
    (fields, report)
}

/// The binary mask that pairs with encoded fields as decoder input.
pub fn encode_binary_companion(mask: &LabelMask) -> BinaryMask {
    binarize(mask)
}
