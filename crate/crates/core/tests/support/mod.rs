//! Test-only oracles. Nothing here calls into the decoder, encoder or metric
//! code it is used to check.

#![allow(dead_code)]

use laneaf_core::synth::{Dash, SceneSpec};

/// The 200-scene acceptance corpus: 2..=6 lanes, thickness 2..=4, cycling
/// through straight, curved, converging and dashed variants.
pub fn acceptance_spec(seed: u64) -> SceneSpec {
    let num_lanes = 2 + (seed % 5) as usize;
    let thickness = 2 + ((seed / 20) % 3) as usize;
    let mut spec = SceneSpec {
        height: 74,
        width: 205,
        num_lanes,
        thickness,
        min_separation: 2,
        seed,
        ..SceneSpec::default()
    };
    match (seed / 5) % 4 {
        0 => {}
        1 => spec.max_bend = 15.0,
        2 => {
            spec.converge = true;
            spec.max_bend = 8.0;
        }
        _ => {
            spec.dash = Some(Dash { period: 10, duty: 0.6 });
            spec.max_bend = 8.0;
        }
    }
    spec
}

pub type V = (f64, f64);

/// Brute-force row clustering: walk the row, test the sign turn on the raw
/// values.
pub fn ref_cluster(cols: &[usize], hx: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..cols.len() {
        let start = i == 0 || (hx[cols[i - 1]] <= 0.0 && hx[cols[i]] > 0.0);
        if start {
            out.push(vec![cols[i]]);
        } else {
            out.last_mut().unwrap().push(cols[i]);
        }
    }
    out
}

/// Straight-line association error.
pub fn ref_error(tail_row: usize, tail_cols: &[usize], vaf_row: &[V], c_row: usize, c_cols: &[usize]) -> f64 {
    let mut s = 0.0;
    for &c in c_cols {
        s += c as f64;
    }
    let mean = s / c_cols.len() as f64;
    let mut total = 0.0;
    for &x in tail_cols {
        let dx = mean - x as f64;
        let dy = c_row as f64 - tail_row as f64;
        let len = (dx * dx + dy * dy).sqrt();
        let (vx, vy) = vaf_row[x];
        let rx = dx - vx * len;
        let ry = dy - vy * len;
        total += (rx * rx + ry * ry).sqrt();
    }
    total / tail_cols.len() as f64
}

/// Reference decoder over plain arrays. Returns raw spawn labels per pixel
/// (no size filter).
pub fn ref_decode(h: usize, w: usize, fg: &[bool], haf: &[V], vaf: &[V], tau: f64) -> Vec<u32> {
    let mut out = vec![0u32; h * w];
    // (lane id, row, cols)
    let mut tails: Vec<(u32, usize, Vec<usize>)> = Vec::new();
    for y in (0..h).rev() {
        let cols: Vec<usize> = (0..w).filter(|&x| fg[y * w + x]).collect();
        if cols.is_empty() {
            continue;
        }
        let hx: Vec<f64> = (0..w).map(|x| haf[y * w + x].0).collect();
        let clusters = ref_cluster(&cols, &hx);
        let means: Vec<f64> = clusters
            .iter()
            .map(|c| c.iter().map(|&x| x as f64).sum::<f64>() / c.len() as f64)
            .collect();
        let mut cand = Vec::new();
        for (ti, (id, row, tc)) in tails.iter().enumerate() {
            let vrow = &vaf[row * w..(row + 1) * w];
            for (ci, c) in clusters.iter().enumerate() {
                let e = ref_error(*row, tc, vrow, y, c);
                if e <= tau {
                    cand.push((e, *id, means[ci], ti, ci));
                }
            }
        }
        cand.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.partial_cmp(&b.2).unwrap())
        });
        let mut t_used = vec![false; tails.len()];
        let mut c_used = vec![false; clusters.len()];
        for &(_, id, _, ti, ci) in &cand {
            if t_used[ti] || c_used[ci] {
                continue;
            }
            t_used[ti] = true;
            c_used[ci] = true;
            for &x in &clusters[ci] {
                out[y * w + x] = id;
            }
            tails[ti].1 = y;
            tails[ti].2 = clusters[ci].clone();
        }
        for ci in 0..clusters.len() {
            if !c_used[ci] {
                let id = tails.len() as u32 + 1;
                for &x in &clusters[ci] {
                    out[y * w + x] = id;
                }
                tails.push((id, y, clusters[ci].clone()));
            }
        }
    }
    out
}

/// Lane-level F1 with width-`lane_w` rasterization and greedy IoU matching,
/// from raw label arrays.
pub fn ref_lane_f1(h: usize, w: usize, pred: &[u32], gt: &[u32], lane_w: usize, thr: f64) -> f64 {
    let lanes = |labels: &[u32]| -> Vec<Vec<(usize, f64)>> {
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut acc = vec![vec![(0.0f64, 0usize); h]; max];
        for y in 0..h {
            for x in 0..w {
                let l = labels[y * w + x] as usize;
                if l > 0 {
                    acc[l - 1][y].0 += x as f64;
                    acc[l - 1][y].1 += 1;
                }
            }
        }
        acc.into_iter()
            .filter(|rows| rows.iter().any(|r| r.1 > 0))
            .map(|rows| {
                (0..h)
                    .rev()
                    .filter(|&y| rows[y].1 > 0)
                    .map(|y| (y, rows[y].0 / rows[y].1 as f64))
                    .collect()
            })
            .collect()
    };
    let raster = |pts: &Vec<(usize, f64)>| -> Vec<bool> {
        let mut m = vec![false; h * w];
        let mut put = |y: usize, c: f64| {
            let start = (c - (lane_w as f64 - 1.0) / 2.0 + 0.5).floor() as i64;
            for x in start..start + lane_w as i64 {
                if x >= 0 && (x as usize) < w {
                    m[y * w + x as usize] = true;
                }
            }
        };
        if pts.len() == 1 {
            put(pts[0].0, pts[0].1);
        }
        for s in pts.windows(2) {
            let ((y0, c0), (y1, c1)) = (s[0], s[1]);
            for y in y1..=y0 {
                let t = (y0 - y) as f64 / (y0 - y1) as f64;
                put(y, c0 + t * (c1 - c0));
            }
        }
        m
    };
    let pm: Vec<Vec<bool>> = lanes(pred).iter().map(raster).collect();
    let gm: Vec<Vec<bool>> = lanes(gt).iter().map(raster).collect();
    let mut pairs = Vec::new();
    for (i, p) in pm.iter().enumerate() {
        for (j, g) in gm.iter().enumerate() {
            let inter = p.iter().zip(g).filter(|(a, b)| **a && **b).count();
            let uni = p.iter().zip(g).filter(|(a, b)| **a || **b).count();
            let iou = if uni == 0 { 0.0 } else { inter as f64 / uni as f64 };
            if iou >= thr && iou > 0.0 {
                pairs.push((iou, j, i));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pu = vec![false; pm.len()];
    let mut gu = vec![false; gm.len()];
    let mut tp = 0usize;
    for (_, j, i) in pairs {
        if !pu[i] && !gu[j] {
            pu[i] = true;
            gu[j] = true;
            tp += 1;
        }
    }
    let p = if pm.is_empty() { 0.0 } else { tp as f64 / pm.len() as f64 };
    let r = if gm.is_empty() { 0.0 } else { tp as f64 / gm.len() as f64 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}
