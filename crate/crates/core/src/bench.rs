//! Decode latency harness.

use std::time::Instant;

use serde::Serialize;

use crate::decoder::{decode, DecodeConfig};
use crate::encoder::encode;
use crate::error::Result;
use crate::grid::binarize;
use crate::synth::{generate_scene, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub height: usize,
    pub width: usize,
    pub lanes: usize,
    pub iters: usize,
    pub seed: u64,
    pub decode: DecodeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        // one-eighth of a 1640x590 frame
        Self {
            height: 74,
            width: 205,
            lanes: 6,
            iters: 200,
            seed: 0,
            decode: DecodeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub height: usize,
    pub width: usize,
    pub lanes_requested: usize,
    pub lanes_decoded: usize,
    pub iters: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Generate a curved scene, encode it once, then time `iters` decodes.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let spec = SceneSpec {
        height: cfg.height,
        width: cfg.width,
        num_lanes: cfg.lanes,
        thickness: 3,
        max_bend: cfg.width as f64 / 20.0,
        seed: cfg.seed,
        ..SceneSpec::default()
    };
    let mask = generate_scene(&spec)?;
    let (fields, _) = encode::<f32>(&mask);
    let bw = binarize(&mask);
    let iters = cfg.iters.max(1);

    let (out, _) = decode(&bw, &fields, &cfg.decode)?;
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t0 = Instant::now();
        let res = decode(&bw, &fields, &cfg.decode)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(res);
    }
    samples.sort_by(f64::total_cmp);
    Ok(BenchReport {
        height: cfg.height,
        width: cfg.width,
        lanes_requested: cfg.lanes,
        lanes_decoded: out.lane_labels().len(),
        iters,
        median_ms: percentile(&samples, 0.5),
        p95_ms: percentile(&samples, 0.95),
        mean_ms: samples.iter().sum::<f64>() / iters as f64,
        min_ms: samples[0],
        max_ms: samples[iters - 1],
    })
}
