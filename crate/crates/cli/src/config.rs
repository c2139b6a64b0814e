//! Optional JSON config file. Every section and field is optional; missing
//! values fall back to library defaults and command-line flags win over both.

use std::path::Path;

use laneaf_core::losses::DEFAULT_FG_WEIGHT;
use laneaf_core::metrics::MetricConfig;
use laneaf_core::synth::{NoiseSpec, SceneSpec};
use laneaf_core::DecodeConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub decode: DecodeConfig,
    pub metrics: MetricConfig,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub encode: EncodeSection,
    pub roundtrip: RoundtripSection,
    pub loss: LossSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub literal_vaf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundtripSection {
    pub min_agreement: f64,
}

impl Default for RoundtripSection {
    fn default() -> Self {
        Self { min_agreement: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub w: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { w: DEFAULT_FG_WEIGHT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub height: usize,
    pub width: usize,
    pub lanes: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = laneaf_core::bench::BenchConfig::default();
        Self {
            height: d.height,
            width: d.width,
            lanes: d.lanes,
            iters: d.iters,
            seed: d.seed,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format(format!("config {}: {e}", path.display())))
    }
}

/// Overwrite `slot` when the flag was given.
pub fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
