//! Lane instance codec built on per-pixel affinity fields.
//!
//! A labeled lane mask is encoded into a horizontal affinity field (HAF),
//! whose x-component points at the lane center within each row, and a
//! vertical affinity field (VAF), a unit vector pointing at the lane's mean
//! position in the next lane row above. The decoder consumes a binary mask
//! plus (predicted) fields and recovers an unbounded number of lane
//! instances with a bottom-to-top, row-by-row clustering pass.
//!
//! Modules:
//!
//! * [`grid`] – label/binary masks, affinity fields and lane sets.
//! * [`encoder`] – ground-truth HAF/VAF generation.
//! * [`decoder`] – row clustering, association error and lane assembly.
//! * [`losses`] – forward reference implementations of the training losses.
//! * [`metrics`] – point accuracy and IoU-based lane F1.
//! * [`synth`] – deterministic synthetic scenes and perturbations.
//! * [`io`] – PGM/PPM, `LAF1` field container and lane JSON.
//! * [`bench`] – decode latency harness.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix the common
//! instantiations.

pub mod bench;
pub mod decoder;
pub mod encoder;
mod error;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
mod scalar;
pub mod synth;

pub use decoder::{decode, DecodeConfig, DecodeTrace};
pub use encoder::{encode, EncodeConfig, EncodeReport};
pub use error::{Error, FormatError, Result};
pub use grid::{binarize, lanes_from_label_mask, AffinityFields, BinaryMask, LabelMask, Lane, LanePoint, LaneSet};
pub use scalar::{Real, Vec2};

/// Single-precision fields, the on-disk `LAF1` representation.
pub type AffinityFieldsF32 = grid::AffinityFields<f32>;
/// Double-precision fields.
pub type AffinityFieldsF64 = grid::AffinityFields<f64>;
pub type ScalarGridF32 = grid::ScalarGrid<f32>;
pub type ScalarGridF64 = grid::ScalarGrid<f64>;
pub type LossInputsF32 = losses::LossInputs<f32>;
pub type LossInputsF64 = losses::LossInputs<f64>;
pub type LossValuesF64 = losses::LossValues<f64>;
