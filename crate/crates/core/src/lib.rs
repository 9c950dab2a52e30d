//! Evaluation and data-processing toolkit for optical music recognition
//! systems that emit ABC notation.
//!
//! The crate covers the whole path from a model's textual output to a score:
//!
//! * [`abc`] parses and emits a practical subset of ABC 2.1.
//! * [`canon`] rewrites a tune into the canonical training dialect
//!   (fixed unit note, fixed bars per text line, masked text).
//! * [`mxl`] models MusicXML documents as ordered labeled trees.
//! * [`convert`] turns an ABC tune into a MusicXML tree.
//! * [`metrics`] implements TEDn, OMR-NED and the CER/SER/LER error rates.
//! * [`bpe`] trains and applies a byte-level BPE tokenizer.
//! * [`imgprep`] segments tall score images into patch tensors and applies
//!   image-space augmentations.
//!
//! Edit-distance code is generic over the cost scalar (see [`Cost`]); the
//! aliases below fix the scalar for the common cases.

pub mod abc;
pub mod bpe;
pub mod canon;
pub mod convert;
pub mod imgprep;
pub mod metrics;
pub mod mxl;
mod scalar;

pub use scalar::Cost;

/// Exact rational used for every duration in the ABC model.
pub type Rational = num_rational::Ratio<i64>;

/// Tree edit costs with floating-point weights.
pub type EditCostsF64 = metrics::ted::EditCosts<f64>;
/// Tree edit costs with integer weights.
pub type EditCostsU32 = metrics::ted::EditCosts<u32>;
/// Tree edit costs with exact rational weights.
pub type EditCostsRational = metrics::ted::EditCosts<Rational>;

/// OMR-NED category cost table with floating-point weights.
pub type CostTableF64 = metrics::omrned::CostTable<f64>;
/// OMR-NED category cost table with exact rational weights.
pub type CostTableRational = metrics::omrned::CostTable<Rational>;

/// Segment tensor in single precision, the layout vision encoders consume.
pub type SegmentBatchF32 = imgprep::SegmentBatch<f32>;
/// Segment tensor in double precision.
pub type SegmentBatchF64 = imgprep::SegmentBatch<f64>;
