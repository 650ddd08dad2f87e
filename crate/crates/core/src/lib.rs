//! Post-detector recognition pipeline for fingerspelling video.
//!
//! The crate consumes scored per-frame hand detections and per-frame
//! emission scores (or encoder states) and provides:
//!
//! * [`geometry`]: box arithmetic and greedy non-maxima suppression,
//! * [`tube`]: dynamic-programming linking of detections into a signing-hand tube,
//! * [`alphabet`]: the 31-letter fingerspelling alphabet and the CTC collapse map,
//! * [`ctc`]: CTC emission layer, label probabilities, loss gradient and greedy decoding,
//! * [`attention`]: forward scoring and beam decoding for an attention LSTM decoder,
//! * [`lm`]: character language models (add-k n-gram reference) and perplexity,
//! * [`beam`]: CTC prefix beam search with language-model fusion,
//! * [`metrics`]: letter accuracy, substitution statistics and frame-rate buckets,
//! * [`harness`]: text file formats, configuration, synthetic data and the batch pipeline.

pub mod alphabet;
pub mod attention;
pub mod beam;
pub mod ctc;
mod error;
pub mod geometry;
pub mod harness;
pub mod lm;
pub mod math;
pub mod metrics;
pub mod tube;

pub use error::{Error, Result};
