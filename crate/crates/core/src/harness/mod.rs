//! File formats, configuration, synthetic data and the batch pipeline.

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use config::{DecoderKind, PipelineConfig};
pub use pipeline::{run_pipeline, DatasetRecord, PipelineReport, Resources};
pub use synth::{synth_batch, synth_generate, ConfusionSets, SynthConfig, SynthSample, TranscriptSampler};
