//! Partial-discharge fault detection for covered overhead conductors.
//!
//! The pipeline runs per three-phase frame: phase alignment and baseline
//! flattening ([`preprocess`]), noise estimation ([`noise`]), pulse detection
//! ([`detect`]), waveform clustering ([`cluster`]), frame features
//! ([`features`]) and a boosted-tree ensemble ([`model`]).

pub mod analysis;
pub mod cluster;
pub mod config;
pub mod detect;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod preprocess;
pub mod types;

pub use analysis::{Analyzer, FrameAnalysis, PhaseAnalysis, PulseRecord};
pub use cluster::{ClusterModel, ClusterSet, Scope};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use features::{FeatureVector, TemplateBank};
pub use metrics::ConfusionCounts;
pub use model::{Dataset, EnsembleModel, Variant};
pub use types::{FlatSignal, Phase, Pulse, SignalFrame, Waveform, SAMPLES_PER_CYCLE};
