//! Audio-visual segmentation by projecting audio and visual embeddings into
//! the prompt space of a frozen text-prompted segmentation model.

pub mod adapter;
pub mod avsbench_io;
pub mod config;
pub mod datamodel;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod pipeline;
pub mod resample;
pub mod tensorfile;

pub use adapter::{AdapterStack, AdapterTap};
pub use config::RunConfig;
pub use datamodel::{AudioSegment, Frame, MaskKind, MaskSet, Split, Subset, VideoClip};
pub use encoders::{BackendConfig, BackendDescriptor, BackendKind, EncoderSuite};
pub use error::{Error, Result};
pub use fusion::{ProjectionParams, PromptFeature, PromptSource};
pub use metrics::{MetricsReport, VideoMetrics};
pub use objectives::LossBreakdown;
pub use pipeline::{ModelState, RunManifest};
