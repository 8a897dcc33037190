//! Synthetic image generation from label maps by domain randomisation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod config;
pub mod deform;
pub mod error;
pub mod intensity;
mod interp;
pub mod manifest;
pub mod metrics;
pub mod morphology;
pub mod nifti;
pub mod phantom;
pub mod pipeline;
pub mod resolution;
pub mod rng;
pub mod sampling;
pub mod schema;
pub mod stats;
pub mod target;
pub mod volume;

pub use config::{load_config, parse_config, GeneratorConfig};
pub use error::{Error, Result};
pub use volume::{ImageVolume, Interpolation, LabelVolume, Volume};
pub use manifest::SampleManifest;
pub use pipeline::{generate_batch, generate_sample, replay_manifest, BatchReport, SamplePair};
pub use schema::LabelSchema;
