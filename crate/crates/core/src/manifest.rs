//! Per-sample record of every random draw and the digests of its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::deform::AffineParams;
use crate::error::{Error, Result};
use crate::intensity::GmmParams;
use crate::resolution::ResolutionParams;
use crate::target::SkullStrip;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub version: u32,
    pub sample_index: u64,
    pub master_seed: u64,
    /// Hex key of the sample's random stream.
    pub stream_key: String,
    pub map_index: usize,
    pub map_count: usize,
    pub map_digest: String,
    /// Stage names in execution order.
    pub stages: Vec<String>,
    pub flipped: bool,
    pub crop_offset: [usize; 3],
    pub crop_size: [usize; 3],
    pub skull_strip: SkullStrip,
    pub lesions_kept: bool,
    pub affine: AffineParams,
    pub svf_sigma: f64,
    pub integration_steps: u32,
    pub gmm: GmmParams,
    pub bias_sigma: f64,
    pub rescale_degenerate: bool,
    pub gamma: f64,
    pub resolution: ResolutionParams,
    pub output_dims: [usize; 3],
    pub output_spacing: [f64; 3],
    pub image_digest: String,
    pub target_digest: String,
    pub schema_digest: String,
    pub config: GeneratorConfig,
}

impl SampleManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidFormat(format!("manifest: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
