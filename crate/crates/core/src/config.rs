//! Generator hyperparameters and their TOML configuration file.
//!
//! Every key is optional; absent keys take the default prior bounds below.
//! Intensity bounds assume images in the [0, 255] range, rotations are in
//! degrees and spatial quantities in millimetres.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `a_rot`, `b_rot` | -15, 15 | rotation bounds (degrees) |
//! | `a_sc`, `b_sc` | 0.85, 1.15 | scaling bounds |
//! | `a_sh`, `b_sh` | -0.012, 0.012 | shearing bounds |
//! | `a_tr`, `b_tr` | -20, 20 | translation bounds (mm) |
//! | `b_nonlin` | 3 | upper bound of the SVF standard deviation (mm) |
//! | `a_mu`, `b_mu` | 10, 240 | GMM mean bounds |
//! | `a_sigma`, `b_sigma` | 1, 25 | GMM standard deviation bounds |
//! | `b_bias` | 0.5 | upper bound of the log-bias standard deviation |
//! | `gamma_variance` | 0.4 | variance of the log gamma exponent |
//! | `r_hr` | 1 | target (high) resolution (mm) |
//! | `b_res` | 9 | upper bound of the slice spacing (mm) |
//! | `a_alpha`, `b_alpha` | 0.95, 1.15 | slice-thickness blur multiplier bounds |
//! | `crop_size` | [160, 160, 160] | training crop (voxels) |
//! | `flip_prob` | 0.5 | probability of a left/right flip |
//! | `crop_before_deform` | true | crop the map before (true) or after the spatial warp |
//! | `isotropic_resolution` | false | degrade all three axes instead of one |
//! | `svf_grid` | 10 | control points per axis of the velocity grid |
//! | `bias_grid` | 4 | control points per axis of the bias grid |
//! | `min_integration_steps` | 7 | minimum scaling-and-squaring steps |
//! | `seed` | 0 | master seed |
//! | `schema` | none | label schema file; the built-in brain schema otherwise |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub a_rot: f64,
    pub b_rot: f64,
    pub a_sc: f64,
    pub b_sc: f64,
    pub a_sh: f64,
    pub b_sh: f64,
    pub a_tr: f64,
    pub b_tr: f64,
    pub b_nonlin: f64,
    pub a_mu: f64,
    pub b_mu: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub b_bias: f64,
    pub gamma_variance: f64,
    pub r_hr: f64,
    pub b_res: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub crop_size: [usize; 3],
    pub flip_prob: f64,
    pub crop_before_deform: bool,
    pub isotropic_resolution: bool,
    pub svf_grid: usize,
    pub bias_grid: usize,
    pub min_integration_steps: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            a_rot: -15.0,
            b_rot: 15.0,
            a_sc: 0.85,
            b_sc: 1.15,
            a_sh: -0.012,
            b_sh: 0.012,
            a_tr: -20.0,
            b_tr: 20.0,
            b_nonlin: 3.0,
            a_mu: 10.0,
            b_mu: 240.0,
            a_sigma: 1.0,
            b_sigma: 25.0,
            b_bias: 0.5,
            gamma_variance: 0.4,
            r_hr: 1.0,
            b_res: 9.0,
            a_alpha: 0.95,
            b_alpha: 1.15,
            crop_size: [160, 160, 160],
            flip_prob: 0.5,
            crop_before_deform: true,
            isotropic_resolution: false,
            svf_grid: 10,
            bias_grid: 4,
            min_integration_steps: 7,
            seed: 0,
            schema: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("a_rot", self.a_rot, "b_rot", self.b_rot),
            ("a_sc", self.a_sc, "b_sc", self.b_sc),
            ("a_sh", self.a_sh, "b_sh", self.b_sh),
            ("a_tr", self.a_tr, "b_tr", self.b_tr),
            ("a_mu", self.a_mu, "b_mu", self.b_mu),
            ("a_sigma", self.a_sigma, "b_sigma", self.b_sigma),
            ("a_alpha", self.a_alpha, "b_alpha", self.b_alpha),
            ("r_hr", self.r_hr, "b_res", self.b_res),
        ];
        for (ka, a, kb, b) in pairs {
            for (k, v) in [(ka, a), (kb, b)] {
                if !v.is_finite() {
                    return Err(Error::config(k, format!("must be finite, got {v}")));
                }
            }
            if a > b {
                return Err(Error::config(ka, format!("{ka} = {a} exceeds {kb} = {b}")));
            }
        }
        let non_negative = [
            ("b_nonlin", self.b_nonlin),
            ("a_sigma", self.a_sigma),
            ("b_bias", self.b_bias),
            ("gamma_variance", self.gamma_variance),
            ("a_alpha", self.a_alpha),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(k, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.a_sc > 0.0) {
            return Err(Error::config("a_sc", "scalings must be positive"));
        }
        if !(self.r_hr > 0.0) {
            return Err(Error::config("r_hr", "must be positive"));
        }
        if self.crop_size.contains(&0) {
            return Err(Error::config("crop_size", "every component must be positive"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("flip_prob", "must lie in [0, 1]"));
        }
        if self.svf_grid < 2 {
            return Err(Error::config("svf_grid", "needs at least 2 control points per axis"));
        }
        if self.bias_grid < 2 {
            return Err(Error::config("bias_grid", "needs at least 2 control points per axis"));
        }
        if self.min_integration_steps < 1 {
            return Err(Error::config("min_integration_steps", "must be at least 1"));
        }
        Ok(())
    }

    /// Standard deviation of the log gamma exponent.
    pub fn sigma_gamma(&self) -> f64 {
        self.gamma_variance.sqrt()
    }

    /// The fully resolved configuration as TOML, for logging and manifests.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parses and validates a TOML configuration string.
pub fn parse_config(text: &str) -> Result<GeneratorConfig> {
    let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".to_string());
        Error::config(key, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a configuration file. Relative `schema` paths resolve against the
/// file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<GeneratorConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let (Some(schema), Some(dir)) = (&cfg.schema, path.parent()) {
        if schema.is_relative() {
            cfg.schema = Some(dir.join(schema));
        }
    }
    Ok(cfg)
}
