//! Label-conditioned Gaussian mixture synthesis and intensity corruption:
//! multiplicative bias field, min-max rescaling and gamma augmentation.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::interp;
use crate::sampling::{normal, uniform};
use crate::stats::percentile;
use crate::volume::{ImageVolume, LabelVolume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelIntensity {
    pub label: i32,
    pub mean: f64,
    pub std: f64,
}

/// Per-label Gaussian means and standard deviations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GmmParams {
    entries: Vec<LabelIntensity>,
}

impl GmmParams {
    pub fn new(entries: impl IntoIterator<Item = LabelIntensity>) -> Self {
        let map: BTreeMap<i32, LabelIntensity> = entries.into_iter().map(|e| (e.label, e)).collect();
        GmmParams {
            entries: map.into_values().collect(),
        }
    }

    pub fn get(&self, label: i32) -> Option<&LabelIntensity> {
        self.entries
            .binary_search_by_key(&label, |e| e.label)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn entries(&self) -> &[LabelIntensity] {
        &self.entries
    }
}

/// Independent `mean ~ U(a_mu, b_mu)` then `std ~ U(a_sigma, b_sigma)` for
/// each label in ascending order.
pub fn sample_gmm_params<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    labels: &BTreeSet<i32>,
    rng: &mut R,
) -> Result<GmmParams> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot sample GMM parameters for an empty label set"));
    }
    let entries: Vec<_> = labels
        .iter()
        .map(|&label| {
            let mean = uniform(rng, cfg.a_mu, cfg.b_mu);
            let std = uniform(rng, cfg.a_sigma, cfg.b_sigma);
            LabelIntensity { label, mean, std }
        })
        .collect();
    Ok(GmmParams::new(entries))
}

/// Draws every voxel independently from `N(mean_L, std_L^2)` of its label,
/// in storage order. Negative draws are kept.
pub fn synth_gmm_image<R: Rng + ?Sized>(labels: &LabelVolume, params: &GmmParams, rng: &mut R) -> Result<ImageVolume> {
    for l in labels.labels() {
        if params.get(l).is_none() {
            return Err(Error::MissingLabelParams(l));
        }
    }
    let mut cached = None::<(i32, LabelIntensity)>;
    let mut data = Vec::with_capacity(labels.len());
    for &l in labels.data() {
        let p = match cached {
            Some((cl, p)) if cl == l => p,
            _ => {
                let p = *params.get(l).expect("checked above");
                cached = Some((l, p));
                p
            }
        };
        data.push((p.mean + normal(rng, p.std)) as f32);
    }
    labels.with_data(data)
}

/// Log-domain bias control grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasParams {
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub grid_dims: [usize; 3],
}

/// `sigma ~ U(0, b_bias)`, then each control value `~ N(0, sigma^2)`.
pub fn sample_bias_params<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> BiasParams {
    let sigma = uniform(rng, 0.0, cfg.b_bias);
    let n = cfg.bias_grid;
    BiasParams {
        sigma,
        grid: (0..n * n * n).map(|_| normal(rng, sigma)).collect(),
        grid_dims: [n; 3],
    }
}

/// Exponentiated, trilinearly upsampled bias field (unit spacing).
pub fn bias_field_from_params(params: &BiasParams, dims: [usize; 3]) -> Result<ImageVolume> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!("bias field dims must be >= 2, got {dims:?}")));
    }
    let log_field = interp::upsample_grid(&params.grid, params.grid_dims, dims);
    ImageVolume::from_vec(log_field.into_iter().map(|v| v.exp() as f32).collect(), dims, [1.0; 3])
}

/// Samples a smooth, strictly positive multiplicative field. The returned
/// volume is already exponentiated; pass it straight to [`apply_bias`].
pub fn sample_bias_field<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    dims: [usize; 3],
    rng: &mut R,
) -> Result<(ImageVolume, BiasParams)> {
    let params = sample_bias_params(cfg, rng);
    Ok((bias_field_from_params(&params, dims)?, params))
}

/// Voxel-wise product; the result keeps the image's geometry.
pub fn apply_bias(image: &ImageVolume, bias: &ImageVolume) -> Result<ImageVolume> {
    if image.dims() != bias.dims() {
        return Err(Error::invalid(format!(
            "bias dims {:?} do not match image dims {:?}",
            bias.dims(),
            image.dims()
        )));
    }
    let data = image.data().iter().zip(bias.data()).map(|(a, b)| a * b).collect();
    image.with_data(data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rescaled {
    pub volume: ImageVolume,
    /// The two percentiles coincided; the output is all zeros.
    pub degenerate: bool,
}

/// Maps the `lo_pct` percentile to 0 and the `hi_pct` percentile to 1, then
/// clamps to [0, 1].
pub fn rescale_minmax(image: &ImageVolume, lo_pct: f64, hi_pct: f64) -> Result<Rescaled> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::invalid(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})"
        )));
    }
    let (lo, hi) = if lo_pct == 0.0 && hi_pct == 100.0 {
        image.min_max()
    } else {
        let mut values: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
        let lo = percentile(&mut values, lo_pct).expect("non-empty volume");
        let hi = percentile(&mut values, hi_pct).expect("non-empty volume");
        (lo, hi)
    };
    if !(hi > lo) {
        return Ok(Rescaled {
            volume: image.map(|_| 0.0f32),
            degenerate: true,
        });
    }
    let span = hi - lo;
    let volume = image.map(|v| (((v as f64 - lo) / span).clamp(0.0, 1.0)) as f32);
    Ok(Rescaled {
        volume,
        degenerate: false,
    })
}

const UNIT_TOLERANCE: f64 = 1e-6;

/// `v -> v^exponent` on an image in [0, 1].
pub fn apply_gamma(image: &ImageVolume, exponent: f64) -> Result<ImageVolume> {
    let (lo, hi) = image.min_max();
    if lo < -UNIT_TOLERANCE || hi > 1.0 + UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "gamma augmentation needs intensities in [0, 1], got [{lo}, {hi}]"
        )));
    }
    if exponent == 1.0 {
        return Ok(image.map(|v| v.clamp(0.0, 1.0)));
    }
    Ok(image.map(|v| (v.clamp(0.0, 1.0) as f64).powf(exponent) as f32))
}

/// Draws `gamma ~ N(0, gamma_variance)` and raises the image to `exp(gamma)`.
pub fn gamma_augment<R: Rng + ?Sized>(image: &ImageVolume, cfg: &GeneratorConfig, rng: &mut R) -> Result<(ImageVolume, f64)> {
    let gamma = normal(rng, cfg.sigma_gamma());
    Ok((apply_gamma(image, gamma.exp())?, gamma))
}
