//! Acquisition resolution simulation: slice-profile blur along one axis,
//! downsampling to the slice spacing and upsampling back.

use std::f64::consts::{LN_10, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::sampling::uniform;
use crate::volume::{resample_to_grid, ImageVolume, Interpolation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionParams {
    /// Slice-select axis (0 = x, 1 = y, 2 = z).
    pub axis: usize,
    pub r_spac: f64,
    pub r_thick: f64,
    pub alpha: f64,
    pub r_hr: f64,
    /// Degrade all three axes rather than only `axis`.
    #[serde(default)]
    pub isotropic: bool,
}

impl ResolutionParams {
    /// Parameters that leave an image at `r_hr` untouched apart from the
    /// thickness blur implied by `alpha`.
    pub fn native(r_hr: f64, alpha: f64) -> Self {
        ResolutionParams {
            axis: 2,
            r_spac: r_hr,
            r_thick: r_hr,
            alpha,
            r_hr,
            isotropic: false,
        }
    }

    pub fn sigma(&self) -> Result<f64> {
        thickness_sigma(self.r_thick, self.r_hr, self.alpha)
    }
}

/// Draws the axis, then `r_spac ~ U(r_hr, b_res)`, `r_thick ~ U(r_hr, r_spac)`
/// and `alpha ~ U(a_alpha, b_alpha)`.
pub fn sample_resolution<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<ResolutionParams> {
    if cfg.b_res < cfg.r_hr {
        return Err(Error::invalid(format!(
            "b_res = {} is below r_hr = {}",
            cfg.b_res, cfg.r_hr
        )));
    }
    let axis = rng.random_range(0..3usize);
    let r_spac = uniform(rng, cfg.r_hr, cfg.b_res);
    let r_thick = uniform(rng, cfg.r_hr, r_spac);
    let alpha = uniform(rng, cfg.a_alpha, cfg.b_alpha);
    Ok(ResolutionParams {
        axis,
        r_spac,
        r_thick,
        alpha,
        r_hr: cfg.r_hr,
        isotropic: cfg.isotropic_resolution,
    })
}

/// Standard deviation, in voxels at `r_hr`, of the Gaussian that attenuates
/// the signal power by a factor of ten at the cut-off frequency of a slice
/// of thickness `r_thick`.
pub fn thickness_sigma(r_thick: f64, r_hr: f64, alpha: f64) -> Result<f64> {
    if !(r_thick > 0.0) || !(r_hr > 0.0) || !(alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "thickness sigma needs r_thick > 0, r_hr > 0 and alpha >= 0, got ({r_thick}, {r_hr}, {alpha})"
        )));
    }
    Ok(2.0 * alpha * LN_10 / (2.0 * PI) * r_thick / r_hr)
}

/// Normalised Gaussian taps `-r..=r` with `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// 1-D Gaussian convolution along `axis` with edge replication.
pub fn blur_axis(image: &ImageVolume, sigma: f64, axis: usize) -> Result<ImageVolume> {
    if axis > 2 {
        return Err(Error::invalid(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("blur sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let dims = image.dims();
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let src = image.data();
    let mut out = vec![0f32; src.len()];
    let mut line = vec![0f64; n];
    for start in 0..src.len() {
        // Visit each line once, from its first voxel.
        if (start / stride) % n != 0 {
            continue;
        }
        for (i, v) in line.iter_mut().enumerate() {
            *v = src[start + i * stride] as f64;
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = (i as i64 + k as i64 - radius).clamp(0, n as i64 - 1) as usize;
                acc += w * line[j];
            }
            out[start + i * stride] = acc as f32;
        }
    }
    image.with_data(out)
}

fn degrade_axis(image: &ImageVolume, params: &ResolutionParams, axis: usize, sigma: f64) -> Result<ImageVolume> {
    let blurred = blur_axis(image, sigma, axis)?;
    let dims = image.dims();
    let spacing = image.spacing();
    let mut lr_dims = dims;
    let mut lr_spacing = spacing;
    lr_dims[axis] = ((dims[axis] as f64 * params.r_hr / params.r_spac).round() as usize).max(1);
    lr_spacing[axis] = params.r_spac;
    let low = resample_to_grid(&blurred, lr_dims, lr_spacing, Interpolation::Trilinear)?;
    let back = resample_to_grid(&low, dims, spacing, Interpolation::Trilinear)?;
    Ok(back.with_affine(*image.affine()))
}

/// Blurs by the slice profile, samples at the slice spacing and brings the
/// result back onto the input grid. Geometry is preserved exactly.
pub fn simulate_lr(image: &ImageVolume, params: &ResolutionParams) -> Result<ImageVolume> {
    let tol = 1e-6 * params.r_hr;
    if image.spacing().iter().any(|s| (s - params.r_hr).abs() > tol) {
        return Err(Error::invalid(format!(
            "image spacing {:?} is not isotropic at r_hr = {}",
            image.spacing(),
            params.r_hr
        )));
    }
    if params.axis > 2 {
        return Err(Error::invalid(format!("axis must be 0, 1 or 2, got {}", params.axis)));
    }
    if params.r_spac < params.r_hr {
        return Err(Error::invalid(format!(
            "slice spacing {} is finer than r_hr = {}",
            params.r_spac, params.r_hr
        )));
    }
    let sigma = params.sigma()?;
    if params.isotropic {
        let mut out = image.clone();
        for axis in 0..3 {
            out = degrade_axis(&out, params, axis, sigma)?;
        }
        Ok(out)
    } else {
        degrade_axis(image, params, params.axis, sigma)
    }
}
