//! Intensity-driven label subdivision with 1-D Gaussian mixtures fitted by
//! expectation maximisation.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::percentile;
use crate::volume::{ImageVolume, LabelVolume};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm1D {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Log-likelihood of the samples under the final parameters.
    pub log_likelihood: f64,
    /// Log-likelihood before the first update and after every iteration.
    pub history: Vec<f64>,
}

impl Gmm1D {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn log_joint(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let z = (x - self.means[j]) / self.stds[j];
            *o = self.weights[j].ln() - self.stds[j].ln() - LN_SQRT_2PI - 0.5 * z * z;
        }
    }

    /// Posterior component probabilities of `x`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = lj.iter().map(|v| (v - m).exp()).sum();
        lj.iter().map(|v| (v - m).exp() / s).collect()
    }

    /// Most responsible component; ties go to the lower index.
    pub fn assign(&self, x: f64) -> usize {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        let mut best = 0;
        for j in 1..lj.len() {
            if lj[j] > lj[best] {
                best = j;
            }
        }
        best
    }
}

fn e_step(samples: &[f64], gmm: &Gmm1D, resp: &mut [f64]) -> f64 {
    let k = gmm.k();
    let mut lj = vec![0.0; k];
    let mut ll = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        gmm.log_joint(x, &mut lj);
        let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = lj.iter().map(|v| (v - m).exp()).sum();
        let lse = m + s.ln();
        ll += lse;
        for j in 0..k {
            resp[i * k + j] = (lj[j] - lse).exp();
        }
    }
    ll
}

fn m_step(samples: &[f64], resp: &[f64], floor: f64, gmm: &mut Gmm1D) {
    let k = gmm.k();
    let n = samples.len() as f64;
    for j in 0..k {
        let (mut nk, mut sx) = (0.0, 0.0);
        for (i, &x) in samples.iter().enumerate() {
            let r = resp[i * k + j];
            nk += r;
            sx += r * x;
        }
        if nk <= 0.0 {
            // An empty component keeps its parameters with a negligible weight.
            gmm.weights[j] = f64::MIN_POSITIVE;
            continue;
        }
        let mean = sx / nk;
        let var = samples
            .iter()
            .enumerate()
            .map(|(i, &x)| resp[i * k + j] * (x - mean).powi(2))
            .sum::<f64>()
            / nk;
        gmm.weights[j] = nk / n;
        gmm.means[j] = mean;
        gmm.stds[j] = var.sqrt().max(floor);
    }
    let total: f64 = gmm.weights.iter().sum();
    for w in &mut gmm.weights {
        *w /= total;
    }
}

/// Fits a `k`-component mixture. Means start at the `(j + 0.5) / k`
/// quantiles, standard deviations at the sample standard deviation, and
/// standard deviations never drop below `1e-3` times the sample range.
/// Stops when an iteration improves the log-likelihood by less than `tol`.
pub fn em_fit_1d(samples: &[f64], k: usize, max_iters: usize, tol: f64) -> Result<Gmm1D> {
    if k == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if samples.len() < k {
        return Err(Error::invalid(format!("{} samples cannot support {k} components", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    let floor = if range > 0.0 { 1e-3 * range } else { 1.0 };
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(floor);
    let mut sorted = samples.to_vec();
    let means = (0..k)
        .map(|j| percentile(&mut sorted, 100.0 * (j as f64 + 0.5) / k as f64).expect("non-empty"))
        .collect();
    let mut gmm = Gmm1D {
        weights: vec![1.0 / k as f64; k],
        means,
        stds: vec![std; k],
        log_likelihood: f64::NEG_INFINITY,
        history: Vec::new(),
    };
    let mut resp = vec![0.0; samples.len() * k];
    let mut ll = e_step(samples, &gmm, &mut resp);
    gmm.history.push(ll);
    for _ in 0..max_iters {
        m_step(samples, &resp, floor, &mut gmm);
        let next = e_step(samples, &gmm, &mut resp);
        gmm.history.push(next);
        let gain = next - ll;
        ll = next;
        if gain < tol {
            break;
        }
    }
    gmm.log_likelihood = ll;
    Ok(gmm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubdivideOptions {
    /// Components per foreground label.
    pub fg_k: usize,
    /// Inclusive range the number of background classes is drawn from.
    pub bg_range: (usize, usize),
    /// Fixed number of background classes, overriding `bg_range`.
    pub bg_classes: Option<usize>,
    pub max_iters: usize,
    pub tol: f64,
    /// Fits use at most this many randomly chosen voxels per label; every
    /// voxel is still assigned.
    pub max_fit_samples: usize,
}

impl Default for SubdivideOptions {
    fn default() -> Self {
        SubdivideOptions {
            fg_k: 2,
            bg_range: (3, 10),
            bg_classes: None,
            max_iters: 200,
            tol: 1e-6,
            max_fit_samples: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subdivision {
    pub labels: LabelVolume,
    /// Sub-label to original label for every id in `labels`.
    pub parents: BTreeMap<i32, i32>,
    pub background_classes: usize,
    pub warnings: Vec<String>,
}

/// Sub-label id for component `index` of `parent`. Foreground labels use
/// `parent * 1000 + index`; background components are `0, -1, -2, ...` so
/// they never collide with an original label id.
pub fn sub_label_id(parent: i32, index: usize) -> Result<i32> {
    if parent == 0 {
        return Ok(-(index as i32));
    }
    if index >= 1000 {
        return Err(Error::invalid("at most 1000 components per label"));
    }
    parent
        .checked_mul(1000)
        .and_then(|v| if parent > 0 { v.checked_add(index as i32) } else { v.checked_sub(index as i32) })
        .ok_or_else(|| Error::invalid(format!("label {parent} is too large to subdivide")))
}

/// Splits every label into intensity clusters: `fg_k` for foreground labels
/// and a random number of classes for the background (label 0).
pub fn subdivide_labels(
    image: &ImageVolume,
    labels: &LabelVolume,
    opts: &SubdivideOptions,
    seed: u64,
) -> Result<Subdivision> {
    if image.dims() != labels.dims() {
        return Err(Error::invalid(format!(
            "image dims {:?} differ from label dims {:?}",
            image.dims(),
            labels.dims()
        )));
    }
    if opts.fg_k == 0 || opts.bg_range.0 == 0 || opts.bg_range.0 > opts.bg_range.1 {
        return Err(Error::invalid("component counts must be positive and ordered"));
    }
    let background_classes = match opts.bg_classes {
        Some(0) => return Err(Error::invalid("background needs at least one class")),
        Some(n) => n,
        None => stream_rng("labelsynth/subdivide-background", seed, 0).random_range(opts.bg_range.0..=opts.bg_range.1),
    };

    let mut voxels: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        voxels.entry(l).or_default().push(i);
    }

    let mut out = vec![0i32; labels.len()];
    let mut parents = BTreeMap::new();
    let mut warnings = Vec::new();
    for (&label, idx) in &voxels {
        let k = if label == 0 { background_classes } else { opts.fg_k };
        let values: Vec<f64> = idx.iter().map(|&i| image.data()[i] as f64).collect();
        if values.len() < k {
            warnings.push(format!(
                "label {label} has {} voxels, fewer than {k} components; left unsplit",
                values.len()
            ));
            let id = sub_label_id(label, 0)?;
            for &i in idx {
                out[i] = id;
            }
            parents.insert(id, label);
            continue;
        }
        let fit_values: Vec<f64> = if values.len() > opts.max_fit_samples {
            let mut rng = stream_rng("labelsynth/subdivide", seed, label as i64 as u64);
            let mut chosen = sample_indices(&mut rng, values.len(), opts.max_fit_samples).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| values[i]).collect()
        } else {
            values.clone()
        };
        let gmm = em_fit_1d(&fit_values, k, opts.max_iters, opts.tol)?;
        // Number components by increasing mean so ids are stable.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| gmm.means[a].total_cmp(&gmm.means[b]).then(a.cmp(&b)));
        let mut rank = vec![0; k];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r;
        }
        for (&i, &x) in idx.iter().zip(&values) {
            let id = sub_label_id(label, rank[gmm.assign(x)])?;
            out[i] = id;
            parents.insert(id, label);
        }
    }
    Ok(Subdivision {
        labels: labels.with_data(out)?,
        parents,
        background_classes,
        warnings,
    })
}

/// Maps every sub-label back to its parent.
pub fn merge_sub_labels(labels: &LabelVolume, parents: &BTreeMap<i32, i32>) -> LabelVolume {
    labels.map(|l| parents.get(&l).copied().unwrap_or(l))
}
