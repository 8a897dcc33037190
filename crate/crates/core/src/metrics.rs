//! Overlap and surface metrics, soft volumes and effect sizes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::stats::{mean, percentile, sample_variance};
use crate::volume::{ImageVolume, LabelVolume, Volume, Voxel};

/// Per-label soft predictions sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    labels: Vec<i32>,
    channels: Vec<ImageVolume>,
}

impl ProbMap {
    pub fn new(labels: Vec<i32>, channels: Vec<ImageVolume>) -> Result<Self> {
        if labels.is_empty() || labels.len() != channels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} channels",
                labels.len(),
                channels.len()
            )));
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
            return Err(Error::invalid("duplicate label in probability map"));
        }
        if channels.iter().any(|c| !c.same_geometry(&channels[0])) {
            return Err(Error::invalid("probability channels differ in geometry"));
        }
        for (l, c) in labels.iter().zip(&channels) {
            let (lo, hi) = c.min_max();
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::invalid(format!("channel {l} leaves [0, 1]: [{lo}, {hi}]")));
            }
        }
        Ok(ProbMap { labels, channels })
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn channels(&self) -> &[ImageVolume] {
        &self.channels
    }

    pub fn channel(&self, label: i32) -> Option<&ImageVolume> {
        self.labels.iter().position(|&l| l == label).map(|i| &self.channels[i])
    }

    /// Whether every voxel's probabilities sum to one within `tol`.
    pub fn is_normalised(&self, tol: f64) -> bool {
        (0..self.channels[0].len()).all(|i| {
            let s: f64 = self.channels.iter().map(|c| c.data()[i] as f64).sum();
            (s - 1.0).abs() <= tol
        })
    }

    /// Label with the highest probability per voxel; ties go to the first
    /// channel.
    pub fn argmax(&self) -> LabelVolume {
        let first = &self.channels[0];
        let data = (0..first.len())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.channels.len() {
                    if self.channels[k].data()[i] > self.channels[best].data()[i] {
                        best = k;
                    }
                }
                self.labels[best]
            })
            .collect();
        first.with_data(data).expect("same length")
    }
}

/// One binary channel per entry of `labels`.
pub fn one_hot(volume: &LabelVolume, labels: &[i32]) -> Result<ProbMap> {
    let channels = labels
        .iter()
        .map(|&l| volume.map(|v| if v == l { 1.0f32 } else { 0.0 }))
        .collect();
    ProbMap::new(labels.to_vec(), channels)
}

fn check_geometry<T: Voxel, U: Voxel>(a: &Volume<T>, b: &Volume<U>) -> Result<()> {
    if !a.same_geometry(b) {
        return Err(Error::invalid(format!(
            "geometry mismatch: dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// `1 - mean_k 2 sum(Y_k T_k) / sum(Y_k^2 + T_k^2)` over the channels of
/// `truth`. A channel empty in both maps scores a perfect term.
pub fn soft_dice_loss(pred: &ProbMap, truth: &ProbMap) -> Result<f64> {
    if pred.labels != truth.labels {
        return Err(Error::invalid("prediction and truth have different label channels"));
    }
    check_geometry(&pred.channels[0], &truth.channels[0])?;
    let mut total = 0.0;
    for (y, t) in pred.channels.iter().zip(&truth.channels) {
        let (mut num, mut den) = (0.0, 0.0);
        for (&yv, &tv) in y.data().iter().zip(t.data()) {
            let (yv, tv) = (yv as f64, tv as f64);
            num += yv * tv;
            den += yv * yv + tv * tv;
        }
        total += if den == 0.0 { 1.0 } else { 2.0 * num / den };
    }
    Ok(1.0 - total / pred.labels.len() as f64)
}

/// Binary Dice of `label`; 1 when both masks are empty.
pub fn hard_dice(a: &LabelVolume, b: &LabelVolume, label: i32) -> Result<f64> {
    check_geometry(a, b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (ia, ib) = (x == label, y == label);
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Mask voxels with at least one 6-neighbour outside the mask. Voxels on
/// the volume border count as surface.
pub fn surface_voxels(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut out = vec![false; mask.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !mask[i] {
                    continue;
                }
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                out[i] = border
                    || !mask[i - 1]
                    || !mask[i + 1]
                    || !mask[i - nx]
                    || !mask[i + nx]
                    || !mask[i - nx * ny]
                    || !mask[i + nx * ny];
            }
        }
    }
    out
}

/// Lower envelope of parabolas for one line of squared distances, with
/// sample spacing `w`.
#[allow(clippy::needless_range_loop)]
fn edt_line(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, zb: &mut Vec<f64>) {
    v.clear();
    zb.clear();
    let w2 = w * w;
    let key = |q: usize| f[q] + w2 * (q * q) as f64;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    zb.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (key(q) - key(p)) / (2.0 * w2 * (q - p) as f64);
                    if s <= *zb.last().expect("paired with v") {
                        v.pop();
                        zb.pop();
                    } else {
                        v.push(q);
                        zb.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && zb[k + 1] < p as f64 {
            k += 1;
        }
        let d = w * (p as f64 - v[k] as f64);
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in mm^2) from every voxel to the
/// nearest feature voxel.
pub fn squared_distance_transform(features: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let (mut v, mut zb) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let n = dims[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for start in 0..d.len() {
            if !(start / strides[axis]).is_multiple_of(n) {
                continue;
            }
            for i in 0..n {
                line[i] = d[start + i * strides[axis]];
            }
            edt_line(&line, spacing[axis], &mut out, &mut v, &mut zb);
            for i in 0..n {
                d[start + i * strides[axis]] = out[i];
            }
        }
    }
    d
}

fn directed_surface_distances<'a>(from: &'a [bool], to_surface_sq: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    from.iter()
        .zip(to_surface_sq)
        .filter(|(s, _)| **s)
        .map(|(_, d)| d.sqrt())
}

/// Surface distances pooled over both directions, in mm.
pub fn surface_distances(a: &LabelVolume, b: &LabelVolume, label: i32) -> Result<Vec<f64>> {
    check_geometry(a, b)?;
    let dims = a.dims();
    let ma: Vec<bool> = a.data().iter().map(|&v| v == label).collect();
    let mb: Vec<bool> = b.data().iter().map(|&v| v == label).collect();
    if !ma.contains(&true) || !mb.contains(&true) {
        return Err(Error::MissingStructure(label));
    }
    let sa = surface_voxels(&ma, dims);
    let sb = surface_voxels(&mb, dims);
    let da = squared_distance_transform(&sa, dims, a.spacing());
    let db = squared_distance_transform(&sb, dims, a.spacing());
    Ok(directed_surface_distances(&sa, &db)
        .chain(directed_surface_distances(&sb, &da))
        .collect())
}

/// 95th percentile of the pooled surface distances, in mm.
pub fn sd95(a: &LabelVolume, b: &LabelVolume, label: i32) -> Result<f64> {
    let mut d = surface_distances(a, b, label)?;
    Ok(percentile(&mut d, 95.0).expect("both surfaces are non-empty"))
}

/// Sum of a soft map times the voxel volume, in mm^3.
pub fn soft_volume(channel: &ImageVolume) -> f64 {
    let [sx, sy, sz] = channel.spacing();
    channel.data().iter().map(|&v| v as f64).sum::<f64>() * sx * sy * sz
}

/// Voxel count of `label` times the voxel volume, in mm^3.
pub fn label_volume(labels: &LabelVolume, label: i32) -> f64 {
    let [sx, sy, sz] = labels.spacing();
    labels.count(label) as f64 * sx * sy * sz
}

/// Standardised mean difference with the pooled sample standard deviation.
pub fn cohens_d(group_c: &[f64], group_ad: &[f64]) -> Result<f64> {
    let (nc, na) = (group_c.len(), group_ad.len());
    if nc < 2 || na < 2 {
        return Err(Error::invalid(format!("each group needs at least 2 values, got {nc} and {na}")));
    }
    let pooled = ((nc - 1) as f64 * sample_variance(group_c) + (na - 1) as f64 * sample_variance(group_ad))
        / (nc + na - 2) as f64;
    if !(pooled > 0.0) {
        return Err(Error::UndefinedEffect);
    }
    Ok((mean(group_c) - mean(group_ad)) / pooled.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelMetrics {
    pub label: i32,
    pub dice: f64,
    /// `None` when the structure is missing from either segmentation.
    pub sd95_mm: Option<f64>,
    pub volume_pred_mm3: f64,
    pub volume_gt_mm3: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<LabelMetrics>,
}

impl MetricsReport {
    pub fn mean_dice(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.dice).sum::<f64>() / self.rows.len() as f64)
    }

    pub fn mean_sd95(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.sd95_mm).collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    /// Columns `label,dice,sd95_mm,volume_pred_mm3,volume_gt_mm3`, one row
    /// per label and a final `mean` row. Missing values are written as `NA`.
    pub fn to_csv(&self) -> String {
        let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("label,dice,sd95_mm,volume_pred_mm3,volume_gt_mm3\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{},{:.3},{:.3}",
                r.label,
                r.dice,
                na(r.sd95_mm),
                r.volume_pred_mm3,
                r.volume_gt_mm3
            );
        }
        let vol_mean = |f: fn(&LabelMetrics) -> f64| {
            (!self.rows.is_empty()).then(|| self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64)
        };
        let _ = writeln!(
            out,
            "mean,{},{},{},{}",
            na(self.mean_dice()),
            na(self.mean_sd95()),
            vol_mean(|r| r.volume_pred_mm3).map_or("NA".into(), |v| format!("{v:.3}")),
            vol_mean(|r| r.volume_gt_mm3).map_or("NA".into(), |v| format!("{v:.3}")),
        );
        out
    }
}

/// Dice, SD95 and volumes for each of `labels`.
pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume, labels: &BTreeSet<i32>) -> Result<MetricsReport> {
    check_geometry(pred, gt)?;
    let mut rows = Vec::with_capacity(labels.len());
    for &label in labels {
        let sd = match sd95(pred, gt, label) {
            Ok(v) => Some(v),
            Err(Error::MissingStructure(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(LabelMetrics {
            label,
            dice: hard_dice(pred, gt, label)?,
            sd95_mm: sd,
            volume_pred_mm3: label_volume(pred, label),
            volume_gt_mm3: label_volume(gt, label),
        });
    }
    Ok(MetricsReport { rows })
}
