//! Dense 3D volumes with voxel spacing and a voxel-to-world affine.
//!
//! Data is stored x-fastest (`x + nx * (y + ny * z)`); orientation lives in
//! the affine only. Volumes are never mutated in place: every operation
//! returns a new volume.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interp::{self, axis_tap, centred_coordinate, linear_index, nearest_index, AxisTap};

/// Scalar types a [`Volume`] may hold.
pub trait Voxel: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    /// Whether values may be blended by interpolation. Label types are not.
    const INTERPOLABLE: bool;

    fn to_f64(self) -> f64;

    fn from_f64(v: f64) -> Self;

    /// Raw bit pattern, used for content digests.
    fn bits(self) -> u32;
}

impl Voxel for f32 {
    const INTERPOLABLE: bool = true;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn bits(self) -> u32 {
        self.to_bits()
    }
}

impl Voxel for i32 {
    const INTERPOLABLE: bool = false;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v.round() as i32
    }

    #[inline]
    fn bits(self) -> u32 {
        self as u32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    data: Vec<T>,
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
}

/// Intensity image.
pub type ImageVolume = Volume<f32>;
/// Integer label map.
pub type LabelVolume = Volume<i32>;

impl<T: Voxel> Volume<T> {
    pub fn new(data: Vec<T>, dims: [usize; 3], spacing: [f64; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("volume dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("voxel spacing must be positive, got {spacing:?}")));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        Ok(Volume {
            data,
            dims,
            spacing,
            affine,
        })
    }

    /// Volume whose affine is the spacing diagonal with the origin at voxel 0.
    pub fn from_vec(data: Vec<T>, dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(data, dims, spacing, diagonal_affine(spacing))
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        Self::from_vec(vec![value; dims.iter().product()], dims, spacing)
    }

    pub fn from_fn(dims: [usize; 3], spacing: [f64; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::from_vec(data, dims, spacing)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, x, y, z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Voxel coordinates of a linear index.
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// New volume with this geometry and the given data.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(data, self.dims, self.spacing, self.affine)
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            data: self.data.iter().map(|&v| f(v)).collect(),
            dims: self.dims,
            spacing: self.spacing,
            affine: self.affine,
        }
    }

    pub fn with_affine(mut self, affine: Matrix4<f64>) -> Self {
        self.affine = affine;
        self
    }

    pub fn same_geometry<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.affine == other.affine
    }

    /// World position (mm) of a continuous voxel coordinate.
    pub fn world(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.affine * Vector4::new(p[0], p[1], p[2], 1.0);
        [w[0], w[1], w[2]]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                let v = v.to_f64();
                (lo.min(v), hi.max(v))
            })
    }

    /// Hex SHA-256 over dims, spacing, affine and voxel bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for d in self.dims {
            h.update((d as u64).to_le_bytes());
        }
        for s in self.spacing.iter().chain(self.affine.iter()) {
            h.update(s.to_le_bytes());
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.bits().to_le_bytes());
        }
        h.update(&buf);
        hex::encode(h.finalize())
    }
}

impl LabelVolume {
    /// Distinct label values present.
    pub fn labels(&self) -> BTreeSet<i32> {
        let mut out = BTreeSet::new();
        let mut last = None;
        for &v in &self.data {
            if last != Some(v) {
                out.insert(v);
                last = Some(v);
            }
        }
        out
    }

    pub fn count(&self, label: i32) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }
}

pub fn diagonal_affine(spacing: [f64; 3]) -> Matrix4<f64> {
    Matrix4::new_nonuniform_scaling(&nalgebra::Vector3::new(spacing[0], spacing[1], spacing[2]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

fn check_spacing(s: [f64; 3], what: &str) -> Result<()> {
    if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{what} must be positive, got {s:?}")));
    }
    Ok(())
}

/// Resamples to `target_spacing`, keeping the field-of-view centre fixed.
///
/// Output dims are `round(dims * spacing / target_spacing)` (at least 1).
/// Samples outside the input replicate the edge voxel.
pub fn resample<T: Voxel>(v: &Volume<T>, target_spacing: [f64; 3], mode: Interpolation) -> Result<Volume<T>> {
    check_spacing(target_spacing, "target spacing")?;
    let dims = std::array::from_fn(|a| {
        let n = (v.dims[a] as f64 * v.spacing[a] / target_spacing[a]).round();
        (n as usize).max(1)
    });
    resample_to_grid(v, dims, target_spacing, mode)
}

/// Resamples onto an explicit grid of `dims` voxels of `spacing` mm sharing
/// the input's field-of-view centre.
pub fn resample_to_grid<T: Voxel>(
    v: &Volume<T>,
    dims: [usize; 3],
    spacing: [f64; 3],
    mode: Interpolation,
) -> Result<Volume<T>> {
    check_spacing(spacing, "target spacing")?;
    if mode == Interpolation::Trilinear && !T::INTERPOLABLE {
        return Err(Error::invalid("trilinear interpolation requested on a label volume"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid(format!("target dims must be >= 1, got {dims:?}")));
    }
    if dims == v.dims && spacing == v.spacing {
        return Ok(v.clone());
    }

    let ratio: [f64; 3] = std::array::from_fn(|a| spacing[a] / v.spacing[a]);
    let coords: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..dims[a])
                .map(|i| centred_coordinate(v.dims[a], dims[a], ratio[a], i))
                .collect()
        })
        .collect();

    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    match mode {
        Interpolation::Nearest => {
            let idx: Vec<Vec<usize>> = (0..3)
                .map(|a| coords[a].iter().map(|&c| nearest_index(v.dims[a], c)).collect())
                .collect();
            for &z in &idx[2] {
                for &y in &idx[1] {
                    for &x in &idx[0] {
                        data.push(v.data[linear_index(v.dims, x, y, z)]);
                    }
                }
            }
        }
        Interpolation::Trilinear => {
            let taps: Vec<Vec<AxisTap>> = (0..3)
                .map(|a| coords[a].iter().map(|&c| axis_tap(v.dims[a], c)).collect())
                .collect();
            for tz in &taps[2] {
                for ty in &taps[1] {
                    for tx in &taps[0] {
                        let val = interp::sample_taps(v.dims, [*tx, *ty, *tz], |i| v.data[i].to_f64());
                        data.push(T::from_f64(val));
                    }
                }
            }
        }
    }

    let mut grid = Matrix4::identity();
    for a in 0..3 {
        grid[(a, a)] = ratio[a];
        grid[(a, 3)] = centred_coordinate(v.dims[a], dims[a], ratio[a], 0);
    }
    Volume::new(data, dims, spacing, v.affine * grid)
}

/// Extracts the sub-block starting at `offset`, updating the affine so
/// retained voxels keep their world coordinates.
pub fn crop<T: Voxel>(v: &Volume<T>, offset: [usize; 3], size: [usize; 3]) -> Result<Volume<T>> {
    for a in 0..3 {
        if size[a] == 0 || offset[a] + size[a] > v.dims[a] {
            return Err(Error::invalid(format!(
                "crop of size {size:?} at {offset:?} exceeds volume dims {:?}",
                v.dims
            )));
        }
    }
    let mut data = Vec::with_capacity(size.iter().product());
    for z in offset[2]..offset[2] + size[2] {
        for y in offset[1]..offset[1] + size[1] {
            let start = linear_index(v.dims, offset[0], y, z);
            data.extend_from_slice(&v.data[start..start + size[0]]);
        }
    }
    let shift = Matrix4::new_translation(&nalgebra::Vector3::new(
        offset[0] as f64,
        offset[1] as f64,
        offset[2] as f64,
    ));
    Volume::new(data, size, v.spacing, v.affine * shift)
}

/// Random crop of `size` voxels. Offsets are drawn uniformly per axis in
/// x, y, z order from `0..=dims - size`.
pub fn crop_random<T: Voxel, R: Rng + ?Sized>(
    v: &Volume<T>,
    size: [usize; 3],
    rng: &mut R,
) -> Result<(Volume<T>, [usize; 3])> {
    for a in 0..3 {
        if size[a] > v.dims[a] || size[a] == 0 {
            return Err(Error::invalid(format!(
                "crop size {size:?} exceeds volume dims {:?}",
                v.dims
            )));
        }
    }
    let offset = std::array::from_fn(|a| rng.random_range(0..=v.dims[a] - size[a]));
    Ok((crop(v, offset, size)?, offset))
}

/// Right/left label pairs plus labels that map to themselves under a flip.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabelPairTable {
    pairs: Vec<(i32, i32)>,
    neutral: BTreeSet<i32>,
}

impl LabelPairTable {
    pub fn new(pairs: Vec<(i32, i32)>, neutral: BTreeSet<i32>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(r, l) in &pairs {
            for label in [r, l] {
                if !seen.insert(label) {
                    return Err(Error::invalid(format!("label {label} appears twice in the pair table")));
                }
            }
        }
        if let Some(l) = neutral.iter().find(|l| seen.contains(l)) {
            return Err(Error::invalid(format!("label {l} is both paired and neutral")));
        }
        Ok(LabelPairTable { pairs, neutral })
    }

    pub fn pairs(&self) -> &[(i32, i32)] {
        &self.pairs
    }

    pub fn neutral(&self) -> &BTreeSet<i32> {
        &self.neutral
    }

    /// Label a voxel takes after a flip, if the label is known.
    pub fn partner(&self, label: i32) -> Option<i32> {
        if self.neutral.contains(&label) {
            return Some(label);
        }
        self.pairs.iter().find_map(|&(r, l)| {
            if r == label {
                Some(l)
            } else if l == label {
                Some(r)
            } else {
                None
            }
        })
    }
}

/// Voxel axis most aligned with world x (left-right in RAS).
pub fn left_right_axis(affine: &Matrix4<f64>) -> usize {
    (0..3)
        .max_by(|&a, &b| affine[(0, a)].abs().total_cmp(&affine[(0, b)].abs()).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Mirrors a label volume along the left-right axis and swaps paired labels.
/// The affine is kept, so the anatomy itself is mirrored in world space.
pub fn flip_lr(labels: &LabelVolume, table: &LabelPairTable) -> Result<LabelVolume> {
    let mut swap: HashMap<i32, i32> = HashMap::new();
    for l in labels.labels() {
        let p = table.partner(l).ok_or(Error::UnknownFlipLabel(l))?;
        swap.insert(l, p);
    }
    let axis = left_right_axis(&labels.affine);
    let dims = labels.dims;
    let mut data = Vec::with_capacity(labels.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let mut src = [x, y, z];
                src[axis] = dims[axis] - 1 - src[axis];
                let v = labels.data[linear_index(dims, src[0], src[1], src[2])];
                data.push(swap[&v]);
            }
        }
    }
    labels.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp_x() -> ImageVolume {
        ImageVolume::from_vec(vec![0.0, 1.0, 2.0, 3.0], [4, 1, 1], [1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ImageVolume::from_vec(vec![], [0, 1, 1], [1.0; 3]).is_err());
        assert!(ImageVolume::from_vec(vec![0.0], [1, 1, 1], [0.0, 1.0, 1.0]).is_err());
        assert!(ImageVolume::from_vec(vec![0.0; 3], [2, 1, 1], [1.0; 3]).is_err());
    }

    #[test]
    fn resample_constant_is_constant() {
        let v = ImageVolume::filled([5, 6, 7], [1.0, 1.2, 0.9], 0.5).unwrap();
        for mode in [Interpolation::Trilinear, Interpolation::Nearest] {
            let r = resample(&v, [2.3, 0.7, 1.0], mode).unwrap();
            assert!(r.data().iter().all(|&x| x == 0.5));
        }
    }

    #[test]
    fn resample_identity_is_bit_exact() {
        let v = ImageVolume::from_fn([3, 4, 5], [1.0, 2.0, 3.0], |x, y, z| (x * 7 + y * 3 + z) as f32 * 0.37).unwrap();
        let r = resample(&v, [1.0, 2.0, 3.0], Interpolation::Trilinear).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn resample_ramp_matches_scalar_oracle() {
        // Oracle: output sample i of 2 lies at input coordinate
        // 1.5 + (i - 0.5) * 2 on a grid whose centres are aligned.
        let oracle = |c: f64| {
            let vals = [0.0, 1.0, 2.0, 3.0];
            let c = c.clamp(0.0, 3.0);
            let lo = c.floor().min(2.0);
            let t = c - lo;
            vals[lo as usize] * (1.0 - t) + vals[lo as usize + 1] * t
        };
        let r = resample(&ramp_x(), [2.0, 1.0, 1.0], Interpolation::Trilinear).unwrap();
        assert_eq!(r.dims(), [2, 1, 1]);
        for (i, &v) in r.data().iter().enumerate() {
            let c = 1.5 + (i as f64 - 0.5) * 2.0;
            assert!((v as f64 - oracle(c)).abs() < 1e-6, "voxel {i}: {v}");
        }
        assert_eq!(r.data(), &[0.5, 2.5]);
    }

    #[test]
    fn resample_preserves_world_centre() {
        let v = ImageVolume::filled([10, 8, 6], [1.0, 1.0, 5.0], 1.0).unwrap();
        let r = resample(&v, [1.0, 1.0, 1.0], Interpolation::Trilinear).unwrap();
        assert_eq!(r.dims(), [10, 8, 30]);
        let c_in = v.world([4.5, 3.5, 2.5]);
        let c_out = r.world([4.5, 3.5, 14.5]);
        for a in 0..3 {
            assert!((c_in[a] - c_out[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn trilinear_on_labels_is_rejected() {
        let l = LabelVolume::filled([2, 2, 2], [1.0; 3], 3).unwrap();
        assert!(resample(&l, [2.0; 3], Interpolation::Trilinear).is_err());
        assert!(resample(&l, [2.0; 3], Interpolation::Nearest).is_ok());
        assert!(resample(&l, [0.0, 1.0, 1.0], Interpolation::Nearest).is_err());
    }

    #[test]
    fn crop_full_size_is_identity() {
        let v = LabelVolume::from_fn([3, 3, 3], [1.0; 3], |x, y, z| (x + 3 * y + 9 * z) as i32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, off) = crop_random(&v, [3, 3, 3], &mut rng).unwrap();
        assert_eq!(off, [0, 0, 0]);
        assert_eq!(c, v);
    }

    #[test]
    fn crop_random_replays_offsets() {
        let v = LabelVolume::from_fn([4, 4, 4], [1.0; 3], |x, y, z| (x + 4 * y + 16 * z) as i32).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, off) = crop_random(&v, [2, 2, 2], &mut rng).unwrap();
            let mut replay = ChaCha8Rng::seed_from_u64(seed);
            let expected: [usize; 3] = std::array::from_fn(|_| replay.random_range(0..=2usize));
            assert_eq!(off, expected);
            // Exhaustive search over all 27 valid offsets finds exactly one match.
            let mut matches = vec![];
            for oz in 0..3 {
                for oy in 0..3 {
                    for ox in 0..3 {
                        let ok = (0..8).all(|k| {
                            let (x, y, z) = (k & 1, (k >> 1) & 1, k >> 2);
                            c.get(x, y, z) == v.get(ox + x, oy + y, oz + z)
                        });
                        if ok {
                            matches.push([ox, oy, oz]);
                        }
                    }
                }
            }
            assert_eq!(matches, vec![off]);
            assert_eq!(c.world([0.0, 0.0, 0.0]), v.world(off.map(|o| o as f64)));
        }
    }

    #[test]
    fn crop_too_large_fails() {
        let v = LabelVolume::filled([4, 4, 4], [1.0; 3], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(crop_random(&v, [5, 4, 4], &mut rng).is_err());
    }

    #[test]
    fn default_crop_size_accepted_on_large_input() {
        let v = LabelVolume::filled([162, 160, 161], [1.0; 3], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, _) = crop_random(&v, [160, 160, 160], &mut rng).unwrap();
        assert_eq!(c.dims(), [160, 160, 160]);
    }

    fn table() -> LabelPairTable {
        LabelPairTable::new(vec![(41, 2), (42, 3)], [0, 16].into_iter().collect()).unwrap()
    }

    #[test]
    fn pair_table_rejects_duplicates() {
        assert!(LabelPairTable::new(vec![(1, 2), (2, 3)], BTreeSet::new()).is_err());
        assert!(LabelPairTable::new(vec![(1, 2)], [2].into_iter().collect()).is_err());
    }

    #[test]
    fn flip_neutral_only_mirrors() {
        let v = LabelVolume::from_fn([3, 1, 1], [1.0; 3], |x, _, _| if x == 0 { 16 } else { 0 }).unwrap();
        let f = flip_lr(&v, &table()).unwrap();
        assert_eq!(f.data(), &[0, 0, 16]);
    }

    #[test]
    fn flip_swaps_pair() {
        let v = LabelVolume::from_fn([4, 2, 1], [1.0; 3], |x, y, _| if x == 0 && y == 1 { 41 } else { 0 }).unwrap();
        let f = flip_lr(&v, &table()).unwrap();
        assert_eq!(f.get(3, 1, 0), 2);
        assert_eq!(f.count(2), 1);
        assert_eq!(f.count(41), 0);
    }

    #[test]
    fn flip_unknown_label_is_named() {
        let v = LabelVolume::filled([2, 2, 2], [1.0; 3], 99).unwrap();
        match flip_lr(&v, &table()) {
            Err(Error::UnknownFlipLabel(99)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flip_follows_world_lr_axis() {
        // Voxel axis 1 carries world x.
        let mut aff = Matrix4::zeros();
        aff[(0, 1)] = -1.0;
        aff[(1, 0)] = 1.0;
        aff[(2, 2)] = 1.0;
        aff[(3, 3)] = 1.0;
        let v = LabelVolume::from_fn([2, 3, 1], [1.0; 3], |_, y, _| if y == 0 { 41 } else { 0 })
            .unwrap()
            .with_affine(aff);
        let f = flip_lr(&v, &table()).unwrap();
        assert_eq!(f.get(0, 2, 0), 2);
        assert_eq!(f.get(1, 2, 0), 2);
        assert_eq!(f.count(2), 2);
    }

    proptest! {
        #[test]
        fn flip_is_involution(data in proptest::collection::vec(prop::sample::select(vec![0, 16, 41, 2, 42, 3]), 512)) {
            let v = LabelVolume::from_vec(data, [8, 8, 8], [1.0; 3]).unwrap();
            let t = table();
            let once = flip_lr(&v, &t).unwrap();
            prop_assert_eq!(flip_lr(&once, &t).unwrap(), v.clone());
            for &(r, l) in t.pairs() {
                prop_assert_eq!(once.count(r), v.count(l));
            }
        }

        #[test]
        fn nearest_never_invents_labels(
            data in proptest::collection::vec(0i32..5, 60),
            s in (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0),
        ) {
            let v = LabelVolume::from_vec(data, [3, 4, 5], [1.0, 1.5, 0.8]).unwrap();
            let r = resample(&v, [s.0, s.1, s.2], Interpolation::Nearest).unwrap();
            prop_assert!(r.labels().is_subset(&v.labels()));
        }

        #[test]
        fn trilinear_stays_within_range(
            data in proptest::collection::vec(-50f32..50.0, 60),
            s in (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0),
        ) {
            let v = ImageVolume::from_vec(data, [3, 4, 5], [1.0, 1.5, 0.8]).unwrap();
            let (lo, hi) = v.min_max();
            let r = resample(&v, [s.0, s.1, s.2], Interpolation::Trilinear).unwrap();
            let (rlo, rhi) = r.min_max();
            prop_assert!(rlo >= lo && rhi <= hi);
        }

        #[test]
        fn crop_preserves_values(seed in 0u64..1000) {
            let v = ImageVolume::from_fn([6, 5, 4], [1.0; 3], |x, y, z| (x * 100 + y * 10 + z) as f32).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, off) = crop_random(&v, [3, 2, 2], &mut rng).unwrap();
            for z in 0..2 { for y in 0..2 { for x in 0..3 {
                prop_assert_eq!(c.get(x, y, z), v.get(x + off[0], y + off[1], z + off[2]));
            }}}
        }
    }

    #[test]
    fn trilinear_exact_on_affine_ramp_interior() {
        let v = ImageVolume::from_fn([12, 10, 8], [1.0; 3], |x, y, z| (2.0 * x as f64 - y as f64 + 0.5 * z as f64) as f32)
            .unwrap();
        let r = resample(&v, [0.75, 1.25, 0.5], Interpolation::Trilinear).unwrap();
        let ratio = [0.75, 1.25, 0.5];
        for z in 0..r.dims()[2] {
            for y in 0..r.dims()[1] {
                for x in 0..r.dims()[0] {
                    let p: [f64; 3] = std::array::from_fn(|a| {
                        centred_coordinate(v.dims()[a], r.dims()[a], ratio[a], [x, y, z][a])
                    });
                    if (0..3).all(|a| p[a] >= 0.0 && p[a] <= (v.dims()[a] - 1) as f64) {
                        let exact = 2.0 * p[0] - p[1] + 0.5 * p[2];
                        assert!((r.get(x, y, z) as f64 - exact).abs() < 1e-4);
                    }
                }
            }
        }
    }
}
