//! Random spatial transforms: a centred affine composed with a diffeomorphic
//! deformation obtained by integrating a stationary velocity field (SVF).
//!
//! All fields are backward (pull) maps in voxel units: the warped volume at
//! voxel `x` takes the input value at `x + u(x)`. Lookups outside the input
//! replicate the edge voxel.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::interp::{self, linear_index};
use crate::nifti;
use crate::sampling::{normal, uniform};
use crate::volume::{ImageVolume, LabelVolume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    /// Rotations about x, y, z in degrees.
    pub rotation_deg: [f64; 3],
    pub scaling: [f64; 3],
    pub shearing: [f64; 3],
    pub translation_mm: [f64; 3],
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams {
            rotation_deg: [0.0; 3],
            scaling: [1.0; 3],
            shearing: [0.0; 3],
            translation_mm: [0.0; 3],
        }
    }
}

impl AffineParams {
    /// `T · Rz · Ry · Rx · Sh · Sc` acting on millimetre coordinates
    /// relative to the volume centre.
    ///
    /// The shear matrix is upper triangular: `[[1, shx, shy], [0, 1, shz], [0, 0, 1]]`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let [ax, ay, az] = self.rotation_deg.map(f64::to_radians);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ax.cos(), -ax.sin(), 0.0, ax.sin(), ax.cos());
        let ry = Matrix3::new(ay.cos(), 0.0, ay.sin(), 0.0, 1.0, 0.0, -ay.sin(), 0.0, ay.cos());
        let rz = Matrix3::new(az.cos(), -az.sin(), 0.0, az.sin(), az.cos(), 0.0, 0.0, 0.0, 1.0);
        let [shx, shy, shz] = self.shearing;
        let sh = Matrix3::new(1.0, shx, shy, 0.0, 1.0, shz, 0.0, 0.0, 1.0);
        let sc = Matrix3::from_diagonal(&Vector3::from(self.scaling));
        let linear = rz * ry * rx * sh * sc;
        let mut m = linear.to_homogeneous();
        m[(0, 3)] = self.translation_mm[0];
        m[(1, 3)] = self.translation_mm[1];
        m[(2, 3)] = self.translation_mm[2];
        m
    }

    /// The same transform expressed on voxel indices of a grid with the
    /// given dims and spacing, pivoting about the grid centre.
    pub fn voxel_matrix(&self, dims: [usize; 3], spacing: [f64; 3]) -> Matrix4<f64> {
        let centre = Vector3::from(dims.map(|d| (d as f64 - 1.0) / 2.0));
        let to_mm = Matrix4::new_nonuniform_scaling(&Vector3::from(spacing)) * Matrix4::new_translation(&-centre);
        let from_mm = Matrix4::new_translation(&centre)
            * Matrix4::new_nonuniform_scaling(&Vector3::from(spacing.map(|s| 1.0 / s)));
        from_mm * self.matrix() * to_mm
    }
}

/// Draws the twelve affine parameters: rotations, scalings, shearings and
/// translations, each in x, y, z order.
pub fn sample_affine<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> AffineParams {
    let mut draw = |a, b| -> [f64; 3] { std::array::from_fn(|_| uniform(rng, a, b)) };
    AffineParams {
        rotation_deg: draw(cfg.a_rot, cfg.b_rot),
        scaling: draw(cfg.a_sc, cfg.b_sc),
        shearing: draw(cfg.a_sh, cfg.b_sh),
        translation_mm: draw(cfg.a_tr, cfg.b_tr),
    }
}

/// Low-resolution velocity control grid (millimetre units).
#[derive(Clone, Debug, PartialEq)]
pub struct Svf {
    pub grid: Vec<[f64; 3]>,
    pub grid_dims: [usize; 3],
    pub sigma: f64,
}

impl Svf {
    pub fn zeros(n: usize) -> Self {
        Svf {
            grid: vec![[0.0; 3]; n * n * n],
            grid_dims: [n; 3],
            sigma: 0.0,
        }
    }
}

/// `sigma ~ U(0, b_nonlin)`, then every control vector component
/// `~ N(0, sigma^2)`.
pub fn sample_svf<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Svf {
    let sigma = uniform(rng, 0.0, cfg.b_nonlin);
    sample_svf_with_sigma(cfg.svf_grid, sigma, rng)
}

pub fn sample_svf_with_sigma<R: Rng + ?Sized>(grid_size: usize, sigma: f64, rng: &mut R) -> Svf {
    let n = grid_size.pow(3);
    let grid = (0..n)
        .map(|_| std::array::from_fn(|_| normal(rng, sigma)))
        .collect();
    Svf {
        grid,
        grid_dims: [grid_size; 3],
        sigma,
    }
}

/// Dense vector field in voxel units.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    dims: [usize; 3],
    vectors: Vec<[f64; 3]>,
}

/// Pull-back displacement field.
pub type DeformationField = VectorField;
/// Dense stationary velocity field.
pub type VelocityField = VectorField;

impl VectorField {
    pub fn new(dims: [usize; 3], vectors: Vec<[f64; 3]>) -> Result<Self> {
        if dims.contains(&0) || vectors.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "field of {} vectors does not match dims {dims:?}",
                vectors.len()
            )));
        }
        Ok(VectorField { dims, vectors })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        VectorField {
            dims,
            vectors: vec![[0.0; 3]; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> [f64; 3]) -> Self {
        let mut vectors = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    vectors.push(f([x, y, z]));
                }
            }
        }
        VectorField { dims, vectors }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        self.vectors[linear_index(self.dims, x, y, z)]
    }

    /// Trilinear, edge-clamped sample at a continuous voxel position.
    pub fn sample(&self, p: [f64; 3]) -> [f64; 3] {
        interp::trilinear(self.dims, p, |i| self.vectors[i])
    }

    /// Image of point `p` under `x -> x + u(x)`.
    pub fn map_point(&self, p: [f64; 3]) -> [f64; 3] {
        let u = self.sample(p);
        [p[0] + u[0], p[1] + u[1], p[2] + u[2]]
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        VectorField {
            dims: self.dims,
            vectors: self.vectors.iter().map(|v| v.map(|c| c * k)).collect(),
        }
    }

    /// Exports the field as a vector-intent NIfTI for inspection.
    pub fn write_nifti(&self, spacing: [f64; 3], affine: &Matrix4<f64>, path: impl AsRef<Path>) -> Result<()> {
        nifti::write_vector_field(&self.vectors, self.dims, spacing, affine, path)
    }
}

/// Trilinearly upsamples the control grid onto `target_dims` (centres
/// aligned, same field of view) and converts millimetres to voxels of
/// `target_spacing`.
pub fn upsample_svf(svf: &Svf, target_dims: [usize; 3], target_spacing: [f64; 3]) -> Result<VelocityField> {
    if target_dims.iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!("velocity field dims must be >= 2, got {target_dims:?}")));
    }
    if target_spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("target spacing must be positive"));
    }
    let to_vox = target_spacing.map(|s| 1.0 / s);
    let mm = interp::upsample_grid(&svf.grid, svf.grid_dims, target_dims);
    let vectors = mm
        .into_iter()
        .map(|v| [v[0] * to_vox[0], v[1] * to_vox[1], v[2] * to_vox[2]])
        .collect();
    VectorField::new(target_dims, vectors)
}

/// Smallest step count `>= min_steps` whose initial displacement
/// `v / 2^steps` stays below half a voxel everywhere.
pub fn integration_steps(velocity: &VelocityField, min_steps: u32) -> u32 {
    let max = velocity.max_norm();
    let mut steps = min_steps.max(1);
    while steps < 30 && max / 2f64.powi(steps as i32) >= 0.5 {
        steps += 1;
    }
    steps
}

/// Scaling and squaring: start from `v / 2^steps` and compose the
/// displacement with itself `steps` times.
pub fn integrate_svf(velocity: &VelocityField, steps: u32) -> Result<DeformationField> {
    if steps < 1 {
        return Err(Error::invalid("scaling-and-squaring needs at least one step"));
    }
    let mut field = velocity.scaled(0.5f64.powi(steps as i32));
    let dims = field.dims;
    for _ in 0..steps {
        let prev = &field;
        let mut next = Vec::with_capacity(prev.vectors.len());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let u = prev.vectors[linear_index(dims, x, y, z)];
                    let w = prev.sample([x as f64 + u[0], y as f64 + u[1], z as f64 + u[2]]);
                    next.push([u[0] + w[0], u[1] + w[1], u[2] + w[2]]);
                }
            }
        }
        field = VectorField { dims, vectors: next };
    }
    Ok(field)
}

/// Folds a voxel-space affine pull map into a dense field, so the total map
/// is `x -> A(x + u(x))` and the warp does a single interpolation pass.
pub fn compose_transforms(affine: &Matrix4<f64>, nonlin: &DeformationField) -> Result<DeformationField> {
    let det = affine.fixed_view::<3, 3>(0, 0).determinant();
    if !(det.abs() > 1e-12) || !det.is_finite() {
        return Err(Error::invalid(format!("affine is singular (det = {det})")));
    }
    let dims = nonlin.dims;
    let mut vectors = Vec::with_capacity(nonlin.vectors.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let u = nonlin.vectors[linear_index(dims, x, y, z)];
                let p = Vector4::new(x as f64 + u[0], y as f64 + u[1], z as f64 + u[2], 1.0);
                let q = affine * p;
                vectors.push([q[0] - x as f64, q[1] - y as f64, q[2] - z as f64]);
            }
        }
    }
    Ok(VectorField { dims, vectors })
}

/// Nearest-neighbour pull warp of a label map.
pub fn warp_labels(labels: &LabelVolume, field: &DeformationField) -> Result<LabelVolume> {
    if labels.dims() != field.dims {
        return Err(Error::invalid(format!(
            "field dims {:?} do not match label dims {:?}",
            field.dims,
            labels.dims()
        )));
    }
    let dims = field.dims;
    let src = labels.data();
    let mut data = Vec::with_capacity(src.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let u = field.vectors[linear_index(dims, x, y, z)];
                let i = interp::nearest(dims, [x as f64 + u[0], y as f64 + u[1], z as f64 + u[2]]);
                data.push(src[i]);
            }
        }
    }
    labels.with_data(data)
}

fn jacobian_at(field: &DeformationField, x: usize, y: usize, z: usize) -> f64 {
    let dims = field.dims;
    let p = [x, y, z];
    let mut j = Matrix3::identity();
    for axis in 0..3 {
        let (lo, hi) = if p[axis] == 0 {
            (p[axis], p[axis] + 1)
        } else if p[axis] == dims[axis] - 1 {
            (p[axis] - 1, p[axis])
        } else {
            (p[axis] - 1, p[axis] + 1)
        };
        let (mut a, mut b) = (p, p);
        a[axis] = lo;
        b[axis] = hi;
        let ua = field.at(a[0], a[1], a[2]);
        let ub = field.at(b[0], b[1], b[2]);
        let h = (hi - lo) as f64;
        for c in 0..3 {
            j[(c, axis)] += (ub[c] - ua[c]) / h;
        }
    }
    j.determinant()
}

/// Determinant of the Jacobian of `x -> x + u(x)`: central differences in
/// the interior, one-sided on the faces.
pub fn jacobian_determinant(field: &DeformationField) -> Result<ImageVolume> {
    let dims = field.dims;
    if dims.iter().any(|&d| d < 3) {
        return Err(Error::invalid(format!("jacobian needs dims >= 3, got {dims:?}")));
    }
    let mut data = Vec::with_capacity(field.vectors.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                data.push(jacobian_at(field, x, y, z) as f32);
            }
        }
    }
    ImageVolume::from_vec(data, dims, [1.0; 3])
}

/// Minimum Jacobian determinant over interior voxels, in double precision.
pub fn min_interior_jacobian(field: &DeformationField) -> Result<f64> {
    let dims = field.dims;
    if dims.iter().any(|&d| d < 3) {
        return Err(Error::invalid(format!("jacobian needs dims >= 3, got {dims:?}")));
    }
    let mut min = f64::INFINITY;
    for z in 1..dims[2] - 1 {
        for y in 1..dims[1] - 1 {
            for x in 1..dims[0] - 1 {
                min = min.min(jacobian_at(field, x, y, z));
            }
        }
    }
    Ok(min)
}
