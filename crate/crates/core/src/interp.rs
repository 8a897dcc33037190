//! Edge-clamped interpolation kernels shared by resampling, warping and
//! field upsampling.
//!
//! All interpolation is written as nested `a + (b - a) * t` so that a
//! constant input is reproduced bit-exactly and grid-point lookups (`t == 0`)
//! return the stored sample unchanged.

#[inline]
pub(crate) fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

pub(crate) trait Lerp: Copy {
    fn lerp(a: Self, b: Self, t: f64) -> Self;
}

impl Lerp for f64 {
    #[inline(always)]
    fn lerp(a: f64, b: f64, t: f64) -> f64 {
        a + (b - a) * t
    }
}

impl Lerp for [f64; 3] {
    #[inline(always)]
    fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
        [
            a[0] + (b[0] - a[0]) * t,
            a[1] + (b[1] - a[1]) * t,
            a[2] + (b[2] - a[2]) * t,
        ]
    }
}

/// Two neighbouring samples along one axis and the fractional weight of the
/// upper one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct AxisTap {
    pub lo: usize,
    pub hi: usize,
    pub t: f64,
}

/// Locates continuous coordinate `c` on an axis of `n` samples, clamping to
/// the edge samples outside `[0, n-1]`.
#[inline]
pub(crate) fn axis_tap(n: usize, c: f64) -> AxisTap {
    let max = (n - 1) as f64;
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, max) };
    let lo = (c.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let t = if hi == lo { 0.0 } else { c - lo as f64 };
    AxisTap { lo, hi, t }
}

/// Nearest sample index with edge clamping. Halves round away from zero.
#[inline]
pub(crate) fn nearest_index(n: usize, c: f64) -> usize {
    let max = (n - 1) as f64;
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, max) };
    (c.round() as usize).min(n - 1)
}

#[inline]
pub(crate) fn sample_taps<L: Lerp>(
    dims: [usize; 3],
    [tx, ty, tz]: [AxisTap; 3],
    fetch: impl Fn(usize) -> L,
) -> L {
    let row = |y: usize, z: usize| {
        let a = fetch(linear_index(dims, tx.lo, y, z));
        let b = fetch(linear_index(dims, tx.hi, y, z));
        L::lerp(a, b, tx.t)
    };
    let plane = |z: usize| L::lerp(row(ty.lo, z), row(ty.hi, z), ty.t);
    L::lerp(plane(tz.lo), plane(tz.hi), tz.t)
}

/// Trilinear interpolation at continuous voxel coordinate `p`.
#[inline]
pub(crate) fn trilinear<L: Lerp>(dims: [usize; 3], p: [f64; 3], fetch: impl Fn(usize) -> L) -> L {
    let taps = [
        axis_tap(dims[0], p[0]),
        axis_tap(dims[1], p[1]),
        axis_tap(dims[2], p[2]),
    ];
    sample_taps(dims, taps, fetch)
}

#[inline]
pub(crate) fn nearest(dims: [usize; 3], p: [f64; 3]) -> usize {
    linear_index(
        dims,
        nearest_index(dims[0], p[0]),
        nearest_index(dims[1], p[1]),
        nearest_index(dims[2], p[2]),
    )
}

/// Coordinate in an input grid of `n_in` samples corresponding to sample `i`
/// of an output grid of `n_out` samples, with both grids sharing the same
/// centre. `ratio` is output spacing over input spacing.
#[inline]
pub(crate) fn centred_coordinate(n_in: usize, n_out: usize, ratio: f64, i: usize) -> f64 {
    let c_in = (n_in as f64 - 1.0) / 2.0;
    let c_out = (n_out as f64 - 1.0) / 2.0;
    c_in + (i as f64 - c_out) * ratio
}

/// Upsamples a small control grid onto `target` dims so that both grids
/// cover the same field of view with aligned centres.
pub(crate) fn upsample_grid<L: Lerp + Send + Sync>(
    grid: &[L],
    grid_dims: [usize; 3],
    target: [usize; 3],
) -> Vec<L> {
    let taps: Vec<Vec<AxisTap>> = (0..3)
        .map(|a| {
            let ratio = grid_dims[a] as f64 / target[a] as f64;
            (0..target[a])
                .map(|i| axis_tap(grid_dims[a], centred_coordinate(grid_dims[a], target[a], ratio, i)))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(target.iter().product());
    for z in 0..target[2] {
        for y in 0..target[1] {
            for x in 0..target[0] {
                out.push(sample_taps(grid_dims, [taps[0][x], taps[1][y], taps[2][z]], |i| grid[i]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_tap_clamps_and_is_exact_at_nodes() {
        assert_eq!(axis_tap(4, -3.0), AxisTap { lo: 0, hi: 1, t: 0.0 });
        assert_eq!(axis_tap(4, 3.0), AxisTap { lo: 3, hi: 3, t: 0.0 });
        assert_eq!(axis_tap(4, 9.5), AxisTap { lo: 3, hi: 3, t: 0.0 });
        assert_eq!(axis_tap(1, 0.7), AxisTap { lo: 0, hi: 0, t: 0.0 });
        let tap = axis_tap(4, 1.25);
        assert_eq!((tap.lo, tap.hi), (1, 2));
        assert!((tap.t - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nearest_rounds_and_clamps() {
        assert_eq!(nearest_index(5, 1.49), 1);
        assert_eq!(nearest_index(5, 1.5), 2);
        assert_eq!(nearest_index(5, -0.7), 0);
        assert_eq!(nearest_index(5, 12.0), 4);
    }

    #[test]
    fn trilinear_reproduces_affine_function() {
        let dims = [4, 5, 6];
        let f = |x: f64, y: f64, z: f64| 0.5 * x - 2.0 * y + 0.25 * z + 3.0;
        let mut data = Vec::new();
        for z in 0..6 {
            for y in 0..5 {
                for x in 0..4 {
                    data.push(f(x as f64, y as f64, z as f64));
                }
            }
        }
        let p = [1.3, 2.7, 4.1];
        let v = trilinear(dims, p, |i| data[i]);
        assert!((v - f(p[0], p[1], p[2])).abs() < 1e-12);
    }
}
