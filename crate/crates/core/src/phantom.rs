//! Procedural head phantom labelled with the built-in schema ids, for demos
//! and tests that need a realistic-looking map without external data.

use crate::volume::LabelVolume;

struct Blob {
    centre: [f64; 3],
    radii: [f64; 3],
    left: i32,
    right: i32,
}

const fn blob(centre: [f64; 3], radii: [f64; 3], left: i32, right: i32) -> Blob {
    Blob { centre, radii, left, right }
}

// Coordinates are normalised to [-1, 1] per axis; x centres are mirrored for
// the right hemisphere.
const DEEP: [Blob; 5] = [
    blob([0.3, -0.1, -0.2], [0.07, 0.15, 0.08], 17, 53),
    blob([0.12, -0.05, 0.02], [0.1, 0.12, 0.1], 10, 49),
    blob([0.15, 0.08, 0.17], [0.07, 0.25, 0.08], 4, 43),
    blob([0.25, 0.15, 0.0], [0.07, 0.1, 0.1], 12, 51),
    blob([0.35, 0.2, 0.3], [0.06, 0.06, 0.06], 25, 25),
];

fn inside(p: [f64; 3], centre: [f64; 3], radii: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] - centre[a]) / radii[a]).powi(2)).sum::<f64>() <= 1.0
}

fn label_at(p: [f64; 3]) -> i32 {
    let left = p[0] < 0.0;
    let side = |l: i32, r: i32| if left { l } else { r };
    let rho = ((p[0] / 0.9).powi(2) + (p[1] / 0.95).powi(2) + (p[2] / 0.9).powi(2)).sqrt();
    if rho > 1.0 {
        return 0;
    }
    if rho > 0.93 {
        return 909;
    }
    if rho > 0.87 {
        return 910;
    }
    if rho > 0.8 {
        return 24;
    }
    if p[1] < -0.3 && p[2] < -0.3 {
        return if rho > 0.6 { side(8, 47) } else { side(7, 46) };
    }
    if p[0].abs() < 0.12 && p[1].abs() < 0.2 && p[2] < -0.1 {
        return 16;
    }
    if rho > 0.68 {
        return side(3, 42);
    }
    let mirrored = [p[0].abs(), p[1], p[2]];
    for b in &DEEP {
        // The lesion only exists in the left hemisphere.
        if b.left == 25 && !left {
            continue;
        }
        if inside(mirrored, b.centre, b.radii) {
            return side(b.left, b.right);
        }
    }
    side(2, 41)
}

/// Phantom with `dims` voxels at 1 mm spacing and a diagonal affine. Low x
/// indices hold the left hemisphere.
pub fn phantom_brain(dims: [usize; 3]) -> LabelVolume {
    LabelVolume::from_fn(dims, [1.0; 3], |x, y, z| {
        let p: [f64; 3] = std::array::from_fn(|a| {
            let i = [x, y, z][a] as f64;
            let half = dims[a] as f64 / 2.0;
            (i + 0.5 - half) / half
        });
        label_at(p)
    })
    .expect("phantom dims are positive")
}
