//! Segmentation clean-up: largest connected component and hole filling,
//! both with 6-connectivity.

use std::collections::BTreeSet;

use crate::volume::LabelVolume;

fn neighbours(i: usize, dims: [usize; 3], mut f: impl FnMut(usize)) {
    let [nx, ny, nz] = dims;
    let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
    if x > 0 {
        f(i - 1);
    }
    if x + 1 < nx {
        f(i + 1);
    }
    if y > 0 {
        f(i - nx);
    }
    if y + 1 < ny {
        f(i + nx);
    }
    if z > 0 {
        f(i - nx * ny);
    }
    if z + 1 < nz {
        f(i + nx * ny);
    }
}

/// Labels the 6-connected components of `mask`. Components are numbered
/// from 1 in order of their lowest linear index; 0 marks voxels outside the
/// mask. Returns the component map and the size of each component.
pub fn connected_components(mask: &[bool], dims: [usize; 3]) -> (Vec<u32>, Vec<usize>) {
    let mut comp = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..mask.len() {
        if !mask[seed] || comp[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0;
        comp[seed] = id;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            size += 1;
            neighbours(i, dims, |j| {
                if mask[j] && comp[j] == 0 {
                    comp[j] = id;
                    stack.push(j);
                }
            });
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Resets voxels of `label` outside its largest component to background.
/// Among equally large components the one reached first in storage order
/// survives.
pub fn largest_cc(labels: &LabelVolume, label: i32) -> LabelVolume {
    let mask: Vec<bool> = labels.data().iter().map(|&l| l == label).collect();
    let (comp, sizes) = connected_components(&mask, labels.dims());
    if sizes.len() <= 1 {
        return labels.clone();
    }
    let mut keep = 0;
    for (k, &s) in sizes.iter().enumerate() {
        if s > sizes[keep] {
            keep = k;
        }
    }
    let keep = keep as u32 + 1;
    let data = labels
        .data()
        .iter()
        .zip(&comp)
        .map(|(&l, &c)| if l == label && c != keep { 0 } else { l })
        .collect();
    labels.with_data(data).expect("same length")
}

/// Relabels background cavities enclosed by each fillable label. A cavity is
/// a 6-connected background component inside the label's bounding box that
/// does not touch the box border. Voxels of other labels are never changed.
pub fn fill_holes(labels: &LabelVolume, fillable: &BTreeSet<i32>) -> LabelVolume {
    let dims = labels.dims();
    let mut data = labels.data().to_vec();
    for &label in fillable {
        let mut lo = dims;
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &l) in data.iter().enumerate() {
            if l == label {
                any = true;
                let p = labels.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        if !any {
            continue;
        }
        let bdims: [usize; 3] = std::array::from_fn(|a| hi[a] - lo[a] + 1);
        let global = |b: usize| {
            let (x, y, z) = (b % bdims[0], (b / bdims[0]) % bdims[1], b / (bdims[0] * bdims[1]));
            labels.index(x + lo[0], y + lo[1], z + lo[2])
        };
        let n: usize = bdims.iter().product();
        // Anything that is not the label can connect a cavity to the outside.
        let open: Vec<bool> = (0..n).map(|b| data[global(b)] != label).collect();
        let mut outside = vec![false; n];
        let mut stack: Vec<usize> = (0..n)
            .filter(|&b| {
                let p = [b % bdims[0], (b / bdims[0]) % bdims[1], b / (bdims[0] * bdims[1])];
                open[b] && (0..3).any(|a| p[a] == 0 || p[a] + 1 == bdims[a])
            })
            .collect();
        for &b in &stack {
            outside[b] = true;
        }
        while let Some(b) = stack.pop() {
            neighbours(b, bdims, |c| {
                if open[c] && !outside[c] {
                    outside[c] = true;
                    stack.push(c);
                }
            });
        }
        for b in 0..n {
            let g = global(b);
            if open[b] && !outside[b] && data[g] == 0 {
                data[g] = label;
            }
        }
    }
    labels.with_data(data).expect("same length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shell(dims: [usize; 3], tunnel: bool) -> LabelVolume {
        LabelVolume::from_fn(dims, [1.0; 3], |x, y, z| {
            let p = [x, y, z];
            let inside = p.iter().all(|&c| (1..=5).contains(&c));
            let core = p.iter().all(|&c| (2..=4).contains(&c));
            let hole = tunnel && y == 3 && z == 3 && x <= 2;
            (inside && !core && !hole) as i32 * 7
        })
        .unwrap()
    }

    #[test]
    fn hollow_shell_is_filled() {
        let v = shell([7, 7, 7], false);
        let filled = fill_holes(&v, &[7].into());
        assert_eq!(filled.count(7), 125);
        assert_eq!(fill_holes(&filled, &[7].into()), filled);
        let solid = filled.clone();
        assert_eq!(fill_holes(&solid, &[7].into()), solid);
    }

    #[test]
    fn tunnel_prevents_filling() {
        let v = shell([7, 7, 7], true);
        assert_eq!(fill_holes(&v, &[7].into()), v);
    }

    #[test]
    fn other_labels_are_untouched() {
        let v = shell([7, 7, 7], false);
        // A different label inside the cavity stays, and so does the
        // background around it.
        let mut d = v.clone().into_data();
        let centre = v.index(3, 3, 3);
        d[centre] = 9;
        let v = v.with_data(d).unwrap();
        let f = fill_holes(&v, &[7].into());
        assert_eq!(f.get(3, 3, 3), 9);
        assert_eq!(f.count(7), 124);
    }

    #[test]
    fn satellite_removed() {
        let v = LabelVolume::from_fn([10, 10, 10], [1.0; 3], |x, y, z| {
            let blob = x < 5 && y < 5 && z < 2;
            let sat = x == 8 && y == 8 && z < 3;
            (blob || sat) as i32 * 3
        })
        .unwrap();
        let out = largest_cc(&v, 3);
        assert_eq!(out.count(3), 50);
        assert_eq!(out.get(8, 8, 0), 0);
        assert_eq!(largest_cc(&out, 3), out);
        assert_eq!(largest_cc(&v, 4), v);
    }

    #[test]
    fn tie_keeps_lowest_index_component() {
        let v = LabelVolume::from_fn([12, 3, 3], [1.0; 3], |x, y, z| {
            let a = y == 1 && z == 1 && (6..11).contains(&x);
            let b = z == 0 && x == 1 && y < 3 || (z == 0 && y == 0 && x == 2) || (z == 0 && y == 0 && x == 3);
            (a || b) as i32
        })
        .unwrap();
        assert_eq!(v.count(1), 10);
        let out = largest_cc(&v, 1);
        // The component holding linear index 1 wins the tie.
        assert_eq!(out.get(1, 0, 0), 1);
        assert_eq!(out.count(1), 5);
        assert_eq!(out.get(8, 1, 1), 0);
    }

    proptest! {
        #[test]
        fn largest_component_is_connected_and_maximal(bits in proptest::collection::vec(proptest::bool::weighted(0.5), 64)) {
            let v = LabelVolume::from_vec(bits.iter().map(|&b| b as i32).collect(), [4, 4, 4], [1.0; 3]).unwrap();
            let out = largest_cc(&v, 1);
            let mask: Vec<bool> = out.data().iter().map(|&l| l == 1).collect();
            let (_, sizes) = connected_components(&mask, [4, 4, 4]);
            prop_assert!(sizes.len() <= 1);
            let orig: Vec<bool> = v.data().iter().map(|&l| l == 1).collect();
            let (_, all) = connected_components(&orig, [4, 4, 4]);
            prop_assert_eq!(sizes.first().copied().unwrap_or(0), all.iter().copied().max().unwrap_or(0));
        }

        #[test]
        fn fill_holes_is_idempotent(bits in proptest::collection::vec(0i32..3, 125)) {
            let v = LabelVolume::from_vec(bits, [5, 5, 5], [1.0; 3]).unwrap();
            let set: BTreeSet<i32> = [1].into();
            let once = fill_holes(&v, &set);
            prop_assert_eq!(fill_holes(&once, &set), once.clone());
            for (a, b) in v.data().iter().zip(once.data()) {
                prop_assert!(a == b || (*a == 0 && *b == 1));
            }
        }
    }
}
