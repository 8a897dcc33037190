//! Small descriptive-statistics helpers.

/// Percentile `p` in [0, 100] with linear interpolation between order
/// statistics (position `p / 100 * (n - 1)`). Reorders `values`.
pub fn percentile(values: &mut [f64], p: f64) -> Option<f64> {
    let n = values.len();
    if n == 0 || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let pos = p / 100.0 * (n - 1) as f64;
    let k = (pos.floor() as usize).min(n - 1);
    let frac = pos - k as f64;
    let (_, lo, upper) = values.select_nth_unstable_by(k, f64::total_cmp);
    let lo = *lo;
    if frac == 0.0 || upper.is_empty() {
        return Some(lo);
    }
    let hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Some(lo + (hi - lo) * frac)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_examples() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&mut v, 0.0), Some(1.0));
        assert_eq!(percentile(&mut v, 100.0), Some(4.0));
        assert_eq!(percentile(&mut v, 50.0), Some(2.5));
        assert_eq!(percentile(&mut [], 50.0), None);
        assert_eq!(percentile(&mut v, 101.0), None);
    }

    proptest! {
        #[test]
        fn matches_sorting_oracle(mut v in proptest::collection::vec(-1e3f64..1e3, 1..200), p in 0f64..=100.0) {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let pos = p / 100.0 * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            let want = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
            let got = percentile(&mut v, p).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }
}
