//! Small shared statistics helpers.

use crate::scalar::{real, Real};

pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    debug_assert!(!values.is_empty());
    values.iter().copied().sum::<T>() / real(values.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
pub(crate) fn sample_std<T: Real>(values: &[T]) -> T {
    debug_assert!(values.len() >= 2);
    let m = mean(values);
    let ss = values
        .iter()
        .map(|&v| (v - m) * (v - m))
        .sum::<T>();
    (ss / real(values.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation quantile (the common "type 7" rule) of an already
/// sorted slice, `p` in [0, 1].
pub(crate) fn quantile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = real::<T>(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Sorts a copy and takes the quantile.
pub(crate) fn quantile<T: Real>(values: &[T], p: f64) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&sorted, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_linear_interpolation() {
        let v = [0.0_f64, 10.0];
        assert_eq!(quantile(&v, 0.25), 2.5);
        assert_eq!(quantile(&v, 0.75), 7.5);
        let w = [1.0_f64, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&w, 0.5), 2.5);
        assert_eq!(quantile(&w, 0.0), 1.0);
        assert_eq!(quantile(&w, 1.0), 4.0);
    }

    #[test]
    fn std_of_two_points() {
        let v = [0.0_f64, 10.0];
        assert!((sample_std(&v) - 50.0_f64.sqrt()).abs() < 1e-12);
    }
}
