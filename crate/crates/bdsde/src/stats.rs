//! Deterministic reductions and summary statistics.
//!
//! Every ensemble reduction in the crate goes through [`pairwise_sum`], which
//! adds in a fixed binary-tree order. Combined with path arrays that are
//! always filled in path-index order, this makes results bit-identical no
//! matter how many worker threads simulated the paths — the parallelism stops
//! at the per-path stage, reductions are sequential by construction.

/// Sums a slice in a fixed pairwise (binary tree) order.
///
/// More accurate than a running sum (error grows like O(log n) instead of
/// O(n)) and — the property we actually rely on — a pure function of the
/// slice contents, independent of any thread schedule.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance with the n−1 divisor. Returns 0 for fewer than 2 samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&centered) / (xs.len() - 1) as f64
}

/// Mean together with its standard error `std / sqrt(n)`.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let se = (sample_variance(xs) / xs.len() as f64).sqrt();
    (m, se)
}

/// Standard error of the difference of two independent estimates.
pub fn combined_se(se_a: f64, se_b: f64) -> f64 {
    (se_a * se_a + se_b * se_b).sqrt()
}

/// Maximum absolute entry.
pub fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pairwise_matches_naive_small() {
        let xs: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 28.0);
    }

    #[test]
    fn mean_se_of_known_sample() {
        // Sample {1, 2, 3, 4}: mean 2.5, sample variance 5/3.
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&xs);
        assert_relative_eq!(m, 2.5, epsilon = 1e-15);
        assert_relative_eq!(se, (5.0 / 3.0_f64 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn degenerate_sample_has_zero_se() {
        let xs = [3.5];
        let (m, se) = mean_se(&xs);
        assert_eq!(m, 3.5);
        assert_eq!(se, 0.0);
    }

    proptest! {
        // Pairwise summation is a pure function of the data and close to the
        // exact (Kahan-ish) sum.
        #[test]
        fn pairwise_close_to_naive(xs in proptest::collection::vec(-1e6_f64..1e6, 0..500)) {
            let naive: f64 = xs.iter().sum();
            let pw = pairwise_sum(&xs);
            prop_assert!((pw - naive).abs() <= 1e-6 * (1.0 + naive.abs()));
        }

        // Splitting at any point and adding sub-sums stays within round-off
        // of the full sum (the additivity the weight processes rely on).
        #[test]
        fn pairwise_split_consistent(xs in proptest::collection::vec(-1e3_f64..1e3, 1..300), split in 0usize..300) {
            let k = split % xs.len();
            let whole = pairwise_sum(&xs);
            let parts = pairwise_sum(&xs[..k]) + pairwise_sum(&xs[k..]);
            prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
        }
    }
}
