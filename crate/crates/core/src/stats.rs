//! Order-independent reductions over per-trajectory samples.

use crate::Real;

const PAIRWISE_LEAF: usize = 32;

/// Pairwise (cascade) summation. The result depends only on the slice
/// contents and order, never on how the slice was produced.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleStats<T> {
    pub n: usize,
    pub mean: T,
    /// Unbiased sample variance (zero for fewer than two samples).
    pub variance: T,
}

impl<T: Real> SampleStats<T> {
    pub fn from_samples(xs: &[T]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: T::nan(),
                variance: T::nan(),
            };
        }
        let mean = pairwise_sum(xs) / T::from_count(n);
        let variance = if n < 2 {
            T::zero()
        } else {
            let sq: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
            pairwise_sum(&sq) / T::from_count(n - 1)
        };
        Self { n, mean, variance }
    }

    pub fn std_error(&self) -> T {
        (self.variance / T::from_count(self.n)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn stats_basic() {
        let s = SampleStats::<f64>::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_error() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(SampleStats::from_samples(&[3.0]).variance, 0.0);
    }
}
