//! Streaming moments and log–log slope fits.

use crate::error::{Error, Result};

/// Welford accumulator for mean and variance; merges with Chan's update so
/// partial results from different chunks combine without cancellation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let d = other.mean - self.mean;
        let mean = self.mean + d * nb / n as f64;
        let m2 = self.m2 + other.m2 + d * d * na * nb / n as f64;
        Self { count: n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Tree reduction in a fixed order, independent of how the parts were produced.
pub fn pairwise_merge(parts: &[RunningStats]) -> RunningStats {
    match parts.len() {
        0 => RunningStats::new(),
        1 => parts[0],
        n => {
            let (a, b) = parts.split_at(n / 2);
            pairwise_merge(a).merge(&pairwise_merge(b))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln x, ln y)` pairs the fit used.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares on `(ln x, ln y)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs positive finite values, got ({}, {})",
            p.0, p.1
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let s: RunningStats = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 100.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0;
        assert!((s.mean() - mean).abs() < 1e-14);
        assert!((s.variance() - var).abs() < 1e-13);
    }

    #[test]
    fn constant_stream_has_zero_variance_at_large_offset() {
        let s: RunningStats = std::iter::repeat_n(1.268_246_123_456, 10_000).collect();
        assert_eq!(s.variance(), 0.0);
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 2.0 * (i as f64).powi(2))).collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_gives_zero_slope() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(fit_slope(&pts).unwrap().slope, 0.0);
    }

    #[test]
    fn noisy_power_law() {
        use crate::rng::SeedStream;
        let mut noise = [0.0; 10];
        SeedStream::new(3, 0, 0, 0, 0).fill_standard_normal(&mut noise);
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let x = 2f64.powi(i);
                (x, x.powf(1.5) * (1.0 + 0.01 * noise[i as usize]))
            })
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope - 1.5).abs() < 0.1, "slope {}", f.slope);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_slope(&[(-1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn merge_is_split_invariant(xs in proptest::collection::vec(-100.0f64..100.0, 2..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let whole: RunningStats = xs.iter().copied().collect();
            let a: RunningStats = xs[..cut].iter().copied().collect();
            let b: RunningStats = xs[cut..].iter().copied().collect();
            let m = a.merge(&b);
            prop_assert_eq!(m.count(), whole.count());
            prop_assert!((m.mean() - whole.mean()).abs() <= 1e-10 * (1.0 + whole.mean().abs()));
            prop_assert!((m.variance() - whole.variance()).abs() <= 1e-9 * (1.0 + whole.variance()));
        }
    }
}
