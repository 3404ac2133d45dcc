//! Symmetry and independence diagnostics for increment series.

use serde::Serialize;

use super::stats::{
    anova, autocorrelation, fit_line, mean, sign_test, two_sample_chi_square, variance, LineFit, TestResult,
};
use crate::error::{Error, Result};

/// Smallest expected count per bin in the chi-square comparisons.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Chi-square comparison of the distributions of `dx` and `-dx`.
    pub distribution: TestResult,
    pub positive: u64,
    pub negative: u64,
    /// Exact two-sided sign test on the nonzero values.
    pub sign_p: f64,
    pub mean: f64,
    pub mean_se: f64,
}

impl SymmetryReport {
    pub fn passes(&self, level: f64) -> bool {
        self.sign_p > level && self.distribution.p_value > level
    }
}

pub fn symmetry_test(dx: &[i64]) -> Result<SymmetryReport> {
    if dx.len() < 1000 {
        return Err(Error::InsufficientSamples {
            needed: 1000,
            got: dx.len(),
        });
    }
    let mirrored: Vec<i64> = dx.iter().map(|&v| -v).collect();
    let distribution = two_sample_chi_square(dx, &mirrored, MIN_EXPECTED)?;
    let positive = dx.iter().filter(|&&v| v > 0).count() as u64;
    let negative = dx.iter().filter(|&&v| v < 0).count() as u64;
    let xs: Vec<f64> = dx.iter().map(|&v| v as f64).collect();
    Ok(SymmetryReport {
        distribution,
        positive,
        negative,
        sign_p: sign_test(positive, positive + negative),
        mean: mean(&xs),
        mean_se: (variance(&xs) / xs.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IidReport {
    pub n: usize,
    /// Autocorrelations at lags 1 to 5.
    pub autocorrelation: Vec<f64>,
    /// Odd- versus even-indexed entries.
    pub odd_even: TestResult,
    /// One-way comparison of the means of consecutive batches.
    pub batch_means: TestResult,
    pub batches: usize,
}

impl IidReport {
    pub fn lag1(&self) -> f64 {
        self.autocorrelation[0]
    }

    pub fn passes(&self, max_lag1: f64, level: f64) -> bool {
        self.lag1().abs() < max_lag1 && self.odd_even.p_value > level && self.batch_means.p_value > level
    }
}

/// Standard i.i.d. diagnostics on an integer series (entries keep their order).
pub fn iid_diagnostics(series: &[i64]) -> Result<IidReport> {
    let n = series.len();
    if n < 1000 {
        return Err(Error::InsufficientSamples { needed: 1000, got: n });
    }
    let xs: Vec<f64> = series.iter().map(|&v| v as f64).collect();
    let autocorrelation = (1..=5).map(|lag| autocorrelation(&xs, lag)).collect();
    let odd: Vec<i64> = series.iter().skip(1).step_by(2).copied().collect();
    let even: Vec<i64> = series.iter().step_by(2).copied().collect();
    let odd_even = two_sample_chi_square(&odd, &even, MIN_EXPECTED)?;
    let batches = 20;
    let size = n / batches;
    let groups: Vec<Vec<f64>> = (0..batches).map(|b| xs[b * size..(b + 1) * size].to_vec()).collect();
    let batch_means = anova(&groups)?;
    Ok(IidReport {
        n,
        autocorrelation,
        odd_even,
        batch_means,
        batches,
    })
}

/// Regression of `ln P(V >= k)` on `k` over evenly spaced thresholds from
/// the median up to the largest `k` exceeded by at least `min_count`
/// values. A negative slope with a high `r2` indicates an exponential tail.
pub fn exponential_tail(values: &[i64], min_count: usize) -> Result<LineFit> {
    let n = values.len();
    if n < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let lo = sorted[n / 2];
    let hi = sorted[n - min_count.clamp(1, n)];
    if hi <= lo {
        return Err(Error::Degenerate("tail too short to fit".into()));
    }
    let points = 25.min((hi - lo + 1) as usize);
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let k = lo + ((hi - lo) as f64 * i as f64 / (points - 1).max(1) as f64).round() as i64;
        let above = n - sorted.partition_point(|&v| v < k);
        xs.push(k as f64);
        ys.push((above as f64 / n as f64).ln());
    }
    fit_line(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<i64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-6..=6)).collect()
    }

    #[test]
    fn mirrored_data_is_perfectly_symmetric() {
        let half = noise(1000, 1);
        let data: Vec<i64> = half.iter().flat_map(|&v| [v, -v]).collect();
        let r = symmetry_test(&data).unwrap();
        assert_eq!(r.sign_p, 1.0);
        assert_eq!(r.distribution.statistic, 0.0);
        assert!(r.passes(0.01));
    }

    #[test]
    fn shifted_data_is_rejected() {
        let data: Vec<i64> = noise(10_000, 2).into_iter().map(|v| v + 1).collect();
        let r = symmetry_test(&data).unwrap();
        assert!(r.sign_p < 1e-6, "{}", r.sign_p);
        assert!(r.distribution.p_value < 1e-6);
    }

    #[test]
    fn white_noise_passes() {
        let r = iid_diagnostics(&noise(10_000, 3)).unwrap();
        assert!(r.passes(0.05, 0.01), "{r:?}");
    }

    #[test]
    fn autoregressive_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = 0.0f64;
        let series: Vec<i64> = (0..10_000)
            .map(|_| {
                let e: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                x = 0.5 * x + 10.0 * e;
                x.round() as i64
            })
            .collect();
        let r = iid_diagnostics(&series).unwrap();
        assert!((r.lag1() - 0.5).abs() < 0.05, "{}", r.lag1());
        assert!(!r.passes(0.05, 0.01));
    }

    #[test]
    fn geometric_tail_is_log_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<i64> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-300);
                (u.ln() / 0.9f64.ln()).floor() as i64
            })
            .collect();
        let f = exponential_tail(&data, 20).unwrap();
        assert!((f.slope - 0.9f64.ln()).abs() < 0.01, "{f:?}");
        assert!(f.r2 > 0.99);
    }

    #[test]
    fn short_series_rejected() {
        assert!(iid_diagnostics(&[1; 999]).is_err());
        assert!(symmetry_test(&[1; 10]).is_err());
    }
}
