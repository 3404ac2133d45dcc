//! Small statistical kernels shared by the tests in this module.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
    pub n: usize,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InvalidParameter("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("no spread in the regressor".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = (sse / (n as f64 - 2.0) / sxx).sqrt();
    Ok(LineFit {
        slope,
        intercept,
        r2,
        slope_se,
        n,
    })
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / denom
}

/// Result of a test with one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Chi-square homogeneity test of two integer samples. Values are binned
/// on their pooled order so that every bin expects at least `min_expected`
/// observations in each sample; bins are merged from the tails inward.
pub fn two_sample_chi_square(a: &[i64], b: &[i64], min_expected: f64) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut values: Vec<i64> = a.iter().chain(b).copied().collect();
    values.sort_unstable();
    values.dedup();
    let index = |v: i64| values.binary_search(&v).expect("pooled value");
    let mut ca = vec![0f64; values.len()];
    let mut cb = vec![0f64; values.len()];
    for &v in a {
        ca[index(v)] += 1.0;
    }
    for &v in b {
        cb[index(v)] += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let need = min_expected * total / na.min(nb);
    // Greedy left-to-right merge, then fold an underfilled last bin back.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for i in 0..values.len() {
        acc.0 += ca[i];
        acc.1 += cb[i];
        if acc.0 + acc.1 >= need {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return Ok(TestResult {
            statistic: 0.0,
            df: 0.0,
            p_value: 1.0,
        });
    }
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let col = x + y;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = (bins.len() - 1) as f64;
    Ok(TestResult {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
    })
}

pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Exact two-sided binomial test of `k` successes in `n` fair trials.
pub fn sign_test(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // log pmf via lgamma-free recurrence to stay exact for large n.
    let log_pmf = |i: u64| -> f64 { ln_choose(n, i) - n as f64 * std::f64::consts::LN_2 };
    let observed = log_pmf(k);
    let mut p = 0.0;
    for i in 0..=n {
        let l = log_pmf(i);
        if l <= observed + 1e-9 {
            p += l.exp();
        }
    }
    p.min(1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// One-way analysis of variance across groups.
pub fn anova(groups: &[Vec<f64>]) -> Result<TestResult> {
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    if k < 2 || n <= k {
        return Err(Error::InsufficientSamples { needed: k + 1, got: n });
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let between: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let within: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    if within == 0.0 {
        return Err(Error::Degenerate("no variation within groups".into()));
    }
    let f = (between / d1) / (within / d2);
    let p = FisherSnedecor::new(d1, d2).map(|d| d.sf(f)).unwrap_or(f64::NAN);
    Ok(TestResult {
        statistic: f,
        df: d1,
        p_value: p,
    })
}

/// One-sample Kolmogorov-Smirnov distance of `xs` from `cdf`, with the
/// asymptotic p-value under Stephens' small-sample correction.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(TestResult {
        statistic: d,
        df: nf,
        p_value: kolmogorov_sf(lambda),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_lines() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_line(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test(5, 10), 1.0);
        // P(X <= 0) + P(X >= 10) for Binomial(10, 1/2).
        assert!((sign_test(0, 10) - 2.0 / 1024.0).abs() < 1e-12);
        assert!((sign_test(2, 10) - 112.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Tabulated quantiles of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn chi_square_on_identical_samples() {
        let a: Vec<i64> = (0..500).map(|i| i % 7).collect();
        let r = two_sample_chi_square(&a, &a, 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anova_detects_shifted_groups() {
        let g1: Vec<f64> = (0..50).map(|i| (i % 5) as f64).collect();
        let g2: Vec<f64> = g1.iter().map(|x| x + 3.0).collect();
        assert!(anova(&[g1.clone(), g2]).unwrap().p_value < 1e-10);
        assert!(anova(&[g1.clone(), g1]).unwrap().p_value > 0.99);
    }
}
