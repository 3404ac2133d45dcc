//! Product-limit survival curves of coalescence times and their power-law tails.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::stats::{fit_line, LineFit};
use crate::error::{Error, Result};
use crate::network::{CoalescenceSample, CoalescenceTime};

/// Kaplan-Meier estimate of `P(T > t)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub grid: Vec<u64>,
    pub survival: Vec<f64>,
    /// Fraction of samples censored at or before each grid time.
    pub censored_by: Vec<f64>,
    pub n_samples: usize,
    pub n_censored: usize,
}

/// `(time, observed)`: `observed = false` means only `T > time` is known.
fn as_event(s: &CoalescenceSample) -> (u64, bool) {
    match s.time {
        CoalescenceTime::Exact(t) => (t, true),
        CoalescenceTime::Censored(t) => (t, false),
    }
}

pub fn survival_estimate(samples: &[CoalescenceSample], grid: &[u64]) -> Result<SurvivalCurve> {
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| s.separation != samples[0].separation) {
        return Err(Error::InvalidParameter("samples mix separations".into()));
    }
    let events: Vec<(u64, bool)> = samples.iter().map(as_event).collect();
    product_limit(&events, grid)
}

/// Product-limit estimator on raw `(time, observed)` pairs.
pub fn product_limit(events: &[(u64, bool)], grid: &[u64]) -> Result<SurvivalCurve> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let mut sorted = events.to_vec();
    // Events before censorings at equal times: a censored sample at t is
    // still at risk at t.
    sorted.sort_by_key(|&(t, obs)| (t, !obs));
    let n = sorted.len();
    let mut survival = Vec::with_capacity(grid.len());
    let mut censored_by = Vec::with_capacity(grid.len());
    let mut s = 1.0;
    let mut at_risk = n as f64;
    let mut i = 0;
    let mut censored = 0usize;
    for &g in grid {
        while i < n && sorted[i].0 <= g {
            let t = sorted[i].0;
            let mut deaths = 0.0;
            let mut gone = 0.0;
            while i < n && sorted[i].0 == t {
                if sorted[i].1 {
                    deaths += 1.0;
                } else {
                    censored += 1;
                }
                gone += 1.0;
                i += 1;
            }
            if deaths > 0.0 {
                s *= 1.0 - deaths / at_risk;
            }
            at_risk -= gone;
        }
        survival.push(s);
        censored_by.push(censored as f64 / n as f64);
    }
    Ok(SurvivalCurve {
        grid: grid.to_vec(),
        survival,
        censored_by,
        n_samples: n,
        n_censored: events.iter().filter(|e| !e.1).count(),
    })
}

/// Roughly `per_decade` logarithmically spaced integers in `[lo, hi]`.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (a, b) = ((lo.max(1) as f64).log10(), (hi.max(1) as f64).log10());
    let steps = ((b - a) * per_decade as f64).ceil().max(1.0) as usize;
    let mut g: Vec<u64> = (0..=steps)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / steps as f64).round() as u64)
        .collect();
    g.dedup();
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    /// Natural-log intercept of `ln S = intercept + slope ln t`.
    pub intercept: f64,
    pub r2: f64,
    pub ci: (f64, f64),
    pub n_points: usize,
}

impl TailFit {
    /// Fitted `ln S` at time `t`.
    pub fn log_level(&self, t: f64) -> f64 {
        self.intercept + self.slope * t.ln()
    }
}

/// Largest censored fraction tolerated inside a fit window.
pub const MAX_CENSORED_IN_WINDOW: f64 = 0.1;

/// Grid points used by a fit: inside `window`, positive survival, and not
/// past the point where censoring exceeds [`MAX_CENSORED_IN_WINDOW`].
fn window_points(curve: &SurvivalCurve, window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..curve.grid.len() {
        let t = curve.grid[i] as f64;
        if curve.censored_by[i] > MAX_CENSORED_IN_WINDOW {
            break;
        }
        if t >= window.0 && t <= window.1 && curve.survival[i] > 0.0 {
            xs.push(t.ln());
            ys.push(curve.survival[i].ln());
        }
    }
    (xs, ys)
}

fn fit_window(curve: &SurvivalCurve, window: (f64, f64)) -> Result<LineFit> {
    if !(window.0 > 0.0 && window.0 < window.1) {
        return Err(Error::Degenerate(format!("fit window {window:?}")));
    }
    let (xs, ys) = window_points(curve, window);
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} usable grid points in {window:?}",
            xs.len()
        )));
    }
    fit_line(&xs, &ys)
}

/// Log-log least squares on `window`; the interval is slope ± 1.96 standard
/// errors of the regression.
pub fn tail_exponent(curve: &SurvivalCurve, window: (f64, f64)) -> Result<TailFit> {
    let f = fit_window(curve, window)?;
    Ok(TailFit {
        slope: f.slope,
        intercept: f.intercept,
        r2: f.r2,
        ci: (f.slope - 1.96 * f.slope_se, f.slope + 1.96 * f.slope_se),
        n_points: f.n,
    })
}

/// As [`tail_exponent`], with a 95% percentile interval from resampling the
/// replicas `reps` times.
pub fn tail_exponent_bootstrap(
    samples: &[CoalescenceSample],
    grid: &[u64],
    window: (f64, f64),
    reps: usize,
    seed: u64,
) -> Result<TailFit> {
    let curve = survival_estimate(samples, grid)?;
    let mut fit = tail_exponent(&curve, window)?;
    if reps < 20 {
        return Err(Error::InsufficientSamples { needed: 20, got: reps });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(reps);
    let mut resample = Vec::with_capacity(samples.len());
    for _ in 0..reps {
        resample.clear();
        for _ in 0..samples.len() {
            resample.push(*samples.choose(&mut rng).expect("nonempty"));
        }
        let c = survival_estimate(&resample, grid)?;
        if let Ok(f) = fit_window(&c, window) {
            slopes.push(f.slope);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((slopes.len() - 1) as f64 * p).round() as usize];
    fit.ci = (q(0.025), q(0.975));
    Ok(fit)
}

/// Ratio of the fitted survival levels of `b` and `a` at time `t`.
pub fn level_ratio(a: &TailFit, b: &TailFit, t: f64) -> f64 {
    (b.log_level(t) - a.log_level(t)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn exact(t: u64) -> CoalescenceSample {
        CoalescenceSample {
            separation: 1,
            time: CoalescenceTime::Exact(t),
        }
    }

    #[test]
    fn coincident_starts_never_survive() {
        let samples = vec![exact(0); 100];
        let c = survival_estimate(&samples, &[1, 10, 100]).unwrap();
        assert_eq!(c.survival, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn uncensored_curve_is_the_empirical_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<CoalescenceSample> = (0..500).map(|_| exact(rng.random_range(0..1000))).collect();
        let grid = log_grid(1, 1000, 10);
        let c = survival_estimate(&samples, &grid).unwrap();
        for (g, s) in grid.iter().zip(&c.survival) {
            let want = samples
                .iter()
                .filter(|x| matches!(x.time, CoalescenceTime::Exact(t) if t > *g))
                .count() as f64
                / 500.0;
            assert!((s - want).abs() < 1e-12, "t = {g}");
        }
    }

    #[test]
    fn synthetic_power_law_round_trip() {
        // T = floor(1 / U^2) has P(T > t) = P(U < (t + 1)^-1/2).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let samples: Vec<CoalescenceSample> = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-300);
                exact((1.0 / (u * u)).floor().min(1e18) as u64)
            })
            .collect();
        let grid = log_grid(1, 10_000, 10);
        let c = survival_estimate(&samples, &grid).unwrap();
        for (g, s) in grid.iter().zip(&c.survival) {
            let p = ((*g + 1) as f64).powf(-0.5);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((s - p).abs() < 4.0 * se + 1e-12, "t = {g}: {s} vs {p}");
        }
    }

    #[test]
    fn censoring_at_the_horizon_keeps_earlier_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let times: Vec<u64> = (0..1000).map(|_| rng.random_range(0..2000)).collect();
        let h = 1000;
        let full: Vec<(u64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let cut: Vec<(u64, bool)> = times
            .iter()
            .map(|&t| if t > h { (h, false) } else { (t, true) })
            .collect();
        let grid = log_grid(1, h - 1, 10);
        let a = product_limit(&full, &grid).unwrap();
        let b = product_limit(&cut, &grid).unwrap();
        for (x, y) in a.survival.iter().zip(&b.survival) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_power_law_slope() {
        let grid = log_grid(100, 100_000, 20);
        let curve = SurvivalCurve {
            survival: grid.iter().map(|&t| (t as f64).powf(-0.5)).collect(),
            censored_by: vec![0.0; grid.len()],
            grid,
            n_samples: 0,
            n_censored: 0,
        };
        let f = tail_exponent(&curve, (100.0, 100_000.0)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-3);
        assert!(f.r2 > 0.999_999);
        assert!(tail_exponent(&curve, (10.0, 5.0)).is_err());
    }

    #[test]
    fn doubling_the_level_doubles_the_ratio() {
        let grid = log_grid(100, 10_000, 10);
        let mk = |c: f64| SurvivalCurve {
            survival: grid.iter().map(|&t| c * (t as f64).powf(-0.5)).collect(),
            censored_by: vec![0.0; grid.len()],
            grid: grid.clone(),
            n_samples: 0,
            n_censored: 0,
        };
        let a = tail_exponent(&mk(0.3), (100.0, 10_000.0)).unwrap();
        let b = tail_exponent(&mk(0.6), (100.0, 10_000.0)).unwrap();
        assert!((level_ratio(&a, &b, 1000.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_interval_covers_the_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<CoalescenceSample> = (0..2000)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-300);
                exact((1.0 / (u * u)).floor().min(1e18) as u64)
            })
            .collect();
        let grid = log_grid(10, 1000, 10);
        let f = tail_exponent_bootstrap(&samples, &grid, (10.0, 1000.0), 50, 9).unwrap();
        assert!(f.ci.0 <= f.slope && f.slope <= f.ci.1);
        let g = tail_exponent_bootstrap(&samples, &grid, (10.0, 1000.0), 50, 9).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn mixed_separations_rejected() {
        let mut s = vec![exact(3); 100];
        s[5].separation = 2;
        assert!(survival_estimate(&s, &[1]).is_err());
        assert!(survival_estimate(&s[..50], &[1]).is_err());
    }
}
