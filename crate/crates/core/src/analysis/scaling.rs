//! Diffusive-scaling diagnostics: one-time marginals against a Gaussian and
//! the η counts of the coalescing web.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::stats::{ks_test, mean, variance};
use crate::error::{Error, Result};
use crate::explore::{LazyField, LazyOptions};
use crate::field::{derive_seed, LatticeSite, ModelConfig};
use crate::network::{ph_step, Walker};
use crate::process::{materialize_window, WindowSpec};

/// `x -> x / (sqrt(n) sigma)`, `t -> t / (n gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    pub n: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl Scaling {
    pub fn new(n: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(n > 0.0 && sigma > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scaling needs positive n, sigma, gamma (got {n}, {sigma}, {gamma})"
            )));
        }
        Ok(Self { n, sigma, gamma })
    }

    /// Lattice steps covering scaled time `t`.
    pub fn steps(&self, t: f64) -> u64 {
        (self.n * self.gamma * t).floor() as u64
    }

    pub fn space_unit(&self) -> f64 {
        self.n.sqrt() * self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DonskerReport {
    pub t: f64,
    pub steps: u64,
    pub requested: usize,
    /// Replicas simulated before the deadline (all of them without one).
    pub completed: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the sample variance under normality.
    pub variance_se: f64,
    pub samples: Vec<f64>,
}

const DONSKER_STREAM: u64 = 0x5EED_D025_4E52;

/// KS comparison of `values` with a centred Gaussian of variance `t`.
pub fn gaussian_marginal_test(values: &[f64], t: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let normal = Normal::new(0.0, t.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let r = ks_test(values, |x| normal.cdf(x))?;
    Ok((r.statistic, r.p_value))
}

fn report(values: Vec<f64>, t: f64, steps: u64, requested: usize) -> Result<DonskerReport> {
    let (ks, p) = gaussian_marginal_test(&values, t)?;
    let var = variance(&values);
    let n = values.len() as f64;
    Ok(DonskerReport {
        t,
        steps,
        requested,
        completed: values.len(),
        ks_statistic: ks,
        p_value: p,
        mean: mean(&values),
        variance: var,
        variance_se: var * (2.0 / (n - 1.0)).sqrt(),
        samples: values,
    })
}

/// Simulates `π(⌊nγt⌋)(1) / (sqrt(n) σ)` from the origin over independent
/// fields and compares the result with `N(0, t)`.
///
/// Replicas not started by `deadline` are skipped; the report then carries
/// `completed < requested`.
pub fn donsker_test(
    cfg: &ModelConfig,
    scaling: &Scaling,
    t: f64,
    replicas: usize,
    deadline: Option<Instant>,
) -> Result<DonskerReport> {
    if scaling.n < 1e3 {
        return Err(Error::InvalidParameter(format!(
            "n_scale = {} is below 1000",
            scaling.n
        )));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t}")));
    }
    let steps = scaling.steps(t);
    let unit = scaling.space_unit();
    let values: Vec<Option<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(None);
            }
            let c = cfg.with_seed(derive_seed(cfg.seed ^ DONSKER_STREAM, r));
            let mut w = Walker::new(&c, LatticeSite::new(0, 0))?;
            Ok(Some(w.advance(steps)?.x as f64 / unit))
        })
        .collect::<Result<_>>()?;
    report(values.into_iter().flatten().collect(), t, steps, replicas)
}

/// The same statistic for a lattice walk with `±σ` increments, one per `γ`
/// time units: a harness check needing no field.
pub fn random_walk_control(scaling: &Scaling, t: f64, replicas: usize, seed: u64) -> Result<DonskerReport> {
    let steps = scaling.steps(t);
    let increments = (steps as f64 / scaling.gamma).floor() as u64;
    let unit = scaling.space_unit();
    let values: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
            let mut ups = 0u64;
            let mut left = increments;
            while left >= 64 {
                ups += u64::from(rng.random::<u64>().count_ones());
                left -= 64;
            }
            if left > 0 {
                ups += u64::from((rng.random::<u64>() >> (64 - left)).count_ones());
            }
            (2.0 * ups as f64 - increments as f64) * scaling.sigma / unit
        })
        .collect();
    report(values, t, steps, replicas)
}

/// One η query: paths through `[a, b]` at scaled time `t0`, counted at `t0 + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaQuery {
    pub t0: f64,
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaReport {
    pub query: EtaQuery,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub p_at_least_2: f64,
    pub p_at_least_3: f64,
}

const ETA_STREAM: u64 = 0xE7A0_C0DE;

/// Distinct positions at `t0 + t` of the paths through every vertex of `V`
/// in `[a, b]` at level `t0`, in scaled units, for each query interval.
///
/// Any path born before `t0` that crosses `[a, b]` at `t0` passes through
/// one of these vertices, so starting there counts the same positions. All
/// queries must share `t0` and `t`; within one replica they see the same
/// realization, so nested intervals give nested counts.
pub fn eta_statistic(
    cfg: &ModelConfig,
    scaling: &Scaling,
    queries: &[EtaQuery],
    replicas: usize,
) -> Result<Vec<EtaReport>> {
    let first = *queries
        .first()
        .ok_or_else(|| Error::InvalidParameter("no η queries".into()))?;
    for q in queries {
        if !(q.b > q.a && q.t > 0.0 && q.t0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("η query {q:?}")));
        }
        if q.t0 != first.t0 || q.t != first.t {
            return Err(Error::InvalidParameter("η queries must share t0 and t".into()));
        }
    }
    let unit = scaling.space_unit();
    let y0 = scaling.steps(first.t0) as i64;
    let steps = scaling.steps(first.t);
    let cols: Vec<(i64, i64)> = queries
        .iter()
        .map(|q| ((q.a * unit).ceil() as i64, (q.b * unit).floor() as i64))
        .collect();
    let lo = cols.iter().map(|c| c.0).min().unwrap_or(0);
    let hi = cols.iter().map(|c| c.1).max().unwrap_or(0).max(lo + 1);
    let per_replica: Vec<Vec<usize>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let c = cfg.with_seed(derive_seed(cfg.seed ^ ETA_STREAM, r));
            let spec = WindowSpec::new(lo, hi, y0, y0 + 1)?;
            let starts: Vec<i64> = materialize_window(&c, &spec)?
                .row(y0)
                .map(|row| row.xs.clone())
                .unwrap_or_default();
            let ends = advance_front(&c, &starts, y0, steps)?;
            Ok(cols
                .iter()
                .map(|&(a, b)| {
                    let mut hit: Vec<i64> = starts
                        .iter()
                        .zip(&ends)
                        .filter(|(&x, _)| x >= a && x <= b)
                        .map(|(_, &e)| e)
                        .collect();
                    hit.dedup();
                    hit.len()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(k, &query)| {
            let counts: Vec<usize> = per_replica.iter().map(|c| c[k]).collect();
            let n = counts.len().max(1) as f64;
            EtaReport {
                query,
                mean: counts.iter().sum::<usize>() as f64 / n,
                p_at_least_2: counts.iter().filter(|&&c| c >= 2).count() as f64 / n,
                p_at_least_3: counts.iter().filter(|&&c| c >= 3).count() as f64 / n,
                counts,
            }
        })
        .collect())
}

/// Final columns after `steps` steps of the paths from `starts` (sorted
/// columns on row `y0`), traced as one front on a single lane.
fn advance_front(cfg: &ModelConfig, starts: &[i64], y0: i64, steps: u64) -> Result<Vec<i64>> {
    if starts.is_empty() {
        return Ok(Vec::new());
    }
    let mut field = LazyField::new(*cfg, LazyOptions::default())?;
    let mut front: Vec<i64> = starts.to_vec();
    let mut owner: Vec<usize> = (0..starts.len()).collect();
    for y in y0..y0 + steps as i64 {
        let mut next = Vec::with_capacity(front.len());
        let mut remap = Vec::with_capacity(front.len());
        for &x in &front {
            let v = ph_step(&mut field, 0, LatticeSite::new(x, y))?;
            if next.last() != Some(&v.x) {
                next.push(v.x);
            }
            remap.push(next.len() - 1);
        }
        if next.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Degenerate(format!(
                "paths crossed between rows {y} and {}",
                y + 1
            )));
        }
        for o in owner.iter_mut() {
            *o = remap[*o];
        }
        front = next;
    }
    Ok(owner.into_iter().map(|o| front[o]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_harness_passes() {
        let s = Scaling::new(10_000.0, 3.0, 5.0).unwrap();
        let r = random_walk_control(&s, 1.0, 2000, 1).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
        assert!((r.variance - 1.0).abs() < 3.0 * r.variance_se);
        let r = random_walk_control(&s, 2.0, 2000, 2).unwrap();
        assert!((r.variance - 2.0).abs() < 3.0 * r.variance_se);
    }

    #[test]
    fn miscaled_walk_fails_the_test() {
        let s = Scaling::new(10_000.0, 3.0, 5.0).unwrap();
        let wrong = Scaling { sigma: 2.0, ..s };
        let mut r = random_walk_control(&s, 1.0, 2000, 3).unwrap();
        // Values computed with the true sigma, rescaled by the wrong one.
        for v in r.samples.iter_mut() {
            *v *= s.sigma / wrong.sigma;
        }
        let (_, p) = gaussian_marginal_test(&r.samples, 1.0).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn donsker_needs_a_large_scale() {
        let s = Scaling::new(100.0, 1.0, 1.0).unwrap();
        assert!(donsker_test(&ModelConfig::standard(0), &s, 1.0, 10, None).is_err());
    }

    #[test]
    fn expired_deadline_runs_nothing() {
        let s = Scaling::new(1000.0, 50.0, 1000.0).unwrap();
        let err = donsker_test(&ModelConfig::standard(0), &s, 1.0, 10, Some(Instant::now()));
        assert!(matches!(err, Err(Error::InsufficientSamples { got: 0, .. })));
    }

    #[test]
    fn eta_counts_nest_and_stay_positive() {
        let cfg = ModelConfig::standard(4);
        let s = Scaling::new(4.0, 10.0, 50.0).unwrap();
        let q = |a: f64, b: f64| EtaQuery { t0: 0.5, t: 0.5, a, b };
        let reps = eta_statistic(&cfg, &s, &[q(0.0, 0.5), q(0.0, 1.0), q(-1.0, 1.0)], 20).unwrap();
        for r in 0..20 {
            assert!(reps[0].counts[r] >= 1);
            assert!(reps[0].counts[r] <= reps[1].counts[r]);
            assert!(reps[1].counts[r] <= reps[2].counts[r]);
        }
        assert!(eta_statistic(&cfg, &s, &[q(1.0, 0.0)], 1).is_err());
    }

    #[test]
    fn single_vertex_gives_one_path() {
        // A point interval holds at most one vertex.
        let cfg = ModelConfig::standard(5);
        let s = Scaling::new(1.0, 1.0, 10.0).unwrap();
        let r = eta_statistic(
            &cfg,
            &s,
            &[EtaQuery {
                t0: 0.0,
                t: 1.0,
                a: 3.0,
                b: 3.5,
            }],
            30,
        )
        .unwrap();
        assert!(r[0].counts.iter().all(|&c| c <= 1));
    }

    #[test]
    fn long_runs_merge_everything() {
        let cfg = ModelConfig::standard(6);
        let s = Scaling::new(1.0, 1.0, 1.0).unwrap();
        let r = eta_statistic(
            &cfg,
            &s,
            &[EtaQuery {
                t0: 0.0,
                t: 5000.0,
                a: 0.0,
                b: 3.0,
            }],
            10,
        )
        .unwrap();
        // Zero only when the interval holds no vertex.
        assert!(r[0].counts.iter().all(|&c| c <= 1), "{:?}", r[0].counts);
        assert!(r[0].counts.contains(&1));
    }
}
