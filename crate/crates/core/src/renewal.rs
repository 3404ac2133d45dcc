//! In/Out events, τ steps, renewal steps and the height process along traced paths.
//!
//! A step `n` is a τ step when every path stays inside the parabolic envelope
//! of its current vertex for the next `l` steps. A τ step is a renewal step
//! when, in addition, no site at or below level `n` lands strictly above level
//! `n` inside any of those envelopes. Increments between renewal positions form
//! the random-walk skeleton of the path.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::explore::{LazyField, LazyOptions};
use crate::field::{derive_seed, LatticeSite, ModelConfig};
use crate::network::ph_step;
use crate::process::Landscape;

pub const DEFAULT_HORIZON: usize = 64;
/// Miss budget of each envelope query on the unbounded lattice.
pub const DEFAULT_ENVELOPE_EPSILON: f64 = 1e-10;

/// `∇(apex) = {(x, y) : y >= apex.y, |x - apex.x| <= (y - apex.y)^2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParabolicEnvelope {
    pub apex: LatticeSite,
}

impl ParabolicEnvelope {
    pub fn new(apex: LatticeSite) -> Self {
        Self { apex }
    }

    pub fn contains(&self, pt: LatticeSite) -> bool {
        envelope_contains(self.apex, pt)
    }
}

#[inline]
pub fn envelope_contains(apex: LatticeSite, pt: LatticeSite) -> bool {
    let h = pt.y - apex.y;
    h >= 0 && (pt.x - apex.x).unsigned_abs() as u128 <= (h as u128) * (h as u128)
}

/// The first `l` steps from `v` all stay in `∇(v)`.
pub fn in_event_horizon<L: Landscape + ?Sized>(land: &mut L, lane: usize, v: LatticeSite, l: usize) -> Result<bool> {
    let mut u = v;
    for _ in 0..l {
        u = ph_step(land, lane, u)?;
        if !envelope_contains(v, u) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// No point of `V` with source row in `[explored_floor, v.y]` lies in `∇(v)`
/// strictly above `v`.
pub fn out_event<L: Landscape + ?Sized>(
    land: &mut L,
    lane: usize,
    v: LatticeSite,
    explored_floor: i64,
) -> Result<bool> {
    Ok(land.max_overshoot(lane, v, explored_floor, v.y)?.is_none())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TauStep {
    pub step_index: u64,
    pub positions: Vec<LatticeSite>,
    pub horizon_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenewalRecord {
    /// Steps from the start level.
    pub sigma_index: u64,
    pub positions: Vec<LatticeSite>,
    /// Horizontal increment of each path since the previous renewal (or the start).
    pub dx: Vec<i64>,
    pub dy: i64,
    pub horizon_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HeightSample {
    /// τ index, from 1.
    pub j: u64,
    pub tau: u64,
    pub l: i64,
    /// `N_{j+1}`, once the next τ step is known.
    pub n_next: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewalOptions {
    pub horizon: usize,
    pub max_steps: u64,
    /// Stop after this many renewals.
    pub max_renewals: Option<usize>,
    pub keep_taus: bool,
    pub keep_heights: bool,
    /// Stop as soon as all paths have merged.
    pub stop_on_merge: bool,
    /// Stop at the first renewal after all paths have merged.
    pub stop_on_merged_renewal: bool,
    /// Wall-clock limit; reaching it truncates the run.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for RenewalOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            max_steps: 1_000_000,
            max_renewals: None,
            keep_taus: true,
            keep_heights: true,
            stop_on_merge: false,
            stop_on_merged_renewal: false,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RenewalRun {
    pub renewals: Vec<RenewalRecord>,
    pub taus: Vec<TauStep>,
    pub heights: Vec<HeightSample>,
    pub tau_count: u64,
    pub steps: u64,
    /// Violations of `L_{j+1} <= max(L_j, N_{j+1}) - 1`.
    pub recursion_violations: u64,
    /// Requested renewals not reached within `max_steps` or exploration failed.
    pub truncated: bool,
    pub merged_at: Option<u64>,
}

/// Scans the joint path from `starts` for τ and renewal steps.
///
/// Path `i` explores through lane `i`; envelope queries use lane `k`. The
/// paths are traced `horizon` steps ahead, so every In check reuses the
/// future positions that the trace itself needs.
pub fn detect_renewals<L: Landscape + ?Sized>(
    land: &mut L,
    starts: &[LatticeSite],
    opts: &RenewalOptions,
) -> Result<RenewalRun> {
    let k = starts.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no starts".into()));
    }
    if starts.iter().any(|s| s.y != starts[0].y) {
        return Err(Error::InvalidParameter("starts must share a level".into()));
    }
    if opts.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let l = opts.horizon;
    let env_lane = k;
    let y0 = starts[0].y;
    // rep[i]: lowest-index path at the same position as path i.
    let mut rep: Vec<usize> = (0..k).collect();
    let mut future: Vec<VecDeque<LatticeSite>> = starts.iter().map(|&s| VecDeque::from([s])).collect();
    let mut run = RenewalRun::default();
    let mut last_renewal: Vec<LatticeSite> = starts.to_vec();
    let mut prev_tau: Option<i64> = None;
    let mut j = 0u64;
    let mut last_l: i64 = 0;

    let merge = |future: &[VecDeque<LatticeSite>], rep: &mut [usize]| {
        for i in 0..k {
            if rep[i] != i {
                continue;
            }
            for m in 0..i {
                if rep[m] == m && future[m][0] == future[i][0] {
                    rep[i] = m;
                    break;
                }
            }
        }
    };
    merge(&future, &mut rep);

    let mut n: u64 = 0;
    loop {
        if rep.iter().all(|&r| r == 0) && k > 1 && run.merged_at.is_none() {
            run.merged_at = Some(n);
            if opts.stop_on_merge {
                break;
            }
        }
        // Extend every class trace to n + l.
        for i in 0..k {
            if rep[i] != i {
                continue;
            }
            while future[i].len() <= l {
                let last = *future[i].back().unwrap();
                match ph_step(land, i, last) {
                    Ok(v) => future[i].push_back(v),
                    Err(_) => {
                        run.truncated = true;
                        run.steps = n;
                        return Ok(run);
                    }
                }
            }
        }
        let is_tau = n > 0
            && (0..k).filter(|&i| rep[i] == i).all(|i| {
                let v = future[i][0];
                future[i].iter().skip(1).all(|&u| envelope_contains(v, u))
            });
        if is_tau {
            j += 1;
            run.tau_count += 1;
            let tau = n;
            let positions: Vec<LatticeSite> = (0..k).map(|i| future[rep[i]][0]).collect();
            let mut l_j: i64 = 0;
            let mut over_new: i64 = 0;
            for i in (0..k).filter(|&i| rep[i] == i) {
                let v = future[i][0];
                let split = prev_tau.unwrap_or(i64::MAX - 1);
                let (all, newer) = land.max_overshoot_split(env_lane, v, i64::MIN, split, v.y)?;
                l_j = l_j.max(all.unwrap_or(0));
                over_new = over_new.max(newer.unwrap_or(0));
            }
            if prev_tau.is_some() {
                let n_next = 1 + over_new;
                if l_j > last_l.max(n_next) - 1 {
                    run.recursion_violations += 1;
                }
                if opts.keep_heights {
                    if let Some(last) = run.heights.last_mut() {
                        last.n_next = Some(n_next);
                    }
                }
            }
            last_l = l_j;
            if opts.keep_heights {
                run.heights.push(HeightSample {
                    j,
                    tau,
                    l: l_j,
                    n_next: None,
                });
            }
            if opts.keep_taus {
                run.taus.push(TauStep {
                    step_index: tau,
                    positions: positions.clone(),
                    horizon_used: l,
                });
            }
            prev_tau = Some(y0 + tau as i64);
            if l_j == 0 {
                let dy = positions[0].y - last_renewal[0].y;
                let dx = positions.iter().zip(&last_renewal).map(|(p, q)| p.x - q.x).collect();
                run.renewals.push(RenewalRecord {
                    sigma_index: tau,
                    positions: positions.clone(),
                    dx,
                    dy,
                    horizon_used: l,
                });
                last_renewal = positions;
                if opts.max_renewals.is_some_and(|m| run.renewals.len() >= m)
                    || (opts.stop_on_merged_renewal && run.merged_at.is_some())
                {
                    run.steps = n;
                    return Ok(run);
                }
            }
        }
        if n >= opts.max_steps {
            break;
        }
        if n.is_multiple_of(1024) && opts.deadline.is_some_and(|d| Instant::now() >= d) {
            run.steps = n;
            run.truncated = true;
            return Ok(run);
        }
        // Advance one step.
        for i in 0..k {
            if rep[i] == i {
                future[i].pop_front();
            }
        }
        for i in 0..k {
            if rep[i] != i {
                future[i] = VecDeque::from([future[rep[i]][0]]);
            }
        }
        merge(&future, &mut rep);
        n += 1;
    }
    run.steps = n;
    run.truncated = opts.max_renewals.is_some_and(|m| run.renewals.len() < m);
    Ok(run)
}

/// Runs renewal detection on the unbounded lattice.
pub fn detect_renewals_lazy(
    cfg: &ModelConfig,
    starts: &[LatticeSite],
    opts: &RenewalOptions,
    envelope_epsilon: f64,
) -> Result<RenewalRun> {
    let mut field = LazyField::new(*cfg, LazyOptions::with_envelopes(envelope_epsilon))?;
    detect_renewals(&mut field, starts, opts)
}

/// `(dx, dy)` between consecutive renewals of the path from `start`, the
/// increment from the start itself excluded.
pub fn renewal_increments(
    cfg: &ModelConfig,
    start: LatticeSite,
    n_renewals: usize,
    horizon: usize,
    max_steps: u64,
) -> Result<IncrementSeries> {
    if n_renewals == 0 {
        return Err(Error::InvalidParameter("n_renewals must be positive".into()));
    }
    let opts = RenewalOptions {
        horizon,
        max_steps,
        max_renewals: Some(n_renewals + 1),
        keep_taus: false,
        keep_heights: false,
        ..RenewalOptions::default()
    };
    let run = detect_renewals_lazy(cfg, &[start], &opts, DEFAULT_ENVELOPE_EPSILON)?;
    Ok(IncrementSeries::from_run(&run))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IncrementSeries {
    pub dx: Vec<i64>,
    pub dy: Vec<i64>,
    pub sigma_index: Vec<u64>,
    pub steps: u64,
    pub tau_count: u64,
    pub recursion_violations: u64,
    pub truncated: bool,
}

impl IncrementSeries {
    /// Increments after the first renewal, from the first path.
    pub fn from_run(run: &RenewalRun) -> Self {
        let rest = run.renewals.iter().skip(1);
        Self {
            dx: rest.clone().map(|r| r.dx[0]).collect(),
            dy: rest.clone().map(|r| r.dy).collect(),
            sigma_index: rest.map(|r| r.sigma_index).collect(),
            steps: run.steps,
            tau_count: run.tau_count,
            recursion_violations: run.recursion_violations,
            truncated: run.truncated,
        }
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn pairs(&self) -> Vec<(i64, i64)> {
        self.dx.iter().copied().zip(self.dy.iter().copied()).collect()
    }
}

/// Increments from `replicas` independent paths, each contributing up to
/// `per_replica` increments, concatenated in replica order.
pub fn pooled_increments(
    cfg: &ModelConfig,
    replicas: usize,
    per_replica: usize,
    horizon: usize,
    max_steps: u64,
) -> Result<Vec<(u64, IncrementSeries)>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r);
            let s = renewal_increments(
                &cfg.with_seed(seed),
                LatticeSite::new(0, 0),
                per_replica,
                horizon,
                max_steps,
            )?;
            Ok((seed, s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaGamma {
    pub sigma: f64,
    pub gamma: f64,
    pub sigma_se: f64,
    pub gamma_se: f64,
    pub n: usize,
}

/// Standard deviation of `dx` and mean of `dy`, with delete-one jackknife
/// standard errors.
pub fn estimate_sigma_gamma(increments: &[(i64, i64)]) -> Result<SigmaGamma> {
    let n = increments.len();
    if n < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n });
    }
    let nf = n as f64;
    let (s1, s2) = increments.iter().fold((0.0, 0.0), |(a, b), &(dx, _)| {
        let x = dx as f64;
        (a + x, b + x * x)
    });
    let var = (s2 - s1 * s1 / nf) / (nf - 1.0);
    let sigma = var.max(0.0).sqrt();
    let loo: Vec<f64> = increments
        .iter()
        .map(|&(dx, _)| {
            let x = dx as f64;
            let (a, b) = (s1 - x, s2 - x * x);
            ((b - a * a / (nf - 1.0)) / (nf - 2.0)).max(0.0).sqrt()
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / nf;
    let sigma_se = ((nf - 1.0) / nf * loo.iter().map(|t| (t - mean_loo).powi(2)).sum::<f64>()).sqrt();
    let dy: Vec<f64> = increments.iter().map(|&(_, d)| d as f64).collect();
    let gamma = dy.iter().sum::<f64>() / nf;
    let dy_var = dy.iter().map(|d| (d - gamma).powi(2)).sum::<f64>() / (nf - 1.0);
    // The jackknife standard error of a mean is the usual one.
    let gamma_se = (dy_var / nf).sqrt();
    if sigma <= 0.0 || gamma <= 0.0 {
        return Err(Error::Degenerate(format!("sigma = {sigma}, gamma = {gamma}")));
    }
    Ok(SigmaGamma {
        sigma,
        gamma,
        sigma_se,
        gamma_se,
        n,
    })
}

/// Separation of two paths at their joint renewal steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ZSeries {
    /// `z[0]` is the starting separation.
    pub z: Vec<i64>,
    pub sigma_index: Vec<u64>,
    pub steps: u64,
    pub recursion_violations: u64,
    pub truncated: bool,
}

pub fn z_process(
    cfg: &ModelConfig,
    x1: LatticeSite,
    x2: LatticeSite,
    n_renewals: usize,
    horizon: usize,
    max_steps: u64,
) -> Result<ZSeries> {
    let opts = RenewalOptions {
        horizon,
        max_steps,
        max_renewals: Some(n_renewals),
        ..RenewalOptions::default()
    };
    z_process_with(cfg, x1, x2, &opts)
}

/// [`z_process`] under arbitrary run limits. Taus and heights are not kept,
/// and detection stops at the first renewal after the paths merge.
pub fn z_process_with(cfg: &ModelConfig, x1: LatticeSite, x2: LatticeSite, opts: &RenewalOptions) -> Result<ZSeries> {
    if x1.y != x2.y || x1.x >= x2.x {
        return Err(Error::InvalidParameter("need x1 left of x2 on one level".into()));
    }
    let mut field = LazyField::new(*cfg, LazyOptions::with_envelopes(DEFAULT_ENVELOPE_EPSILON))?;
    z_process_in(&mut field, x1, x2, opts)
}

pub fn z_process_in<L: Landscape + ?Sized>(
    land: &mut L,
    x1: LatticeSite,
    x2: LatticeSite,
    opts: &RenewalOptions,
) -> Result<ZSeries> {
    let opts = RenewalOptions {
        keep_taus: false,
        keep_heights: false,
        stop_on_merge: false,
        stop_on_merged_renewal: true,
        ..*opts
    };
    let run = detect_renewals(land, &[x1, x2], &opts)?;
    let mut out = ZSeries {
        z: vec![x2.x - x1.x],
        sigma_index: vec![0],
        steps: run.steps,
        recursion_violations: run.recursion_violations,
        truncated: run.truncated,
    };
    for r in &run.renewals {
        let z = r.positions[1].x - r.positions[0].x;
        out.z.push(z);
        out.sigma_index.push(r.sigma_index);
        if z == 0 {
            out.truncated = false;
            break;
        }
    }
    Ok(out)
}

/// `prod_{m=1}^{l} (1 - (1 - p0)^(2m - 1))^2`; `None` takes the limit.
pub fn shield_product_bound(p0: f64, l: Option<u64>) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("p0 = {p0} must lie in (0, 1]")));
    }
    let cap = l.unwrap_or_else(|| shield_convergence_index(p0, 1e-17));
    let q = 1.0 - p0;
    let mut prod = 1.0;
    for m in 1..=cap {
        let t = q.powi((2 * m - 1).min(i32::MAX as u64) as i32);
        if t == 0.0 {
            break;
        }
        prod *= (1.0 - t) * (1.0 - t);
    }
    Ok(prod)
}

/// Smallest `m` beyond which successive partial products differ by less than
/// `tol`: the factor at `m` is at least `1 - 2 (1 - p0)^(2m - 1)`.
pub fn shield_convergence_index(p0: f64, tol: f64) -> u64 {
    let q = 1.0 - p0;
    if q <= 0.0 {
        return 1;
    }
    let mut m = 1u64;
    while 2.0 * q.powi((2 * m - 1) as i32) >= tol {
        m += 1;
    }
    m
}

/// Fraction of `trials` independent fields in which `In^(l)` holds at the origin.
pub fn in_event_frequency(cfg: &ModelConfig, l: usize, trials: usize) -> Result<(usize, usize)> {
    let hits: usize = (0..trials as u64)
        .into_par_iter()
        .map(|r| {
            let c = cfg.with_seed(derive_seed(cfg.seed ^ 0x1A2B_3C4D, r));
            let mut field = LazyField::new(c, LazyOptions::default())?;
            Ok(usize::from(in_event_horizon(&mut field, 0, LatticeSite::new(0, 0), l)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok((hits, trials))
}

/// `L_{j+1} <= max(L_j, N_{j+1}) - 1` failures over a stored height series.
pub fn recursion_violations(heights: &[HeightSample]) -> usize {
    heights
        .windows(2)
        .filter(|w| match w[0].n_next {
            Some(n) => w[1].l > w[0].l.max(n) - 1,
            None => false,
        })
        .count()
}

/// `seed,ell,dx,dy,sigma_index` rows.
pub fn increments_csv(series: &[(u64, IncrementSeries)]) -> String {
    let mut out = String::from("seed,ell,dx,dy,sigma_index\n");
    for (seed, s) in series {
        for i in 0..s.len() {
            writeln!(out, "{seed},{},{},{},{}", i + 1, s.dx[i], s.dy[i], s.sigma_index[i]).unwrap();
        }
    }
    out
}

/// `seed,j,tau,L,N_next` rows; `N_next` is empty for the last τ step.
pub fn heights_csv(series: &[(u64, Vec<HeightSample>)]) -> String {
    let mut out = String::from("seed,j,tau,L,N_next\n");
    for (seed, hs) in series {
        for h in hs {
            let n = h.n_next.map(|n| n.to_string()).unwrap_or_default();
            writeln!(out, "{seed},{},{},{},{n}", h.j, h.tau, h.l).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PerturbationLaw;
    use crate::process::{Landing, WindowRealization, WindowSpec};
    use proptest::prelude::*;

    fn site(x: i64, y: i64) -> LatticeSite {
        LatticeSite::new(x, y)
    }

    fn identity(seed: u64) -> ModelConfig {
        ModelConfig::new(seed, 1.0, PerturbationLaw::geometric(1.0, 1.0)).unwrap()
    }

    /// `(source, landing)` coordinate pairs.
    type Pairs<'a> = &'a [((i64, i64), (i64, i64))];

    fn fixture(cfg: &ModelConfig, spec: WindowSpec, pairs: Pairs<'_>) -> WindowRealization {
        let landings: Vec<Landing> = pairs
            .iter()
            .map(|&((sx, sy), (px, py))| Landing {
                source: site(sx, sy),
                point: site(px, py),
            })
            .collect();
        WindowRealization::from_landings(cfg, spec, &landings).unwrap()
    }

    #[test]
    fn envelope_examples() {
        assert!(envelope_contains(site(0, 0), site(1, 1)));
        assert!(!envelope_contains(site(0, 0), site(2, 1)));
        assert!(envelope_contains(site(0, 0), site(0, 0)));
        assert!(!envelope_contains(site(0, 0), site(0, -1)));
        assert!(envelope_contains(site(5, 3), site(-4, 6)));
        assert!(ParabolicEnvelope::new(site(0, 0)).contains(site(i64::MAX / 2, 1 << 31)));
    }

    proptest! {
        #[test]
        fn envelopes_nest(px in -30i64..30, py in 0i64..8, qx in -20i64..20, qy in 0i64..12) {
            let apex = site(0, 0);
            let pt = site(px, py);
            prop_assume!(envelope_contains(apex, pt));
            let q = site(pt.x + qx, pt.y + qy);
            if envelope_contains(pt, q) {
                prop_assert!(envelope_contains(apex, q));
            }
        }
    }

    #[test]
    fn straight_paths_stay_inside() {
        let mut land = LazyField::new(identity(3), LazyOptions::default()).unwrap();
        for l in [1, 10, 100] {
            land.reset();
            assert!(in_event_horizon(&mut land, 0, site(4, 0), l).unwrap());
        }
    }

    #[test]
    fn wide_first_step_exits() {
        let cfg = ModelConfig::standard(0);
        let spec = WindowSpec::new(-6, 6, 0, 2).unwrap();
        let w = fixture(&cfg, spec, &[((0, 0), (0, 0)), ((2, 1), (2, 1)), ((0, 2), (0, 2))]);
        for l in 1..=2 {
            assert!(!in_event_horizon(&mut w.clone(), 0, site(0, 0), l).unwrap());
        }
    }

    #[test]
    fn out_fails_on_an_upward_landing() {
        let cfg = ModelConfig::standard(0);
        let spec = WindowSpec::new(-4, 4, -2, 4).unwrap();
        let mut w = fixture(&cfg, spec, &[((0, -1), (0, 2))]);
        assert!(!out_event(&mut w, 0, site(0, 0), spec.y_lo).unwrap());
        // The landing is outside the envelope of an apex far to the side.
        assert!(out_event(&mut w, 0, site(3, 1), spec.y_lo).unwrap());
        let mut empty = fixture(&cfg, spec, &[((0, 0), (0, 0))]);
        assert!(out_event(&mut empty, 0, site(0, 0), spec.y_lo).unwrap());
    }

    #[test]
    fn point_mass_is_always_out() {
        let cfg = ModelConfig::new(8, 0.5, PerturbationLaw::geometric(0.5, 1.0)).unwrap();
        let mut land = LazyField::new(cfg, LazyOptions::with_envelopes(1e-10)).unwrap();
        for y in 0..30 {
            assert!(out_event(&mut land, 0, site(y % 7, y), i64::MIN).unwrap());
        }
    }

    #[test]
    fn every_step_renews_on_the_identity_lattice() {
        let opts = RenewalOptions {
            max_steps: 40,
            ..RenewalOptions::default()
        };
        let run = detect_renewals_lazy(&identity(1), &[site(0, 0), site(3, 0)], &opts, 1e-10).unwrap();
        assert_eq!(run.renewals.len(), 40);
        for (i, r) in run.renewals.iter().enumerate() {
            assert_eq!(r.sigma_index, i as u64 + 1);
            assert_eq!(r.dx, vec![0, 0]);
            assert_eq!(r.dy, 1);
        }
        assert!(run.heights.iter().all(|h| h.l == 0));
    }

    #[test]
    fn renewal_runs_satisfy_the_structural_invariants() {
        let cfg = ModelConfig::standard(2024);
        let opts = RenewalOptions {
            max_steps: 20_000,
            max_renewals: Some(12),
            ..RenewalOptions::default()
        };
        let run = detect_renewals_lazy(&cfg, &[site(0, 0)], &opts, 1e-10).unwrap();
        assert!(run.renewals.len() >= 5, "only {} renewals", run.renewals.len());
        assert_eq!(run.recursion_violations, 0);
        assert_eq!(recursion_violations(&run.heights), 0);
        for r in &run.renewals {
            assert!(r.dy > 0);
            assert!(r.dx[0].unsigned_abs() as u128 <= (r.dy as u128).pow(2));
        }
        // Every renewal is also a τ step with L = 0.
        for r in &run.renewals {
            let h = run.heights.iter().find(|h| h.tau == r.sigma_index).unwrap();
            assert_eq!(h.l, 0);
        }
        // Out re-checked from a fresh exploration at every renewal position.
        let mut fresh = LazyField::new(cfg, LazyOptions::with_envelopes(1e-10)).unwrap();
        for r in &run.renewals {
            fresh.reset();
            assert!(out_event(&mut fresh, 0, r.positions[0], i64::MIN).unwrap());
        }
    }

    #[test]
    fn in_confinement_between_renewals() {
        let cfg = ModelConfig::standard(77);
        let opts = RenewalOptions {
            max_steps: 10_000,
            max_renewals: Some(6),
            ..RenewalOptions::default()
        };
        let run = detect_renewals_lazy(&cfg, &[site(0, 0)], &opts, 1e-10).unwrap();
        let mut land = LazyField::new(cfg, LazyOptions::default()).unwrap();
        let trace = crate::network::trace_path(&mut land, site(0, 0), run.steps as usize);
        assert!(!trace.truncated);
        for pair in run.renewals.windows(2) {
            let from = pair[0].positions[0];
            for n in pair[0].sigma_index..=pair[1].sigma_index {
                assert!(envelope_contains(from, trace.vertices[n as usize]));
            }
        }
    }

    #[test]
    fn longer_horizons_only_remove_renewals() {
        let cfg = ModelConfig::standard(5);
        let run = |horizon| {
            let opts = RenewalOptions {
                horizon,
                max_steps: 15_000,
                ..RenewalOptions::default()
            };
            detect_renewals_lazy(&cfg, &[site(0, 0)], &opts, 1e-10).unwrap()
        };
        let short = run(32);
        let long = run(64);
        let short_steps: std::collections::BTreeSet<u64> = short.renewals.iter().map(|r| r.sigma_index).collect();
        assert!(!long.renewals.is_empty());
        for r in &long.renewals {
            assert!(
                short_steps.contains(&r.sigma_index),
                "renewal at {} appeared",
                r.sigma_index
            );
        }
    }

    #[test]
    fn increments_drop_the_first_lag() {
        let cfg = ModelConfig::standard(9);
        let s = renewal_increments(&cfg, site(0, 0), 5, 64, 100_000).unwrap();
        assert_eq!(s.len(), 5);
        assert!(!s.truncated);
        let opts = RenewalOptions {
            max_steps: 100_000,
            max_renewals: Some(6),
            ..RenewalOptions::default()
        };
        let run = detect_renewals_lazy(&cfg, &[site(0, 0)], &opts, DEFAULT_ENVELOPE_EPSILON).unwrap();
        assert_eq!(s.dy[0], run.renewals[1].dy);
        assert_eq!(s.dx[0], run.renewals[1].dx[0]);
        assert!(matches!(
            renewal_increments(&cfg, site(0, 0), 0, 64, 10),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn truncation_is_flagged() {
        let s = renewal_increments(&ModelConfig::standard(1), site(0, 0), 50, 64, 200).unwrap();
        assert!(s.truncated);
    }

    #[test]
    fn sigma_gamma_on_a_two_point_law() {
        let inc: Vec<(i64, i64)> = (0..1000).map(|i| (if i % 2 == 0 { 1 } else { -1 }, 2)).collect();
        let sg = estimate_sigma_gamma(&inc).unwrap();
        assert!((sg.sigma - 1.0).abs() < 1e-3);
        assert_eq!(sg.gamma, 2.0);
        assert_eq!(sg.gamma_se, 0.0);
        assert!(matches!(
            estimate_sigma_gamma(&inc[..50]),
            Err(Error::InsufficientSamples { needed: 100, got: 50 })
        ));
        let flat = vec![(0, 2); 200];
        assert!(matches!(estimate_sigma_gamma(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn coalesced_paths_absorb() {
        let z = z_process(&identity(4), site(0, 0), site(2, 0), 10, 64, 100).unwrap();
        assert!(z.z.iter().all(|&v| v == 2));
        let cfg = ModelConfig::standard(12);
        let z = z_process(&cfg, site(0, 0), site(1, 0), 10_000, 64, 200_000).unwrap();
        assert!(z.z.iter().all(|&v| v >= 0));
        assert_eq!(*z.z.last().unwrap(), 0, "paths one column apart should merge");
        assert_eq!(z.z.iter().filter(|&&v| v == 0).count(), 1);
        assert!(z_process(&cfg, site(2, 0), site(1, 0), 1, 64, 10).is_err());
    }

    #[test]
    fn shield_examples() {
        for l in [1, 5, 50] {
            assert_eq!(shield_product_bound(1.0, Some(l)).unwrap(), 1.0);
        }
        assert!((shield_product_bound(0.125, Some(1)).unwrap() - 0.015625).abs() < 1e-15);
        let mut last = 1.0;
        for l in 1..40 {
            let v = shield_product_bound(0.15, Some(l)).unwrap();
            assert!(v <= last);
            last = v;
        }
        let m = shield_convergence_index(0.15, 1e-15);
        let a = shield_product_bound(0.15, Some(m)).unwrap();
        let b = shield_product_bound(0.15, Some(m + 1000)).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(shield_product_bound(0.0, None).is_err());
    }

    #[test]
    fn in_frequency_is_reproducible() {
        let cfg = ModelConfig::standard(6);
        let a = in_event_frequency(&cfg, 8, 200).unwrap();
        assert_eq!(a, in_event_frequency(&cfg, 8, 200).unwrap());
        assert!(a.0 > 0 && a.0 <= 200);
    }

    #[test]
    fn csv_columns() {
        let s = IncrementSeries {
            dx: vec![3],
            dy: vec![4],
            sigma_index: vec![10],
            ..IncrementSeries::default()
        };
        assert_eq!(increments_csv(&[(7, s)]), "seed,ell,dx,dy,sigma_index\n7,1,3,4,10\n");
        let h = vec![
            HeightSample {
                j: 1,
                tau: 2,
                l: 3,
                n_next: Some(1),
            },
            HeightSample {
                j: 2,
                tau: 5,
                l: 0,
                n_next: None,
            },
        ];
        assert_eq!(heights_csv(&[(7, h)]), "seed,j,tau,L,N_next\n7,1,2,3,1\n7,2,5,0,\n");
    }
}
