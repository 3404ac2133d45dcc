//! One runner per experiment kind. A runner returns its output files, a JSON
//! summary and the statistics that `--gate` checks; it never touches disk.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use howard_core::analysis::{
    donsker_test, eta_statistic, exponential_tail, fit_box_counts, hyperuniformity_fit, iid_diagnostics, level_ratio,
    log_grid, poisson_control, random_walk_control, survival_estimate, symmetry_test, tail_exponent,
    tail_exponent_bootstrap, EtaQuery, Scaling, TailFit,
};
use howard_core::network::{
    check_noncrossing, coalescence_samples, connectivity_experiment, dual_vertices, trace_path, window_crossings,
    CoalescenceTime, DualForest,
};
use howard_core::renewal::{
    detect_renewals_lazy, estimate_sigma_gamma, heights_csv, in_event_frequency, increments_csv, IncrementSeries,
    RenewalOptions, DEFAULT_ENVELOPE_EPSILON,
};
use howard_core::{
    box_counts, derive_seed, field::pmf_selfcheck, materialize_window, LatticeSite, ModelConfig, RowPoints, WindowSpec,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentSpec, Kind, RenewalParams};
use crate::CliError;

/// Seed streams for the resampling steps, kept apart from the replica seeds.
const BOOTSTRAP_STREAM: u64 = 0xB007_57A9;
const CONTROL_STREAM: u64 = 0xC047_8013;

/// A statistic compared against its acceptance range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateCheck {
    pub name: String,
    pub value: Option<f64>,
    pub requirement: String,
    pub passed: bool,
}

impl GateCheck {
    fn new(name: &str, value: Option<f64>, requirement: impl Into<String>, ok: impl Fn(f64) -> bool) -> Self {
        Self {
            name: name.into(),
            value: value.filter(|v| v.is_finite()),
            requirement: requirement.into(),
            passed: value.is_some_and(|v| v.is_finite() && ok(v)),
        }
    }

    fn within(name: &str, value: Option<f64>, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("in [{lo}, {hi}]"), |v| v >= lo && v <= hi)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// `(file name, contents)` in output order.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    pub checks: Vec<GateCheck>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl Outcome {
    fn file(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), t0.elapsed().as_secs_f64()));
        out
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match spec.kind {
        Kind::PmfCheck => pmf_check(spec, &mut out)?,
        Kind::WindowDump => window_dump(spec, &mut out)?,
        Kind::Coalescence => coalescence(spec, &mut out)?,
        Kind::Renewal => renewal(spec, &mut out)?,
        Kind::Scaling => scaling(spec, &mut out)?,
        Kind::Eta => eta(spec, &mut out)?,
        Kind::Hyperuniformity => hyperuniformity(spec, &mut out)?,
        Kind::Connectivity => connectivity(spec, &mut out)?,
        Kind::DualCheck => dual_check(spec, &mut out)?,
    }
    Ok(out)
}

fn pmf_check(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let p = &spec.pmf;
    let report = out.timed("sample", || {
        pmf_selfcheck(&spec.model.law, p.samples as usize, spec.model.seed, p.threshold)
    })?;
    let mut csv = String::from("marginal,bin,expected,observed\n");
    for (name, m) in [("dx", &report.dx), ("dy", &report.dy)] {
        for i in 0..m.bins.len() {
            writeln!(csv, "{name},{},{},{}", m.bins[i], m.expected[i], m.observed[i]).unwrap();
        }
    }
    out.file("pmf.csv", csv);
    for (name, m) in [("dx_p_value", &report.dx), ("dy_p_value", &report.dy)] {
        out.checks.push(GateCheck::new(
            name,
            Some(m.p_value),
            format!("> {}", p.threshold),
            |v| v > p.threshold,
        ));
    }
    out.summary = json!({
        "n_samples": report.n_samples,
        "threshold": report.threshold,
        "flagged": report.flagged,
        "dx": { "statistic": report.dx.chi_square, "dof": report.dx.dof, "p_value": report.dx.p_value },
        "dy": { "statistic": report.dy.chi_square, "dof": report.dy.dof, "p_value": report.dy.p_value },
    });
    Ok(())
}

fn window_spec(spec: &ExperimentSpec) -> Result<WindowSpec, CliError> {
    let w = &spec.window;
    Ok(WindowSpec::with_epsilon(w.x_lo, w.x_hi, w.y_lo, w.y_hi, w.epsilon)?)
}

/// Traces separated by blank lines.
fn join_dumps(dumps: impl Iterator<Item = String>) -> String {
    dumps.collect::<Vec<_>>().join("\n")
}

fn window_dump(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let ws = window_spec(spec)?;
    let mut w = out.timed("materialize", || materialize_window(&spec.model, &ws))?;
    let height = ws.height() as usize - 1;
    let starts: Vec<LatticeSite> = w
        .row(ws.y_lo)
        .map(|r| r.xs.iter().map(|&x| LatticeSite::new(x, ws.y_lo)).collect())
        .unwrap_or_default();
    let primal: Vec<_> = starts.iter().map(|&s| trace_path(&mut w, s, height)).collect();
    let top = w.row(ws.y_hi).cloned().unwrap_or_else(|| RowPoints::new(ws.y_hi));
    let points: usize = w.rows.iter().map(|r| r.xs.len()).sum();
    let special: usize = w.rows.iter().map(|r| r.special.iter().filter(|&&s| s).count()).sum();
    let text = w.dump();
    let dual: Vec<_> = {
        let mut forest = DualForest::new(&mut w);
        dual_vertices(&top)
            .into_iter()
            .map(|v| forest.dual_trace(v, height))
            .collect()
    };
    let violations = check_noncrossing(&primal, &dual);
    let truncated = primal.iter().filter(|p| p.truncated).count() + dual.iter().filter(|d| d.truncated).count();
    if truncated > 0 {
        out.warnings
            .push(format!("{truncated} traces stopped before the top row"));
    }
    out.file("window.txt", text);
    out.file("primal.txt", join_dumps(primal.iter().map(|p| p.dump())));
    out.file("dual.txt", join_dumps(dual.iter().map(|d| d.dump())));
    out.checks.push(GateCheck::within(
        "crossing_violations",
        Some(violations as f64),
        0.0,
        0.0,
    ));
    out.summary = json!({
        "window": to_json(&ws),
        "margins": to_json(&w.margins),
        "points": points,
        "special_points": special,
        "primal_paths": primal.len(),
        "dual_paths": dual.len(),
        "truncated_traces": truncated,
        "crossing_violations": violations,
    });
    Ok(())
}

fn coalescence(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let c = &spec.coalescence;
    let grid = log_grid(c.grid_lo, c.grid_hi, c.per_decade as usize);
    let window = (c.fit_lo, c.fit_hi);
    let mut times = String::from("separation,replica,seed,status,t\n");
    let mut survival = String::from("separation,t,survival,censored_by\n");
    let mut fits: Vec<(i64, Option<TailFit>)> = Vec::new();
    let mut per_sep = Vec::new();
    for &sep in &c.separations {
        let samples = out.timed(&format!("separation {sep}"), || {
            coalescence_samples(&spec.model, sep, c.horizon, c.replicas as usize)
        })?;
        let mut censored = 0;
        for (r, s) in samples.iter().enumerate() {
            let (status, t) = match s.time {
                CoalescenceTime::Exact(t) => ("exact", t),
                CoalescenceTime::Censored(t) => {
                    censored += 1;
                    ("censored", t)
                }
            };
            let seed = derive_seed(spec.model.seed, r as u64);
            writeln!(times, "{sep},{r},{seed},{status},{t}").unwrap();
        }
        let curve = match survival_estimate(&samples, &grid) {
            Ok(curve) => Some(curve),
            Err(e) => {
                out.warnings.push(format!("separation {sep}: no survival curve: {e}"));
                None
            }
        };
        let fit = curve.as_ref().and_then(|curve| {
            for i in 0..curve.grid.len() {
                writeln!(
                    survival,
                    "{sep},{},{},{}",
                    curve.grid[i], curve.survival[i], curve.censored_by[i]
                )
                .unwrap();
            }
            let fit = if c.bootstrap >= 20 {
                tail_exponent_bootstrap(
                    &samples,
                    &grid,
                    window,
                    c.bootstrap as usize,
                    derive_seed(spec.model.seed ^ BOOTSTRAP_STREAM, sep as u64),
                )
            } else {
                tail_exponent(curve, window)
            };
            fit.map_err(|e| out.warnings.push(format!("separation {sep}: no tail fit: {e}")))
                .ok()
        });
        if censored > 0 {
            out.warnings.push(format!(
                "separation {sep}: {censored} of {} replicas censored",
                samples.len()
            ));
        }
        per_sep.push(json!({
            "separation": sep,
            "replicas": samples.len(),
            "censored": censored,
            "fit": fit.as_ref().map(to_json),
        }));
        fits.push((sep, fit));
    }
    out.file("times.csv", times);
    out.file("survival.csv", survival);
    if let Some((_, fit)) = fits.first() {
        let slope = fit.map(|f| f.slope);
        out.checks
            .push(GateCheck::within("slope", slope, c.slope_min, c.slope_max));
        out.checks.push(GateCheck::new(
            "r2",
            fit.map(|f| f.r2),
            format!(">= {}", c.min_r2),
            |v| v >= c.min_r2,
        ));
    }
    let center = (c.fit_lo * c.fit_hi).sqrt();
    let ratio = match fits.as_slice() {
        [(_, Some(a)), (_, Some(b)), ..] => Some(level_ratio(a, b, center)),
        _ => None,
    };
    if fits.len() >= 2 {
        out.checks
            .push(GateCheck::within("level_ratio", ratio, c.ratio_min, c.ratio_max));
    }
    out.summary = json!({
        "grid": grid,
        "fit_window": [c.fit_lo, c.fit_hi],
        "separations": per_sep,
        "level_ratio": { "t": center, "value": ratio },
    });
    Ok(())
}

struct RenewalData {
    increments: Vec<(u64, IncrementSeries)>,
    heights: Vec<(u64, Vec<howard_core::renewal::HeightSample>)>,
    recursion_violations: u64,
    truncated: usize,
}

/// Replica `r` runs on `derive_seed(seed, r)` from the origin.
fn run_renewals(cfg: &ModelConfig, p: &RenewalParams) -> Result<RenewalData, CliError> {
    let opts = RenewalOptions {
        horizon: p.horizon as usize,
        max_steps: p.max_steps,
        max_renewals: Some(p.per_replica as usize + 1),
        keep_taus: false,
        keep_heights: p.heights,
        ..RenewalOptions::default()
    };
    let runs: Vec<_> = (0..p.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r);
            detect_renewals_lazy(
                &cfg.with_seed(seed),
                &[LatticeSite::new(0, 0)],
                &opts,
                DEFAULT_ENVELOPE_EPSILON,
            )
            .map(|run| (seed, run))
        })
        .collect::<Result<_, _>>()?;
    Ok(RenewalData {
        recursion_violations: runs.iter().map(|(_, r)| r.recursion_violations).sum(),
        truncated: runs.iter().filter(|(_, r)| r.truncated).count(),
        increments: runs.iter().map(|(s, r)| (*s, IncrementSeries::from_run(r))).collect(),
        heights: runs.into_iter().map(|(s, r)| (s, r.heights)).collect(),
    })
}

fn pooled(data: &RenewalData) -> Vec<(i64, i64)> {
    data.increments.iter().flat_map(|(_, s)| s.pairs()).collect()
}

fn renewal_stage(spec: &ExperimentSpec, out: &mut Outcome) -> Result<RenewalData, CliError> {
    let data = out.timed("renewal", || run_renewals(&spec.model, &spec.renewal))?;
    if data.truncated > 0 {
        out.warnings.push(format!(
            "{} of {} renewal runs stopped before {} renewals",
            data.truncated, spec.renewal.replicas, spec.renewal.per_replica
        ));
    }
    out.file("increments.csv", increments_csv(&data.increments));
    Ok(data)
}

fn renewal(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let data = renewal_stage(spec, out)?;
    if spec.renewal.heights {
        out.file("heights.csv", heights_csv(&data.heights));
    }
    let pairs = pooled(&data);
    let dx: Vec<i64> = pairs.iter().map(|p| p.0).collect();
    let dy: Vec<i64> = pairs.iter().map(|p| p.1).collect();
    let mut warn = |what: &str, e: howard_core::Error| out.warnings.push(format!("{what}: {e}"));
    let sg = estimate_sigma_gamma(&pairs).map_err(|e| warn("sigma/gamma", e)).ok();
    let sym = symmetry_test(&dx).map_err(|e| warn("symmetry", e)).ok();
    let iid_dx = iid_diagnostics(&dx).map_err(|e| warn("dx diagnostics", e)).ok();
    let iid_dy = iid_diagnostics(&dy).map_err(|e| warn("dy diagnostics", e)).ok();
    let tail = exponential_tail(&dy, 20).map_err(|e| warn("dy tail", e)).ok();
    let trials = spec.renewal.horizon_trials as usize;
    let sensitivity: Vec<Value> = if trials > 0 {
        let h = spec.renewal.horizon as usize;
        let ls = [(h / 2).max(1), h, 2 * h];
        let freqs = out.timed("horizon sensitivity", || {
            ls.iter()
                .map(|&l| in_event_frequency(&spec.model, l, trials))
                .collect::<Result<Vec<_>, _>>()
        })?;
        ls.iter()
            .zip(freqs)
            .map(|(l, (hits, n))| json!({ "l": l, "hits": hits, "trials": n, "frequency": hits as f64 / n as f64 }))
            .collect()
    } else {
        Vec::new()
    };
    out.checks.push(GateCheck::within(
        "recursion_violations",
        Some(data.recursion_violations as f64),
        0.0,
        0.0,
    ));
    out.checks.push(GateCheck::new(
        "mean_dx_over_se",
        sym.map(|s| s.mean / s.mean_se),
        "|z| <= 3",
        |z| z.abs() <= 3.0,
    ));
    out.checks
        .push(GateCheck::new("sign_p", sym.map(|s| s.sign_p), "> 0.01", |p| p > 0.01));
    for (name, iid) in [("dx", &iid_dx), ("dy", &iid_dy)] {
        let lag1 = iid.as_ref().map(|r| r.lag1());
        out.checks
            .push(GateCheck::new(&format!("{name}_lag1"), lag1, "|r| < 0.05", |r| {
                r.abs() < 0.05
            }));
        let oe = iid.as_ref().map(|r| r.odd_even.p_value);
        out.checks
            .push(GateCheck::new(&format!("{name}_odd_even_p"), oe, "> 0.01", |p| {
                p > 0.01
            }));
    }
    out.checks
        .push(GateCheck::new("dy_tail_r2", tail.map(|f| f.r2), ">= 0.95", |r| {
            r >= 0.95
        }));
    out.summary = json!({
        "replicas": spec.renewal.replicas,
        "increments": pairs.len(),
        "truncated_runs": data.truncated,
        "recursion_violations": data.recursion_violations,
        "sigma_gamma": sg.as_ref().map(to_json),
        "symmetry": sym.as_ref().map(to_json),
        "dx_diagnostics": iid_dx.as_ref().map(to_json),
        "dy_diagnostics": iid_dy.as_ref().map(to_json),
        "dy_tail": tail.as_ref().map(to_json),
        "in_event_frequency": sensitivity,
    });
    Ok(())
}

/// Fixed `sigma`, `gamma` from the spec, or estimates from a renewal run.
fn scaling_constants(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(Scaling, Value), CliError> {
    let s = &spec.scaling;
    if s.sigma > 0.0 {
        return Ok((
            Scaling::new(s.n, s.sigma, s.gamma)?,
            json!({ "source": "spec", "sigma": s.sigma, "gamma": s.gamma }),
        ));
    }
    let data = renewal_stage(spec, out)?;
    let sg = estimate_sigma_gamma(&pooled(&data))?;
    let mut v = to_json(&sg);
    v["source"] = json!("renewal");
    Ok((Scaling::new(s.n, sg.sigma, sg.gamma)?, v))
}

fn scaling(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let s = &spec.scaling;
    let (scale, constants) = scaling_constants(spec, out)?;
    let deadline = (s.budget_secs > 0).then(|| Instant::now() + Duration::from_secs(s.budget_secs));
    let report = out.timed("donsker", || {
        donsker_test(&spec.model, &scale, s.t, s.replicas as usize, deadline)
    })?;
    let control = random_walk_control(&scale, s.t, s.replicas as usize, spec.model.seed ^ CONTROL_STREAM)?;
    if report.completed < report.requested {
        out.warnings.push(format!(
            "budget reached after {} of {} replicas",
            report.completed, report.requested
        ));
    }
    let mut csv = String::from("index,value\n");
    for (i, v) in report.samples.iter().enumerate() {
        writeln!(csv, "{i},{v}").unwrap();
    }
    out.file("samples.csv", csv);
    out.checks.push(GateCheck::within(
        "completed",
        Some(report.completed as f64),
        s.replicas as f64,
        s.replicas as f64,
    ));
    out.checks
        .push(GateCheck::new("ks_p", Some(report.p_value), "> 0.01", |p| p > 0.01));
    out.checks
        .push(GateCheck::within("variance", Some(report.variance / s.t), 0.9, 1.1));
    let strip = |r: &howard_core::analysis::DonskerReport| {
        json!({
            "t": r.t, "steps": r.steps, "requested": r.requested, "completed": r.completed,
            "statistic": r.ks_statistic, "p_value": r.p_value, "mean": r.mean,
            "variance": r.variance, "variance_se": r.variance_se,
        })
    };
    out.summary = json!({
        "scaling": to_json(&scale),
        "constants": constants,
        "donsker": strip(&report),
        "random_walk_control": strip(&control),
    });
    Ok(())
}

fn eta(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let e = &spec.eta;
    let (scale, constants) = scaling_constants(spec, out)?;
    let queries: Vec<EtaQuery> =
        e.a.iter()
            .zip(&e.b)
            .map(|(&a, &b)| EtaQuery { t0: e.t0, t: e.t, a, b })
            .collect();
    let reports = out.timed("eta", || {
        eta_statistic(&spec.model, &scale, &queries, e.replicas as usize)
    })?;
    let mut csv = String::from("query,a,b,replica,count\n");
    for (q, r) in reports.iter().enumerate() {
        for (i, c) in r.counts.iter().enumerate() {
            writeln!(csv, "{q},{},{},{i},{c}", r.query.a, r.query.b).unwrap();
        }
    }
    out.file("counts.csv", csv);
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "query": to_json(&r.query), "mean": r.mean, "p_at_least_2": r.p_at_least_2, "p_at_least_3": r.p_at_least_3 }))
        .collect();
    out.summary = json!({ "scaling": to_json(&scale), "constants": constants, "queries": rows });
    Ok(())
}

fn hyperuniformity(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let h = &spec.hyperuniformity;
    let stats = out.timed("box counts", || box_counts(&spec.model, &h.sides, h.replicas as usize))?;
    let mut counts = String::from("side,replica,count,multiplicity\n");
    let mut variance = String::from("side,mean,variance,multiplicity_mean,multiplicity_variance\n");
    for s in &stats {
        for (i, (c, m)) in s.counts.iter().zip(&s.multiplicity_counts).enumerate() {
            writeln!(counts, "{},{i},{c},{m}", s.side).unwrap();
        }
        writeln!(
            variance,
            "{},{},{},{},{}",
            s.side, s.mean, s.variance, s.multiplicity_mean, s.multiplicity_variance
        )
        .unwrap();
    }
    out.file("counts.csv", counts);
    out.file("variance.csv", variance);
    let fit = fit_box_counts(&stats)
        .map_err(|e| out.warnings.push(format!("fit: {e}")))
        .ok();
    let multiplicity = hyperuniformity_fit(
        &stats
            .iter()
            .map(|s| (s.side, s.multiplicity_variance))
            .collect::<Vec<_>>(),
    )
    .map_err(|e| out.warnings.push(format!("multiplicity fit: {e}")))
    .ok();
    let control = poisson_control(&stats, spec.model.seed ^ CONTROL_STREAM)
        .and_then(|c| fit_box_counts(&c))
        .map_err(|e| out.warnings.push(format!("control fit: {e}")))
        .ok();
    out.checks.push(GateCheck::new(
        "alpha",
        fit.map(|f| f.alpha),
        format!("< {}", h.alpha_max),
        |a| a < h.alpha_max,
    ));
    out.checks.push(GateCheck::within(
        "control_alpha",
        control.map(|f| f.alpha),
        h.control_min,
        h.control_max,
    ));
    out.summary = json!({
        "fit": fit.as_ref().map(to_json),
        "multiplicity_fit": multiplicity.as_ref().map(to_json),
        "poisson_control": control.as_ref().map(to_json),
    });
    Ok(())
}

fn connectivity(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let c = &spec.connectivity;
    let heights: Vec<u64> = c.heights.iter().map(|&h| h as u64).collect();
    let points = out.timed("connectivity", || {
        connectivity_experiment(&spec.model, c.width, c.paths as usize, &heights, c.replicas as usize)
    })?;
    let mut csv = String::from("height,coalesced,replicas,fraction\n");
    for p in &points {
        writeln!(csv, "{},{},{},{}", p.height, p.coalesced, p.replicas, p.fraction).unwrap();
    }
    out.file("connectivity.csv", csv);
    let drops = points.windows(2).filter(|w| w[1].fraction < w[0].fraction).count();
    out.checks
        .push(GateCheck::within("monotonicity_breaks", Some(drops as f64), 0.0, 0.0));
    let last = points.last().map(|p| p.fraction);
    out.checks.push(GateCheck::new(
        "final_fraction",
        last,
        format!(">= {}", c.min_fraction),
        |f| f >= c.min_fraction,
    ));
    out.summary = json!({ "width": c.width, "paths": c.paths, "points": to_json(&points) });
    Ok(())
}

fn dual_check(spec: &ExperimentSpec, out: &mut Outcome) -> Result<(), CliError> {
    let d = &spec.dual;
    let ws = WindowSpec::new(0, d.width - 1, 0, d.height - 1)?;
    let checks = out.timed("windows", || {
        (0..d.windows)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(spec.model.seed, i);
                window_crossings(&spec.model.with_seed(seed), &ws).map(|c| (seed, c))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut csv = String::from("window,seed,primal,dual,truncated,violations\n");
    for (i, (seed, c)) in checks.iter().enumerate() {
        writeln!(
            csv,
            "{i},{seed},{},{},{},{}",
            c.primal, c.dual, c.truncated, c.violations
        )
        .unwrap();
    }
    out.file("crossings.csv", csv);
    let violations: usize = checks.iter().map(|(_, c)| c.violations).sum();
    let truncated: usize = checks.iter().map(|(_, c)| c.truncated).sum();
    if truncated > 0 {
        out.warnings
            .push(format!("{truncated} primal paths stopped before the top row"));
    }
    out.checks
        .push(GateCheck::within("violations", Some(violations as f64), 0.0, 0.0));
    out.summary = json!({
        "windows": d.windows,
        "window": to_json(&ws),
        "primal_paths": checks.iter().map(|(_, c)| c.primal).sum::<usize>(),
        "dual_paths": checks.iter().map(|(_, c)| c.dual).sum::<usize>(),
        "truncated": truncated,
        "violations": violations,
    });
    Ok(())
}
