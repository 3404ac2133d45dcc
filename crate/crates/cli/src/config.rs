//! Experiment specifications: a TOML subset of `key = value` lines grouped
//! into `[section]`s, validated against a fixed schema.
//!
//! ```text
//! kind = "coalescence"
//!
//! [model]
//! seed = 12648430
//! p = 0.5
//! law = "geometric"
//!
//! [coalescence]
//! separations = [1, 2]
//! replicas = 2000
//! ```
//!
//! Every key has a default; unknown sections and keys are rejected.

use std::fmt::{self, Write as _};
use std::ops::Range;
use std::str::FromStr;

use howard_core::{ModelConfig, PerturbationLaw, MASTER_SEED};
use serde::Serialize;
use toml_edit::{Document, Item, Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PmfCheck,
    WindowDump,
    Coalescence,
    Renewal,
    Scaling,
    Eta,
    Hyperuniformity,
    Connectivity,
    DualCheck,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::PmfCheck,
        Kind::WindowDump,
        Kind::Coalescence,
        Kind::Renewal,
        Kind::Scaling,
        Kind::Eta,
        Kind::Hyperuniformity,
        Kind::Connectivity,
        Kind::DualCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::PmfCheck => "pmf-check",
            Kind::WindowDump => "window-dump",
            Kind::Coalescence => "coalescence",
            Kind::Renewal => "renewal",
            Kind::Scaling => "scaling",
            Kind::Eta => "eta",
            Kind::Hyperuniformity => "hyperuniformity",
            Kind::Connectivity => "connectivity",
            Kind::DualCheck => "dual-check",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfParams {
    pub samples: u64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowParams {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescenceParams {
    pub separations: Vec<i64>,
    pub horizon: u64,
    pub replicas: u64,
    pub grid_lo: u64,
    pub grid_hi: u64,
    pub per_decade: u64,
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub bootstrap: u64,
    pub slope_min: f64,
    pub slope_max: f64,
    pub min_r2: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalParams {
    pub replicas: u64,
    pub per_replica: u64,
    /// Lookahead `l` of the In event.
    pub horizon: u64,
    pub max_steps: u64,
    pub heights: bool,
    /// Trials per lookahead when reporting In frequencies at `horizon / 2`,
    /// `horizon` and `2 horizon`; zero skips the report.
    pub horizon_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingParams {
    pub n: f64,
    pub t: f64,
    pub replicas: u64,
    /// Fixed `sigma`, `gamma`; zero means estimate them from a renewal run.
    pub sigma: f64,
    pub gamma: f64,
    /// Wall-clock cap on the replicas in seconds; zero means none.
    pub budget_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaParams {
    pub t0: f64,
    pub t: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperuniformityParams {
    pub sides: Vec<i64>,
    pub replicas: u64,
    pub alpha_max: f64,
    pub control_min: f64,
    pub control_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityParams {
    pub width: i64,
    pub paths: u64,
    pub heights: Vec<i64>,
    pub replicas: u64,
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualParams {
    pub windows: u64,
    pub width: i64,
    pub height: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub out: String,
    pub model: ModelConfig,
    pub pmf: PmfParams,
    pub window: WindowParams,
    pub coalescence: CoalescenceParams,
    pub renewal: RenewalParams,
    pub scaling: ScalingParams,
    pub eta: EtaParams,
    pub hyperuniformity: HyperuniformityParams,
    pub connectivity: ConnectivityParams,
    pub dual: DualParams,
}

impl ExperimentSpec {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            out: "out".into(),
            model: ModelConfig::standard(MASTER_SEED),
            pmf: PmfParams {
                samples: 1_000_000,
                threshold: 0.01,
            },
            window: WindowParams {
                x_lo: 0,
                x_hi: 63,
                y_lo: 0,
                y_hi: 63,
                epsilon: 1e-12,
            },
            coalescence: CoalescenceParams {
                separations: vec![1, 2],
                horizon: 100_000,
                replicas: 20_000,
                grid_lo: 100,
                grid_hi: 10_000,
                per_decade: 10,
                fit_lo: 100.0,
                fit_hi: 10_000.0,
                bootstrap: 200,
                slope_min: -0.6,
                slope_max: -0.4,
                min_r2: 0.98,
                ratio_min: 1.6,
                ratio_max: 2.4,
            },
            renewal: RenewalParams {
                replicas: 50,
                per_replica: 200,
                horizon: 64,
                max_steps: 5_000_000,
                heights: true,
                horizon_trials: 0,
            },
            scaling: ScalingParams {
                n: 1e4,
                t: 1.0,
                replicas: 2000,
                sigma: 0.0,
                gamma: 0.0,
                budget_secs: 0,
            },
            eta: EtaParams {
                t0: 0.0,
                t: 1.0,
                a: vec![-0.5, -0.25],
                b: vec![0.5, 0.25],
                replicas: 200,
            },
            hyperuniformity: HyperuniformityParams {
                sides: vec![16, 32, 64, 128, 256, 512],
                replicas: 200,
                alpha_max: 1.3,
                control_min: 1.8,
                control_max: 2.2,
            },
            connectivity: ConnectivityParams {
                width: 50,
                paths: 10,
                heights: vec![1_000, 10_000, 100_000],
                replicas: 200,
                min_fraction: 0.95,
            },
            dual: DualParams {
                windows: 1000,
                width: 40,
                height: 25,
            },
        }
    }
}

/// One problem found while reading a spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// 1-based line, 0 when the problem has no location.
    pub line: usize,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: `{}`: {}", self.line, self.key, self.reason)
    }
}

struct Reader<'a> {
    text: &'a str,
    diags: Vec<Diagnostic>,
}

impl Reader<'_> {
    fn line_of(&self, span: Option<Range<usize>>) -> usize {
        span.map(|s| self.text[..s.start.min(self.text.len())].matches('\n').count() + 1)
            .unwrap_or(0)
    }

    fn push(&mut self, span: Option<Range<usize>>, key: &str, reason: impl Into<String>) {
        let line = self.line_of(span);
        self.diags.push(Diagnostic {
            line,
            key: key.to_string(),
            reason: reason.into(),
        });
    }
}

/// A typed slot in the schema.
enum Slot<'s> {
    Int(&'s mut i64, i64, i64),
    Count(&'s mut u64, u64, u64),
    Float(&'s mut f64, f64, f64),
    Flag(&'s mut bool),
    Text(&'s mut String),
    Ints(&'s mut Vec<i64>, i64, i64),
    Floats(&'s mut Vec<f64>),
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn fill(slot: Slot<'_>, v: &Value) -> Result<(), String> {
    match slot {
        Slot::Int(dst, lo, hi) => {
            let i = v
                .as_integer()
                .ok_or_else(|| format!("expected an integer, found {}", v.type_name()))?;
            if i < lo || i > hi {
                return Err(format!("{i} is outside [{lo}, {hi}]"));
            }
            *dst = i;
        }
        Slot::Count(dst, lo, hi) => {
            let i = v
                .as_integer()
                .ok_or_else(|| format!("expected an integer, found {}", v.type_name()))?;
            if i < 0 || (i as u64) < lo || (i as u64) > hi {
                return Err(format!("{i} is outside [{lo}, {hi}]"));
            }
            *dst = i as u64;
        }
        Slot::Float(dst, lo, hi) => {
            let x = as_f64(v).ok_or_else(|| format!("expected a number, found {}", v.type_name()))?;
            if !(x >= lo && x <= hi) {
                let open = if lo == f64::MIN_POSITIVE {
                    "(0".to_string()
                } else {
                    format!("[{lo}")
                };
                return Err(format!("{x} is outside {open}, {hi}]"));
            }
            *dst = x;
        }
        Slot::Flag(dst) => {
            *dst = v
                .as_bool()
                .ok_or_else(|| format!("expected true or false, found {}", v.type_name()))?;
        }
        Slot::Text(dst) => {
            *dst = v
                .as_str()
                .ok_or_else(|| format!("expected a string, found {}", v.type_name()))?
                .to_string();
        }
        Slot::Ints(dst, lo, hi) => {
            let arr = v
                .as_array()
                .ok_or_else(|| format!("expected a list, found {}", v.type_name()))?;
            let mut out = Vec::with_capacity(arr.len());
            for e in arr.iter() {
                let i = e
                    .as_integer()
                    .ok_or_else(|| format!("list entries must be integers, found {}", e.type_name()))?;
                if i < lo || i > hi {
                    return Err(format!("entry {i} is outside [{lo}, {hi}]"));
                }
                out.push(i);
            }
            if out.is_empty() {
                return Err("list is empty".into());
            }
            *dst = out;
        }
        Slot::Floats(dst) => {
            let arr = v
                .as_array()
                .ok_or_else(|| format!("expected a list, found {}", v.type_name()))?;
            let out: Option<Vec<f64>> = arr.iter().map(as_f64).collect();
            let out = out.ok_or("list entries must be numbers")?;
            if out.is_empty() {
                return Err("list is empty".into());
            }
            *dst = out;
        }
    }
    Ok(())
}

const BIG: u64 = 1 << 40;

/// Schema lookup: the slot for `key` in `section`.
fn slot<'s>(spec: &'s mut ExperimentSpec, law: &'s mut LawFields, section: &str, key: &str) -> Option<Slot<'s>> {
    let s = match (section, key) {
        ("model", "seed") => Slot::Count(&mut spec.model.seed, 0, u64::MAX >> 1),
        ("model", "p") => Slot::Float(&mut spec.model.p, 0.0, 1.0),
        ("model", "law") => Slot::Text(&mut law.family),
        ("model", "theta_x") => Slot::Float(&mut law.theta_x, f64::MIN_POSITIVE, 1.0),
        ("model", "theta_y") => Slot::Float(&mut law.theta_y, f64::MIN_POSITIVE, 1.0),
        ("model", "sigma_x") => Slot::Float(&mut law.sigma_x, f64::MIN_POSITIVE, 1e6),
        ("model", "sigma_y") => Slot::Float(&mut law.sigma_y, f64::MIN_POSITIVE, 1e6),
        ("pmf-check", "samples") => Slot::Count(&mut spec.pmf.samples, 10_000, BIG),
        ("pmf-check", "threshold") => Slot::Float(&mut spec.pmf.threshold, 0.0, 1.0),
        ("window-dump", "x_lo") => Slot::Int(&mut spec.window.x_lo, -(1 << 40), 1 << 40),
        ("window-dump", "x_hi") => Slot::Int(&mut spec.window.x_hi, -(1 << 40), 1 << 40),
        ("window-dump", "y_lo") => Slot::Int(&mut spec.window.y_lo, -(1 << 40), 1 << 40),
        ("window-dump", "y_hi") => Slot::Int(&mut spec.window.y_hi, -(1 << 40), 1 << 40),
        ("window-dump", "epsilon") => Slot::Float(&mut spec.window.epsilon, 1e-300, 1.0),
        ("coalescence", "separations") => Slot::Ints(&mut spec.coalescence.separations, 1, 1 << 20),
        ("coalescence", "horizon") => Slot::Count(&mut spec.coalescence.horizon, 1, BIG),
        ("coalescence", "replicas") => Slot::Count(&mut spec.coalescence.replicas, 1, BIG),
        ("coalescence", "grid_lo") => Slot::Count(&mut spec.coalescence.grid_lo, 1, BIG),
        ("coalescence", "grid_hi") => Slot::Count(&mut spec.coalescence.grid_hi, 1, BIG),
        ("coalescence", "per_decade") => Slot::Count(&mut spec.coalescence.per_decade, 1, 1000),
        ("coalescence", "fit_lo") => Slot::Float(&mut spec.coalescence.fit_lo, 0.0, 1e18),
        ("coalescence", "fit_hi") => Slot::Float(&mut spec.coalescence.fit_hi, 0.0, 1e18),
        ("coalescence", "bootstrap") => Slot::Count(&mut spec.coalescence.bootstrap, 0, 1_000_000),
        ("coalescence", "slope_min") => Slot::Float(&mut spec.coalescence.slope_min, -10.0, 10.0),
        ("coalescence", "slope_max") => Slot::Float(&mut spec.coalescence.slope_max, -10.0, 10.0),
        ("coalescence", "min_r2") => Slot::Float(&mut spec.coalescence.min_r2, 0.0, 1.0),
        ("coalescence", "ratio_min") => Slot::Float(&mut spec.coalescence.ratio_min, 0.0, 1e6),
        ("coalescence", "ratio_max") => Slot::Float(&mut spec.coalescence.ratio_max, 0.0, 1e6),
        ("renewal", "replicas") => Slot::Count(&mut spec.renewal.replicas, 1, BIG),
        ("renewal", "per_replica") => Slot::Count(&mut spec.renewal.per_replica, 1, BIG),
        ("renewal", "horizon") => Slot::Count(&mut spec.renewal.horizon, 1, 1 << 16),
        ("renewal", "max_steps") => Slot::Count(&mut spec.renewal.max_steps, 1, BIG),
        ("renewal", "heights") => Slot::Flag(&mut spec.renewal.heights),
        ("renewal", "horizon_trials") => Slot::Count(&mut spec.renewal.horizon_trials, 0, BIG),
        ("scaling", "n") => Slot::Float(&mut spec.scaling.n, 1e3, 1e12),
        ("scaling", "t") => Slot::Float(&mut spec.scaling.t, 1e-9, 1e9),
        ("scaling", "replicas") => Slot::Count(&mut spec.scaling.replicas, 1, BIG),
        ("scaling", "sigma") => Slot::Float(&mut spec.scaling.sigma, 0.0, 1e12),
        ("scaling", "gamma") => Slot::Float(&mut spec.scaling.gamma, 0.0, 1e12),
        ("scaling", "budget_secs") => Slot::Count(&mut spec.scaling.budget_secs, 0, BIG),
        ("eta", "t0") => Slot::Float(&mut spec.eta.t0, 0.0, 1e9),
        ("eta", "t") => Slot::Float(&mut spec.eta.t, 1e-9, 1e9),
        ("eta", "a") => Slot::Floats(&mut spec.eta.a),
        ("eta", "b") => Slot::Floats(&mut spec.eta.b),
        ("eta", "replicas") => Slot::Count(&mut spec.eta.replicas, 1, BIG),
        ("hyperuniformity", "sides") => Slot::Ints(&mut spec.hyperuniformity.sides, 4, 1 << 20),
        ("hyperuniformity", "replicas") => Slot::Count(&mut spec.hyperuniformity.replicas, 30, BIG),
        ("hyperuniformity", "alpha_max") => Slot::Float(&mut spec.hyperuniformity.alpha_max, 0.0, 10.0),
        ("hyperuniformity", "control_min") => Slot::Float(&mut spec.hyperuniformity.control_min, 0.0, 10.0),
        ("hyperuniformity", "control_max") => Slot::Float(&mut spec.hyperuniformity.control_max, 0.0, 10.0),
        ("connectivity", "width") => Slot::Int(&mut spec.connectivity.width, 1, 1 << 30),
        ("connectivity", "paths") => Slot::Count(&mut spec.connectivity.paths, 1, 1 << 16),
        ("connectivity", "heights") => Slot::Ints(&mut spec.connectivity.heights, 0, 1 << 40),
        ("connectivity", "replicas") => Slot::Count(&mut spec.connectivity.replicas, 1, BIG),
        ("connectivity", "min_fraction") => Slot::Float(&mut spec.connectivity.min_fraction, 0.0, 1.0),
        ("dual-check", "windows") => Slot::Count(&mut spec.dual.windows, 1, BIG),
        ("dual-check", "width") => Slot::Int(&mut spec.dual.width, 2, 1 << 16),
        ("dual-check", "height") => Slot::Int(&mut spec.dual.height, 2, 1 << 16),
        _ => return None,
    };
    Some(s)
}

const SECTIONS: [&str; 10] = [
    "model",
    "pmf-check",
    "window-dump",
    "coalescence",
    "renewal",
    "scaling",
    "eta",
    "hyperuniformity",
    "connectivity",
    "dual-check",
];

/// The `[model]` keys describing the perturbation law, gathered before the
/// family is known.
struct LawFields {
    family: String,
    theta_x: f64,
    theta_y: f64,
    sigma_x: f64,
    sigma_y: f64,
}

impl LawFields {
    fn of(law: &PerturbationLaw) -> Self {
        let (family, theta, sigma) = match *law {
            PerturbationLaw::TwoSidedGeometric { theta_x, theta_y } => ("geometric", (theta_x, theta_y), (1.0, 1.0)),
            PerturbationLaw::GaussianFloor { sigma_x, sigma_y } => ("gaussian-floor", (0.5, 0.5), (sigma_x, sigma_y)),
        };
        Self {
            family: family.into(),
            theta_x: theta.0,
            theta_y: theta.1,
            sigma_x: sigma.0,
            sigma_y: sigma.1,
        }
    }

    fn law(&self) -> Option<PerturbationLaw> {
        match self.family.as_str() {
            "geometric" => Some(PerturbationLaw::geometric(self.theta_x, self.theta_y)),
            "point-mass" => Some(PerturbationLaw::point_mass()),
            "gaussian-floor" => Some(PerturbationLaw::GaussianFloor {
                sigma_x: self.sigma_x,
                sigma_y: self.sigma_y,
            }),
            _ => None,
        }
    }

    /// Parameters that only make sense for another family.
    fn foreign_keys(&self) -> &'static [&'static str] {
        match self.family.as_str() {
            "geometric" => &["sigma_x", "sigma_y"],
            "point-mass" => &["theta_x", "theta_y", "sigma_x", "sigma_y"],
            "gaussian-floor" => &["theta_x", "theta_y"],
            _ => &[],
        }
    }
}

/// Parses and validates a spec. `kind` supplies the experiment when the text
/// has no `kind` key; when both are present they must agree.
pub fn parse_spec(text: &str, kind: Option<Kind>) -> Result<ExperimentSpec, Vec<Diagnostic>> {
    let mut r = Reader {
        text,
        diags: Vec::new(),
    };
    let doc = match Document::parse(text) {
        Ok(d) => d,
        Err(e) => {
            let line = r.line_of(e.span());
            return Err(vec![Diagnostic {
                line,
                key: String::new(),
                reason: e.message().trim().to_string(),
            }]);
        }
    };
    let root = doc.as_table();
    let text_kind = root.get_key_value("kind").map(|(k, item)| {
        let parsed = item
            .as_str()
            .ok_or("expected a string".to_string())
            .and_then(Kind::from_str);
        (k.span(), parsed)
    });
    let kind = match (text_kind, kind) {
        (Some((span, Err(e))), _) => {
            r.push(span, "kind", e);
            Kind::PmfCheck
        }
        (Some((span, Ok(t))), Some(k)) if t != k => {
            r.push(span, "kind", format!("`{t}` conflicts with the requested `{k}`"));
            k
        }
        (Some((_, Ok(t))), _) => t,
        (None, Some(k)) => k,
        (None, None) => {
            r.push(None, "kind", "missing; set `kind` or pass it on the command line");
            Kind::PmfCheck
        }
    };
    let mut spec = ExperimentSpec::new(kind);
    let mut law = LawFields::of(&spec.model.law);
    for (key, item) in root.iter() {
        let span = root.get_key_value(key).and_then(|(k, _)| k.span());
        match key {
            "kind" => {}
            "out" => match item.as_str() {
                Some(s) => spec.out = s.to_string(),
                None => r.push(span, key, "expected a string"),
            },
            _ => match item.as_table() {
                Some(table) if SECTIONS.contains(&key) => read_section(&mut r, &mut spec, &mut law, key, table),
                Some(_) => r.push(span.or(item.span()), key, format!("unknown section `[{key}]`")),
                None => r.push(span, key, "unknown key"),
            },
        }
    }
    let model = root.get("model").and_then(Item::as_table);
    let model_span = |key: &str| model.and_then(|t| t.get_key_value(key)).and_then(|(k, _)| k.span());
    match law.law() {
        Some(l) => spec.model.law = l,
        None => r.push(
            model_span("law"),
            "law",
            format!(
                "unknown law `{}`; expected geometric, point-mass or gaussian-floor",
                law.family
            ),
        ),
    }
    for &key in law.foreign_keys() {
        if model.is_some_and(|t| t.contains_key(key)) {
            r.push(
                model_span(key),
                key,
                format!("not a parameter of the {} law", law.family),
            );
        }
    }
    if let Err(e) = spec.model.validate() {
        r.push(None, "model", e.to_string());
    }
    cross_checks(&mut r, &spec, root);
    if r.diags.is_empty() {
        Ok(spec)
    } else {
        Err(r.diags)
    }
}

fn read_section(r: &mut Reader<'_>, spec: &mut ExperimentSpec, law: &mut LawFields, name: &str, table: &Table) {
    for (key, item) in table.iter() {
        let span = table.get_key_value(key).and_then(|(k, _)| k.span());
        let Some(slot) = slot(spec, law, name, key) else {
            r.push(span, key, format!("unknown key in [{name}]"));
            continue;
        };
        match item.as_value() {
            Some(v) => {
                if let Err(reason) = fill(slot, v) {
                    r.push(span, key, reason);
                }
            }
            None => r.push(span, key, "expected a value"),
        }
    }
}

/// Constraints that involve more than one key.
fn cross_checks(r: &mut Reader<'_>, spec: &ExperimentSpec, root: &Table) {
    let at = |section: &str, key: &str| {
        root.get(section)
            .and_then(Item::as_table)
            .and_then(|t| t.get_key_value(key))
            .and_then(|(k, _)| k.span())
    };
    let w = &spec.window;
    if w.x_hi < w.x_lo || w.y_hi <= w.y_lo {
        r.push(
            at("window-dump", "x_hi").or(at("window-dump", "y_hi")),
            "x_hi",
            "window needs x_hi >= x_lo and y_hi > y_lo",
        );
    }
    let c = &spec.coalescence;
    if c.grid_hi <= c.grid_lo {
        r.push(at("coalescence", "grid_hi"), "grid_hi", "must exceed grid_lo");
    }
    if c.fit_hi <= c.fit_lo {
        r.push(at("coalescence", "fit_hi"), "fit_hi", "must exceed fit_lo");
    }
    if spec.eta.a.len() != spec.eta.b.len() {
        r.push(at("eta", "b"), "b", "`a` and `b` must have the same length");
    } else if spec.eta.a.iter().zip(&spec.eta.b).any(|(a, b)| b <= a) {
        r.push(at("eta", "b"), "b", "every interval needs a < b");
    }
    if spec.scaling.sigma > 0.0 && spec.scaling.gamma <= 0.0 || spec.scaling.sigma <= 0.0 && spec.scaling.gamma > 0.0 {
        r.push(
            at("scaling", "gamma").or(at("scaling", "sigma")),
            "gamma",
            "set both sigma and gamma, or neither",
        );
    }
}

fn list<T: fmt::Display>(xs: &[T]) -> String {
    let parts: Vec<String> = xs.iter().map(T::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// Floats keep a decimal point so that they read back as floats.
fn float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E', 'n', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn floats(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| float(x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Canonical text of a spec; [`parse_spec`] reads it back unchanged.
pub fn serialize_spec(spec: &ExperimentSpec) -> String {
    let mut o = String::new();
    let law = LawFields::of(&spec.model.law);
    let _ = writeln!(o, "kind = \"{}\"", spec.kind);
    let _ = writeln!(o, "out = {}", serde_json::Value::from(spec.out.as_str()));
    let _ = writeln!(o, "\n[model]");
    let _ = writeln!(o, "seed = {}", spec.model.seed);
    let _ = writeln!(o, "p = {}", float(spec.model.p));
    let _ = writeln!(o, "law = \"{}\"", law.family);
    if let PerturbationLaw::GaussianFloor { sigma_x, sigma_y } = spec.model.law {
        let _ = writeln!(o, "sigma_x = {}\nsigma_y = {}", float(sigma_x), float(sigma_y));
    } else {
        let _ = writeln!(o, "theta_x = {}\ntheta_y = {}", float(law.theta_x), float(law.theta_y));
    }
    let p = &spec.pmf;
    let _ = write!(
        o,
        "\n[pmf-check]\nsamples = {}\nthreshold = {}\n",
        p.samples,
        float(p.threshold)
    );
    let w = &spec.window;
    let _ = write!(
        o,
        "\n[window-dump]\nx_lo = {}\nx_hi = {}\ny_lo = {}\ny_hi = {}\nepsilon = {}\n",
        w.x_lo,
        w.x_hi,
        w.y_lo,
        w.y_hi,
        float(w.epsilon)
    );
    let c = &spec.coalescence;
    let _ = write!(
        o,
        "\n[coalescence]\nseparations = {}\nhorizon = {}\nreplicas = {}\ngrid_lo = {}\ngrid_hi = {}\nper_decade = {}\n\
         fit_lo = {}\nfit_hi = {}\nbootstrap = {}\nslope_min = {}\nslope_max = {}\nmin_r2 = {}\nratio_min = {}\nratio_max = {}\n",
        list(&c.separations),
        c.horizon,
        c.replicas,
        c.grid_lo,
        c.grid_hi,
        c.per_decade,
        float(c.fit_lo),
        float(c.fit_hi),
        c.bootstrap,
        float(c.slope_min),
        float(c.slope_max),
        float(c.min_r2),
        float(c.ratio_min),
        float(c.ratio_max)
    );
    let n = &spec.renewal;
    let _ = write!(
        o,
        "\n[renewal]\nreplicas = {}\nper_replica = {}\nhorizon = {}\nmax_steps = {}\nheights = {}\nhorizon_trials = {}\n",
        n.replicas, n.per_replica, n.horizon, n.max_steps, n.heights, n.horizon_trials
    );
    let s = &spec.scaling;
    let _ = write!(
        o,
        "\n[scaling]\nn = {}\nt = {}\nreplicas = {}\nsigma = {}\ngamma = {}\nbudget_secs = {}\n",
        float(s.n),
        float(s.t),
        s.replicas,
        float(s.sigma),
        float(s.gamma),
        s.budget_secs
    );
    let e = &spec.eta;
    let _ = write!(
        o,
        "\n[eta]\nt0 = {}\nt = {}\na = {}\nb = {}\nreplicas = {}\n",
        float(e.t0),
        float(e.t),
        floats(&e.a),
        floats(&e.b),
        e.replicas
    );
    let h = &spec.hyperuniformity;
    let _ = write!(
        o,
        "\n[hyperuniformity]\nsides = {}\nreplicas = {}\nalpha_max = {}\ncontrol_min = {}\ncontrol_max = {}\n",
        list(&h.sides),
        h.replicas,
        float(h.alpha_max),
        float(h.control_min),
        float(h.control_max)
    );
    let k = &spec.connectivity;
    let _ = write!(
        o,
        "\n[connectivity]\nwidth = {}\npaths = {}\nheights = {}\nreplicas = {}\nmin_fraction = {}\n",
        k.width,
        k.paths,
        list(&k.heights),
        k.replicas,
        float(k.min_fraction)
    );
    let d = &spec.dual;
    let _ = write!(
        o,
        "\n[dual-check]\nwindows = {}\nwidth = {}\nheight = {}\n",
        d.windows, d.width, d.height
    );
    o
}
