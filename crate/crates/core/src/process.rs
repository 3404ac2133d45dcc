//! Exact materialization of the perturbed open vertex set on finite windows.
//!
//! A window only ever sees lattice sites inside a scan rectangle. Scan margins
//! are sized from the perturbation tails so that the union-bound probability
//! of an unscanned site landing in the window stays below the window's budget
//! `epsilon`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{derive_seed, FieldSampler, LatticeSite, LawTables, ModelConfig, PerturbationLaw};

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Sites scanned by one `materialize_window` call may not exceed this.
pub const DEFAULT_SCAN_CAP: u128 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSpec {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
    pub epsilon: f64,
}

impl WindowSpec {
    pub fn new(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64) -> Result<Self> {
        Self::with_epsilon(x_lo, x_hi, y_lo, y_hi, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64, epsilon: f64) -> Result<Self> {
        if x_lo >= x_hi || y_lo >= y_hi {
            return Err(Error::InvalidParameter(format!(
                "empty window [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            epsilon,
        })
    }

    pub fn width(&self) -> i64 {
        self.x_hi - self.x_lo + 1
    }

    pub fn height(&self) -> i64 {
        self.y_hi - self.y_lo + 1
    }

    pub fn contains(&self, site: LatticeSite) -> bool {
        (self.x_lo..=self.x_hi).contains(&site.x) && (self.y_lo..=self.y_hi).contains(&site.y)
    }
}

/// Scan depths: horizontal margin beyond each side, vertical depth below the bottom row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Margins {
    pub dx: i64,
    pub dy: i64,
}

/// `sum_{l >= d} tail(l)`, summed until the terms are negligible.
fn tail_sum(tail: impl Fn(u64) -> f64, d: u64) -> f64 {
    let mut total = 0.0;
    let mut l = d;
    loop {
        let t = tail(l);
        total += t;
        if t < 1e-30 || l > d + 100_000 {
            return total;
        }
        l += 1;
    }
}

/// Smallest scan depths keeping the union-bound miss probability of the
/// window under `spec.epsilon`, half the budget for each direction.
///
/// Vertical: a site `l` rows below the bottom row lands in the window only if
/// `dy >= l`, and summing over columns contributes `width` landings per unit
/// probability, so the miss is `width * sum_{l > D_y} P(Y >= l)`.
/// Horizontal: a site `d` columns outside needs `|dx| >= d` towards the window,
/// over `height + D_y` scanned rows.
pub fn margin_depths(law: &PerturbationLaw, spec: &WindowSpec) -> Result<Margins> {
    depths_for(law, spec.width(), spec.height(), spec.epsilon)
}

/// Margins for a `width x height` block of rows under budget `epsilon`.
pub fn depths_for(law: &PerturbationLaw, width: i64, height: i64, epsilon: f64) -> Result<Margins> {
    law.validate()?;
    if epsilon >= 1.0 {
        return Ok(Margins { dx: 0, dy: 0 });
    }
    let half = epsilon / 2.0;
    let mut dy = 0u64;
    while width as f64 * tail_sum(|l| law.y_tail(l), dy + 1) > half {
        dy += 1;
        if dy > 1_000_000 {
            return Err(Error::InvalidParameter("vertical tail too heavy for margins".into()));
        }
    }
    let rows = (height as u64 + dy) as f64;
    let mut dx = 0u64;
    while rows * tail_sum(|d| law.x_tail(d), dx + 1) > half {
        dx += 1;
        if dx > 1_000_000 {
            return Err(Error::InvalidParameter("horizontal tail too heavy for margins".into()));
        }
    }
    Ok(Margins {
        dx: dx as i64,
        dy: dy as i64,
    })
}

/// Rectangle of source sites that were actually examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScanRect {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
}

/// Probability bound that some open site outside `scan`, with source row in
/// `[src_lo, src_hi]`, lands strictly above `apex` inside its parabolic
/// envelope `{|x - apex.x| <= (y - apex.y)^2}`.
///
/// Union bound over landing heights `h`: unscanned source rows contribute
/// `p (2h^2 + 1) P(Y = y - b)` each; scanned rows contribute the horizontal
/// tail mass needed to reach the envelope from beyond the scanned columns.
pub fn envelope_leak(tables: &LawTables, p: f64, apex: LatticeSite, scan: &ScanRect, src_lo: i64, src_hi: i64) -> f64 {
    let law = tables.law();
    let support = tables.dx_support();
    let y_tail = |k: i64| match k {
        k if k <= 0 => 1.0,
        k if k > 1_000_000 => 0.0,
        k => law.y_tail(k as u64),
    };
    // P(X >= m)
    let right_tail = |m: i64| -> f64 {
        if m <= 0 {
            1.0 - law.x_tail((-m + 1) as u64) / 2.0
        } else {
            law.x_tail(m as u64) / 2.0
        }
    };
    let mut total = 0.0;
    let mut h: i64 = 1;
    loop {
        let reach = h * h;
        let span = (2 * reach + 1) as f64;
        let y_land = apex.y.saturating_add(h);
        // Mass of dy values sending rows [b1, b2] to y_land.
        let rows_mass = |b1: i64, b2: i64| -> f64 {
            if b1 > b2 {
                0.0
            } else {
                y_tail(y_land.saturating_sub(b2)) - y_tail(y_land.saturating_sub(b1).saturating_add(1))
            }
        };
        let hi = src_hi.min(y_land);
        let outside = rows_mass(src_lo, hi.min(scan.y_lo - 1)) + rows_mass(src_lo.max(scan.y_hi + 1), hi);
        total += p * span * outside;
        let inside = rows_mass(src_lo.max(scan.y_lo), hi.min(scan.y_hi));
        if inside > 0.0 {
            let (l, r) = (apex.x - reach, apex.x + reach);
            let mut side = 0.0;
            // Sites a < scan.x_lo landing at z need dx >= z - x_lo + 1.
            for z in l..=r.min(scan.x_lo - 1 + support) {
                side += right_tail(z - scan.x_lo + 1);
            }
            // Sites a > scan.x_hi landing at z need dx <= z - x_hi - 1.
            for z in l.max(scan.x_hi + 1 - support)..=r {
                side += right_tail(scan.x_hi + 1 - z);
            }
            total += p * inside * side;
        }
        let rest = p * span * y_tail(y_land.saturating_sub(hi));
        if (y_land > src_hi && rest < 1e-30) || h > 100_000 {
            return total;
        }
        h += 1;
    }
}

/// Nearest point of a row to a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nearest {
    /// Horizontal distance to the nearest point.
    pub j: i64,
    /// `x - j` is a point.
    pub left: bool,
    /// `x + j` is a point.
    pub right: bool,
}

/// Query surface shared by finite windows and the lazy field.
///
/// `lane` identifies an exploration front (one per traced path); finite
/// windows ignore it.
pub trait Landscape {
    fn sampler(&self) -> &FieldSampler;

    fn config(&self) -> &ModelConfig {
        self.sampler().config()
    }

    /// Rademacher tie sign of the site `at`.
    fn tie_sign(&mut self, _lane: usize, at: LatticeSite) -> i8 {
        self.sampler().row_keys(at.y).tie_sign(at.x)
    }

    /// Nearest point of `V` on row `y` to column `x`.
    fn nearest(&mut self, lane: usize, y: i64, x: i64) -> Result<Nearest>;

    /// Largest `y' - apex.y` over points of `V` whose source row lies in
    /// `[src_lo, src_hi]` and which land strictly above `apex` inside its
    /// parabolic envelope; `None` when there is no such point.
    fn max_overshoot(&mut self, lane: usize, apex: LatticeSite, src_lo: i64, src_hi: i64) -> Result<Option<i64>>;

    /// Overshoot maxima over sources `[src_lo, src_hi]` and over the newer
    /// sources `(split, src_hi]`, in that order.
    fn max_overshoot_split(
        &mut self,
        lane: usize,
        apex: LatticeSite,
        src_lo: i64,
        split: i64,
        src_hi: i64,
    ) -> Result<(Option<i64>, Option<i64>)> {
        let all = self.max_overshoot(lane, apex, src_lo, src_hi)?;
        let newer = self.max_overshoot(lane, apex, src_lo.max(split.saturating_add(1)), src_hi)?;
        Ok((all, newer))
    }

    /// Hint that `lane` will not query rows below `y` again.
    fn release_below(&mut self, _lane: usize, _y: i64) {}
}

/// One row of `V` inside a window.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RowPoints {
    pub y: i64,
    /// Strictly increasing.
    pub xs: Vec<i64>,
    /// `special[i]`: the site `(xs[i], y)` is open with zero perturbation.
    pub special: Vec<bool>,
    /// Source sites that landed on each point.
    pub provenance: Vec<Vec<LatticeSite>>,
}

impl RowPoints {
    pub fn new(y: i64) -> Self {
        Self { y, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn contains(&self, x: i64) -> bool {
        self.xs.binary_search(&x).is_ok()
    }

    /// Adds `source` landing at column `x`, merging collisions.
    pub fn insert(&mut self, x: i64, source: LatticeSite) {
        let special = source.x == x && source.y == self.y;
        match self.xs.binary_search(&x) {
            Ok(i) => {
                self.special[i] |= special;
                self.provenance[i].push(source);
            }
            Err(i) => {
                self.xs.insert(i, x);
                self.special.insert(i, special);
                self.provenance.insert(i, vec![source]);
            }
        }
    }
}

/// A source site and where it landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landing {
    pub source: LatticeSite,
    pub point: LatticeSite,
}

/// `V` materialized inside a window.
#[derive(Debug, Clone)]
pub struct WindowRealization {
    pub spec: WindowSpec,
    pub margins: Margins,
    pub scan: ScanRect,
    pub rows: Vec<RowPoints>,
    /// Landings of scanned sources outside the window rectangle.
    pub exterior: Vec<Landing>,
    sampler: FieldSampler,
    /// False for hand-built fixtures, which are complete by construction.
    check_leaks: bool,
}

/// Scans `[x_lo - D_x, x_hi + D_x] x [y_lo - D_y, y_hi]` once and buckets each
/// open site's landing point by row.
pub fn materialize_window(cfg: &ModelConfig, spec: &WindowSpec) -> Result<WindowRealization> {
    materialize_window_capped(cfg, spec, DEFAULT_SCAN_CAP)
}

pub fn materialize_window_capped(cfg: &ModelConfig, spec: &WindowSpec, cap: u128) -> Result<WindowRealization> {
    let margins = margin_depths(&cfg.law, spec)?;
    materialize_with_margins(cfg, spec, margins, cap)
}

pub fn materialize_with_margins(
    cfg: &ModelConfig,
    spec: &WindowSpec,
    margins: Margins,
    cap: u128,
) -> Result<WindowRealization> {
    let sampler = FieldSampler::new(*cfg)?;
    let scan = ScanRect {
        x_lo: spec.x_lo - margins.dx,
        x_hi: spec.x_hi + margins.dx,
        y_lo: spec.y_lo - margins.dy,
        y_hi: spec.y_hi,
    };
    let sites = (scan.x_hi - scan.x_lo + 1) as u128 * (scan.y_hi - scan.y_lo + 1) as u128;
    if sites > cap {
        return Err(Error::ResourceLimit { sites, cap });
    }
    let mut rows: Vec<RowPoints> = (spec.y_lo..=spec.y_hi).map(RowPoints::new).collect();
    let mut exterior = Vec::new();
    for b in scan.y_lo..=scan.y_hi {
        let keys = sampler.row_keys(b);
        for a in scan.x_lo..=scan.x_hi {
            if !sampler.is_open(&keys, a) {
                continue;
            }
            let point = LatticeSite::new(a + sampler.dx(&keys, a), b + sampler.dy(&keys, a));
            let source = LatticeSite::new(a, b);
            if spec.contains(point) {
                rows[(point.y - spec.y_lo) as usize].insert(point.x, source);
            } else {
                exterior.push(Landing { source, point });
            }
        }
    }
    Ok(WindowRealization {
        spec: *spec,
        margins,
        scan,
        rows,
        exterior,
        sampler,
        check_leaks: true,
    })
}

impl WindowRealization {
    /// A fixture with the given landings and nothing else. Treated as complete:
    /// boundary checks only guard the window rectangle.
    pub fn from_landings(cfg: &ModelConfig, spec: WindowSpec, landings: &[Landing]) -> Result<Self> {
        let mut rows: Vec<RowPoints> = (spec.y_lo..=spec.y_hi).map(RowPoints::new).collect();
        let mut exterior = Vec::new();
        for l in landings {
            if l.point.y < l.source.y {
                return Err(Error::InvalidParameter(format!(
                    "landing {} below its source {}",
                    l.point, l.source
                )));
            }
            if spec.contains(l.point) {
                rows[(l.point.y - spec.y_lo) as usize].insert(l.point.x, l.source);
            } else {
                exterior.push(*l);
            }
        }
        Ok(Self {
            spec,
            margins: Margins { dx: 0, dy: 0 },
            scan: ScanRect {
                x_lo: spec.x_lo,
                x_hi: spec.x_hi,
                y_lo: spec.y_lo,
                y_hi: spec.y_hi,
            },
            rows,
            exterior,
            sampler: FieldSampler::new(*cfg)?,
            check_leaks: false,
        })
    }

    pub fn row(&self, y: i64) -> Option<&RowPoints> {
        if y < self.spec.y_lo || y > self.spec.y_hi {
            None
        } else {
            self.rows.get((y - self.spec.y_lo) as usize)
        }
    }

    pub fn point_count(&self) -> usize {
        self.rows.iter().map(RowPoints::len).sum()
    }

    /// All landings with a known source: in-window provenance plus exterior.
    pub fn landings(&self) -> impl Iterator<Item = Landing> + '_ {
        let inside = self.rows.iter().flat_map(|row| {
            row.xs.iter().zip(&row.provenance).flat_map(move |(&x, srcs)| {
                srcs.iter().map(move |&source| Landing {
                    source,
                    point: LatticeSite::new(x, row.y),
                })
            })
        });
        inside.chain(self.exterior.iter().copied())
    }

    /// Text dump: one line per row, `y: x1[s] x2 ...` with `[s]` on special points.
    pub fn dump(&self) -> String {
        dump_rows(&self.rows)
    }
}

pub fn dump_rows(rows: &[RowPoints]) -> String {
    let mut out = String::new();
    for row in rows {
        write!(out, "{}:", row.y).unwrap();
        for (x, s) in row.xs.iter().zip(&row.special) {
            write!(out, " {x}{}", if *s { "[s]" } else { "" }).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`dump_rows`]. Provenance is not part of the format.
pub fn parse_rows(text: &str) -> Result<Vec<RowPoints>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| Error::Parse {
            line: line_no,
            reason: reason.to_string(),
        };
        let (head, rest) = line.split_once(':').ok_or_else(|| err("missing ':'"))?;
        let y: i64 = head.trim().parse().map_err(|_| err("bad row index"))?;
        let mut row = RowPoints::new(y);
        for tok in rest.split_whitespace() {
            let (num, special) = match tok.strip_suffix("[s]") {
                Some(n) => (n, true),
                None => (tok, false),
            };
            let x: i64 = num.parse().map_err(|_| err("bad column"))?;
            if row.xs.last().is_some_and(|&last| last >= x) {
                return Err(err("columns must be strictly increasing"));
            }
            row.xs.push(x);
            row.special.push(special);
            row.provenance.push(Vec::new());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `site` is open with zero perturbation.
pub fn is_special(cfg: &ModelConfig, site: LatticeSite) -> bool {
    crate::field::site_variates(cfg, site).is_special()
}

/// Nearest point of a sorted row to `x`, or `None` for an empty row.
pub fn nearest_in(xs: &[i64], x: i64) -> Option<Nearest> {
    let i = xs.partition_point(|&v| v < x);
    let right = xs.get(i).map(|&v| v - x);
    let left = if i > 0 { Some(x - xs[i - 1]) } else { None };
    let j = match (left, right) {
        (None, None) => return None,
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (Some(l), Some(r)) => l.min(r),
    };
    Some(Nearest {
        j,
        left: left == Some(j) || right == Some(0),
        right: right == Some(j),
    })
}

impl Landscape for WindowRealization {
    fn sampler(&self) -> &FieldSampler {
        &self.sampler
    }

    fn nearest(&mut self, _lane: usize, y: i64, x: i64) -> Result<Nearest> {
        let unsound = |reason: &str| Error::BoundaryUnsound {
            site: LatticeSite::new(x, y),
            reason: reason.to_string(),
        };
        let row = self.row(y).ok_or_else(|| unsound("row outside window"))?;
        let n = nearest_in(&row.xs, x).ok_or_else(|| unsound("empty row"))?;
        if x - n.j < self.spec.x_lo || x + n.j > self.spec.x_hi {
            return Err(unsound("nearest point may lie outside the window"));
        }
        Ok(n)
    }

    fn max_overshoot(&mut self, _lane: usize, apex: LatticeSite, src_lo: i64, src_hi: i64) -> Result<Option<i64>> {
        if src_lo > src_hi {
            return Ok(None);
        }
        if self.check_leaks {
            let leak = envelope_leak(self.sampler.tables(), self.config().p, apex, &self.scan, src_lo, src_hi);
            if leak > self.spec.epsilon {
                return Err(Error::BoundaryUnsound {
                    site: apex,
                    reason: format!("envelope leak bound {leak:.3e} exceeds budget"),
                });
            }
        }
        let mut best: Option<i64> = None;
        for l in self.landings() {
            if l.source.y < src_lo || l.source.y > src_hi || l.point.y <= apex.y {
                continue;
            }
            let h = l.point.y - apex.y;
            if (l.point.x - apex.x).abs() <= h * h {
                best = Some(best.map_or(h, |b| b.max(h)));
            }
        }
        Ok(best)
    }
}

/// Sample mean and variance of `|V ∩ box|` for one box side.
///
/// `V` merges collisions, so its count is the number of distinct landing
/// points. The count of source sites landing in the box (collisions counted
/// with multiplicity) is reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCountStats {
    pub side: i64,
    pub replicas: usize,
    pub mean: f64,
    pub variance: f64,
    pub counts: Vec<u64>,
    pub multiplicity_mean: f64,
    pub multiplicity_variance: f64,
    pub multiplicity_counts: Vec<u64>,
}

fn mean_var(xs: &[u64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Point counts of `side x side` boxes over independent replicas (one derived
/// seed per replica and side).
pub fn box_counts(cfg: &ModelConfig, sides: &[i64], replicas: usize) -> Result<Vec<BoxCountStats>> {
    use rayon::prelude::*;
    if replicas < 30 {
        return Err(Error::InsufficientSamples {
            needed: 30,
            got: replicas,
        });
    }
    sides
        .iter()
        .map(|&side| {
            if side < 4 {
                return Err(Error::InvalidParameter(format!("box side {side} must be at least 4")));
            }
            let spec = WindowSpec::new(0, side - 1, 0, side - 1)?;
            let margins = margin_depths(&cfg.law, &spec)?;
            let pairs: Vec<(u64, u64)> = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(cfg.seed ^ (side as u64).wrapping_mul(0x9E37_79B9), r);
                    count_box(&cfg.with_seed(seed), &spec, margins)
                })
                .collect::<Result<_>>()?;
            let (counts, multiplicity_counts): (Vec<u64>, Vec<u64>) = pairs.into_iter().unzip();
            let (mean, variance) = mean_var(&counts);
            let (multiplicity_mean, multiplicity_variance) = mean_var(&multiplicity_counts);
            Ok(BoxCountStats {
                side,
                replicas,
                mean,
                variance,
                counts,
                multiplicity_mean,
                multiplicity_variance,
                multiplicity_counts,
            })
        })
        .collect()
}

/// Distinct landing points inside the box, and landings counted with
/// multiplicity; cheaper than a full realization.
fn count_box(cfg: &ModelConfig, spec: &WindowSpec, margins: Margins) -> Result<(u64, u64)> {
    let sampler = FieldSampler::new(*cfg)?;
    let width = spec.width() as usize;
    let mut occupied = vec![false; width * spec.height() as usize];
    let mut distinct = 0u64;
    let mut landed = 0u64;
    for b in spec.y_lo - margins.dy..=spec.y_hi {
        let keys = sampler.row_keys(b);
        for a in spec.x_lo - margins.dx..=spec.x_hi + margins.dx {
            if !sampler.is_open(&keys, a) {
                continue;
            }
            let x = a + sampler.dx(&keys, a);
            let y = b + sampler.dy(&keys, a);
            if spec.contains(LatticeSite::new(x, y)) {
                landed += 1;
                let idx = (y - spec.y_lo) as usize * width + (x - spec.x_lo) as usize;
                if !occupied[idx] {
                    occupied[idx] = true;
                    distinct += 1;
                }
            }
        }
    }
    Ok((distinct, landed))
}
