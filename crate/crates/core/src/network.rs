//! The directed spanning network: single steps, path traces, joint traces with
//! coalescence, and the dual forest.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::explore::{LazyField, LazyOptions};
use crate::field::{derive_seed, LatticeSite, ModelConfig};
use crate::process::{materialize_window, nearest_in, Landscape, Nearest, RowPoints, WindowRealization, WindowSpec};

/// Nearest point of `row` to column `x`.
pub fn nearest_next(row: &RowPoints, x: i64) -> Result<Nearest> {
    nearest_in(&row.xs, x).ok_or_else(|| Error::BoundaryUnsound {
        site: LatticeSite::new(x, row.y),
        reason: "empty row".into(),
    })
}

/// `h(u)`: the nearest point of `V` on the next row, ties broken by the sign at `u`.
pub fn ph_step<L: Landscape + ?Sized>(land: &mut L, lane: usize, u: LatticeSite) -> Result<LatticeSite> {
    let n = land.nearest(lane, u.y + 1, u.x)?;
    let x = if n.j == 0 {
        u.x
    } else if n.left && n.right {
        if land.tie_sign(lane, u) > 0 {
            u.x + n.j
        } else {
            u.x - n.j
        }
    } else if n.right {
        u.x + n.j
    } else {
        u.x - n.j
    };
    Ok(LatticeSite::new(x, u.y + 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathTrace {
    pub start: LatticeSite,
    /// `vertices[k] = h^k(start)`.
    pub vertices: Vec<LatticeSite>,
    /// Soundness failed before the requested number of steps.
    pub truncated: bool,
}

impl PathTrace {
    pub fn at_level(&self, y: i64) -> Option<LatticeSite> {
        let k = y - self.start.y;
        if k < 0 {
            None
        } else {
            self.vertices.get(k as usize).copied()
        }
    }

    /// One `k x y` line per vertex.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.vertices.iter().enumerate() {
            writeln!(out, "{k} {} {}", v.x, v.y).unwrap();
        }
        out
    }
}

pub fn trace_path<L: Landscape + ?Sized>(land: &mut L, start: LatticeSite, n_steps: usize) -> PathTrace {
    trace_path_on(land, 0, start, n_steps)
}

pub fn trace_path_on<L: Landscape + ?Sized>(
    land: &mut L,
    lane: usize,
    start: LatticeSite,
    n_steps: usize,
) -> PathTrace {
    let mut vertices = Vec::with_capacity(n_steps + 1);
    vertices.push(start);
    let mut u = start;
    let mut truncated = false;
    for _ in 0..n_steps {
        match ph_step(land, lane, u) {
            Ok(v) => {
                vertices.push(v);
                u = v;
            }
            Err(_) => {
                truncated = true;
                break;
            }
        }
    }
    PathTrace {
        start,
        vertices,
        truncated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergeEvent {
    pub step: usize,
    pub survivor: usize,
    pub absorbed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JointTrace {
    pub traces: Vec<PathTrace>,
    pub merge_events: Vec<MergeEvent>,
}

impl JointTrace {
    /// Number of distinct positions after the last step.
    pub fn classes(&self) -> usize {
        let mut last: Vec<_> = self.traces.iter().filter_map(|t| t.vertices.last()).collect();
        last.sort();
        last.dedup();
        last.len()
    }
}

/// Classes of paths that currently share a position; `rep[i]` is the class
/// representative of path `i` (the lowest index in the class).
fn merge_step(positions: &[LatticeSite], rep: &mut [usize], step: usize, events: &mut Vec<MergeEvent>) {
    for i in 0..positions.len() {
        if rep[i] != i {
            continue;
        }
        for j in i + 1..positions.len() {
            if rep[j] == j && positions[j] == positions[i] {
                events.push(MergeEvent {
                    step,
                    survivor: i,
                    absorbed: j,
                });
                for r in rep.iter_mut() {
                    if *r == j {
                        *r = i;
                    }
                }
            }
        }
    }
}

/// Advances all paths in lockstep, one representative per coalesced class.
/// Path `i` explores through lane `i`.
pub fn trace_joint<L: Landscape + ?Sized>(land: &mut L, starts: &[LatticeSite], n_steps: usize) -> Result<JointTrace> {
    let Some(first) = starts.first() else {
        return Ok(JointTrace {
            traces: Vec::new(),
            merge_events: Vec::new(),
        });
    };
    if starts.iter().any(|s| s.y != first.y) {
        return Err(Error::InvalidParameter("joint starts must share a level".into()));
    }
    let k = starts.len();
    let mut rep: Vec<usize> = (0..k).collect();
    let mut events = Vec::new();
    let mut pos = starts.to_vec();
    let mut traces: Vec<PathTrace> = starts
        .iter()
        .map(|&s| PathTrace {
            start: s,
            vertices: vec![s],
            truncated: false,
        })
        .collect();
    merge_step(&pos, &mut rep, 0, &mut events);
    'steps: for step in 1..=n_steps {
        for i in 0..k {
            if rep[i] != i {
                continue;
            }
            match ph_step(land, i, pos[i]) {
                Ok(v) => pos[i] = v,
                Err(_) => {
                    for t in &mut traces {
                        t.truncated = true;
                    }
                    break 'steps;
                }
            }
        }
        for i in 0..k {
            pos[i] = pos[rep[i]];
            traces[i].vertices.push(pos[i]);
        }
        merge_step(&pos, &mut rep, step, &mut events);
    }
    Ok(JointTrace {
        traces,
        merge_events: events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "t")]
pub enum CoalescenceTime {
    Exact(u64),
    Censored(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoalescenceSample {
    pub separation: i64,
    pub time: CoalescenceTime,
}

/// First time the paths from `x1` and `x2` meet, on the unbounded lattice.
///
/// Exploration is lazy, so there is no window to outgrow; a nearest-point
/// query that cannot be certified ends the run as censored at the step reached.
pub fn coalescence_time(
    cfg: &ModelConfig,
    x1: LatticeSite,
    x2: LatticeSite,
    horizon: u64,
) -> Result<CoalescenceSample> {
    let mut field = LazyField::new(*cfg, LazyOptions::default())?;
    coalescence_time_in(&mut field, x1, x2, horizon)
}

pub fn coalescence_time_in<L: Landscape + ?Sized>(
    land: &mut L,
    x1: LatticeSite,
    x2: LatticeSite,
    horizon: u64,
) -> Result<CoalescenceSample> {
    if x1.y != x2.y {
        return Err(Error::InvalidParameter("starts must share a level".into()));
    }
    let separation = (x2.x - x1.x).abs();
    let (mut a, mut b) = (x1, x2);
    for t in 0..=horizon {
        if a == b {
            return Ok(CoalescenceSample {
                separation,
                time: CoalescenceTime::Exact(t),
            });
        }
        if t == horizon {
            break;
        }
        match (ph_step(land, 0, a), ph_step(land, 1, b)) {
            (Ok(na), Ok(nb)) => {
                a = na;
                b = nb;
            }
            _ => {
                return Ok(CoalescenceSample {
                    separation,
                    time: CoalescenceTime::Censored(t),
                })
            }
        }
    }
    Ok(CoalescenceSample {
        separation,
        time: CoalescenceTime::Censored(horizon),
    })
}

/// Coalescence samples for `replicas` independent seeds derived from `cfg.seed`.
pub fn coalescence_samples(
    cfg: &ModelConfig,
    separation: i64,
    horizon: u64,
    replicas: usize,
) -> Result<Vec<CoalescenceSample>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let c = cfg.with_seed(derive_seed(cfg.seed, r));
            coalescence_time(&c, LatticeSite::new(0, 0), LatticeSite::new(separation, 0), horizon)
        })
        .collect()
}

/// A vertex of the dual forest, in doubled horizontal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DualVertex {
    pub x2: i64,
    pub y: i64,
}

impl DualVertex {
    pub fn x(&self) -> f64 {
        self.x2 as f64 / 2.0
    }
}

/// Midpoints between consecutive points of the row.
pub fn dual_vertices(row: &RowPoints) -> Vec<DualVertex> {
    row.xs
        .windows(2)
        .map(|w| DualVertex {
            x2: w[0] + w[1],
            y: row.y,
        })
        .collect()
}

/// Successor columns of every point of a window, computed on demand.
#[derive(Debug)]
pub struct DualForest<'a> {
    window: &'a mut WindowRealization,
    /// `succ[y - y_lo][i]`: `h` of the i-th point on row y, `None` if unsound.
    succ: Vec<Option<Vec<Option<i64>>>>,
}

impl<'a> DualForest<'a> {
    pub fn new(window: &'a mut WindowRealization) -> Self {
        let rows = window.rows.len();
        Self {
            window,
            succ: vec![None; rows],
        }
    }

    fn successors(&mut self, y: i64) -> Result<&[Option<i64>]> {
        let spec = self.window.spec;
        if y < spec.y_lo || y >= spec.y_hi {
            return Err(Error::BoundaryUnsound {
                site: LatticeSite::new(0, y),
                reason: "no successor row in window".into(),
            });
        }
        let idx = (y - spec.y_lo) as usize;
        if self.succ[idx].is_none() {
            let xs = self.window.rows[idx].xs.clone();
            let s = xs
                .iter()
                .map(|&x| ph_step(self.window, 0, LatticeSite::new(x, y)).ok().map(|v| v.x))
                .collect();
            self.succ[idx] = Some(s);
        }
        Ok(self.succ[idx].as_deref().unwrap())
    }

    /// `ĥ(v)`: midpoint of the last point of row `v.y - 1` stepping strictly
    /// left of `v` and the first stepping strictly right of it.
    pub fn dual_step(&mut self, v: DualVertex) -> Result<DualVertex> {
        let y = v.y - 1;
        let unsound = |reason: &str| Error::BoundaryUnsound {
            site: LatticeSite::new(v.x2.div_euclid(2), v.y),
            reason: reason.to_string(),
        };
        let succ = self.successors(y)?.to_vec();
        let xs = &self.window.rows[(y - self.window.spec.y_lo) as usize].xs;
        // Successors are monotone in the source column: a^l is the point whose
        // successor is left of x2 / 2 while the next one's is not.
        let al = (0..succ.len().saturating_sub(1))
            .find(|&i| match (succ[i], succ[i + 1]) {
                (Some(a), Some(b)) => 2 * a < v.x2 && 2 * b >= v.x2,
                _ => false,
            })
            .ok_or_else(|| unsound("a^l not determined in window"))?;
        let mut ar = None;
        for (i, s) in succ.iter().enumerate().skip(al + 1) {
            match s {
                Some(h) if 2 * h > v.x2 => {
                    ar = Some(i);
                    break;
                }
                Some(_) => {}
                None => break,
            }
        }
        let ar = ar.ok_or_else(|| unsound("a^r not determined in window"))?;
        Ok(DualVertex { x2: xs[al] + xs[ar], y })
    }

    pub fn dual_trace(&mut self, start: DualVertex, n_steps: usize) -> DualTrace {
        let mut vertices = vec![start];
        let mut v = start;
        let mut truncated = false;
        for _ in 0..n_steps {
            match self.dual_step(v) {
                Ok(n) => {
                    vertices.push(n);
                    v = n;
                }
                Err(_) => {
                    truncated = true;
                    break;
                }
            }
        }
        DualTrace { vertices, truncated }
    }

    pub fn window(&mut self) -> &mut WindowRealization {
        self.window
    }
}

/// A backward dual path; `vertices[k].y = vertices[0].y - k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DualTrace {
    pub vertices: Vec<DualVertex>,
    pub truncated: bool,
}

impl DualTrace {
    pub fn at_level(&self, y: i64) -> Option<DualVertex> {
        let k = self.vertices.first()?.y - y;
        if k < 0 {
            None
        } else {
            self.vertices.get(k as usize).copied()
        }
    }

    /// One `k x2 y D` line per vertex.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.vertices.iter().enumerate() {
            writeln!(out, "{k} {} {} D", v.x2, v.y).unwrap();
        }
        out
    }
}

/// Order inversions between primal paths, primal paths that separate after
/// meeting, and sign changes between primal and dual paths over shared levels.
pub fn check_noncrossing(primal: &[PathTrace], dual: &[DualTrace]) -> usize {
    let mut violations = 0;
    for (i, a) in primal.iter().enumerate() {
        for b in &primal[i + 1..] {
            let lo = a.start.y.max(b.start.y);
            let hi = (a.start.y + a.vertices.len() as i64).min(b.start.y + b.vertices.len() as i64) - 1;
            let mut sign = 0i64;
            let mut met = false;
            for y in lo..=hi {
                let d = (a.at_level(y).unwrap().x - b.at_level(y).unwrap().x).signum();
                if met && d != 0 {
                    violations += 1;
                }
                if d == 0 {
                    met = true;
                } else if sign != 0 && d != sign {
                    violations += 1;
                }
                if d != 0 {
                    sign = d;
                }
            }
        }
    }
    for p in primal {
        for d in dual {
            let Some(top) = d.vertices.first().map(|v| v.y) else {
                continue;
            };
            let bottom = top - d.vertices.len() as i64 + 1;
            let lo = bottom.max(p.start.y);
            let hi = top.min(p.start.y + p.vertices.len() as i64 - 1);
            let mut sign = 0i64;
            for y in lo..=hi {
                let s = (2 * p.at_level(y).unwrap().x - d.at_level(y).unwrap().x2).signum();
                if s == 0 || (sign != 0 && s != sign) {
                    violations += 1;
                }
                if s != 0 {
                    sign = s;
                }
            }
        }
    }
    violations
}

/// Outcome of [`window_crossings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CrossingCheck {
    pub primal: usize,
    pub dual: usize,
    /// Primal paths truncated before the top row.
    pub truncated: usize,
    pub violations: usize,
}

/// Traces a primal path from every point of the bottom row and a dual path
/// from every dual vertex of the top row of one window, then counts
/// crossings with [`check_noncrossing`].
pub fn window_crossings(cfg: &ModelConfig, spec: &WindowSpec) -> Result<CrossingCheck> {
    let mut w = materialize_window(cfg, spec)?;
    let height = spec.height() as usize - 1;
    let starts: Vec<LatticeSite> = w
        .row(spec.y_lo)
        .map(|r| r.xs.iter().map(|&x| LatticeSite::new(x, spec.y_lo)).collect())
        .unwrap_or_default();
    let primal: Vec<PathTrace> = starts.iter().map(|&s| trace_path(&mut w, s, height)).collect();
    let top = w.row(spec.y_hi).cloned().unwrap_or_else(|| RowPoints::new(spec.y_hi));
    let mut forest = DualForest::new(&mut w);
    let dual: Vec<DualTrace> = dual_vertices(&top)
        .into_iter()
        .map(|v| forest.dual_trace(v, height))
        .collect();
    Ok(CrossingCheck {
        primal: primal.len(),
        dual: dual.len(),
        truncated: primal.iter().filter(|p| p.truncated).count(),
        violations: check_noncrossing(&primal, &dual),
    })
}

/// Fraction of replicas whose paths have all coalesced by each height.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectivityPoint {
    pub height: u64,
    pub coalesced: usize,
    pub replicas: usize,
    pub fraction: f64,
}

/// Step at which all paths from `starts` have merged, or `None` if they are
/// still apart (or exploration failed) after `horizon` steps.
pub fn full_coalescence_step(cfg: &ModelConfig, starts: &[LatticeSite], horizon: u64) -> Result<Option<u64>> {
    let mut field = LazyField::new(*cfg, LazyOptions::default())?;
    let mut pos = starts.to_vec();
    let mut alive: Vec<usize> = (0..pos.len()).collect();
    for t in 0..=horizon {
        let mut cur: Vec<(LatticeSite, usize)> = alive.iter().map(|&i| (pos[i], i)).collect();
        cur.sort();
        cur.dedup_by(|b, a| a.0 == b.0);
        alive = cur.iter().map(|&(_, i)| i).collect();
        let live: Vec<usize> = alive.clone();
        for i in 0..pos.len() {
            if !live.contains(&i) {
                field.reset_lane(i);
            }
        }
        if alive.len() <= 1 {
            return Ok(Some(t));
        }
        if t == horizon {
            break;
        }
        for &i in &alive {
            match ph_step(&mut field, i, pos[i]) {
                Ok(v) => pos[i] = v,
                Err(_) => return Ok(None),
            }
        }
    }
    Ok(None)
}

/// Equally spaced starts on level 0: column `i * width / n_paths`.
pub fn spaced_starts(width: i64, n_paths: usize) -> Vec<LatticeSite> {
    (0..n_paths as i64)
        .map(|i| LatticeSite::new(i * width / n_paths as i64, 0))
        .collect()
}

/// Monte Carlo over derived seeds. Each replica is run once up to the largest
/// height, so the fractions are non-decreasing in height by construction.
pub fn connectivity_experiment(
    cfg: &ModelConfig,
    width: i64,
    n_paths: usize,
    heights: &[u64],
    replicas: usize,
) -> Result<Vec<ConnectivityPoint>> {
    if n_paths == 0 || replicas == 0 {
        return Err(Error::InvalidParameter("need at least one path and one replica".into()));
    }
    let horizon = heights.iter().copied().max().unwrap_or(0);
    let starts = spaced_starts(width, n_paths);
    let times: Vec<Option<u64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| full_coalescence_step(&cfg.with_seed(derive_seed(cfg.seed, r)), &starts, horizon))
        .collect::<Result<_>>()?;
    Ok(heights
        .iter()
        .map(|&height| {
            let coalesced = times.iter().filter(|t| t.is_some_and(|t| t <= height)).count();
            ConnectivityPoint {
                height,
                coalesced,
                replicas,
                fraction: coalesced as f64 / replicas as f64,
            }
        })
        .collect())
}

/// A single path advanced step by step without storing its history.
#[derive(Debug, Clone)]
pub struct Walker {
    field: LazyField,
    pos: LatticeSite,
    steps: u64,
}

impl Walker {
    pub fn new(cfg: &ModelConfig, start: LatticeSite) -> Result<Self> {
        Ok(Self {
            field: LazyField::new(*cfg, LazyOptions::default())?,
            pos: start,
            steps: 0,
        })
    }

    pub fn position(&self) -> LatticeSite {
        self.pos
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self) -> Result<LatticeSite> {
        self.pos = ph_step(&mut self.field, 0, self.pos)?;
        self.steps += 1;
        Ok(self.pos)
    }

    /// Advances `n` steps and returns the final position.
    pub fn advance(&mut self, n: u64) -> Result<LatticeSite> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(self.pos)
    }

    pub fn sites_hashed(&self) -> u64 {
        self.field.sites_hashed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PerturbationLaw;
    use crate::process::{materialize_window, Landing, WindowSpec};

    fn row(y: i64, xs: &[i64]) -> RowPoints {
        let mut r = RowPoints::new(y);
        for &x in xs {
            r.insert(x, LatticeSite::new(x, y));
        }
        r
    }

    fn fixture(rows: &[(i64, &[i64])], x_lo: i64, x_hi: i64) -> WindowRealization {
        let cfg = ModelConfig::standard(0);
        let y_lo = rows.iter().map(|r| r.0).min().unwrap();
        let y_hi = rows.iter().map(|r| r.0).max().unwrap();
        let spec = WindowSpec::new(x_lo, x_hi, y_lo, y_hi).unwrap();
        let landings: Vec<Landing> = rows
            .iter()
            .flat_map(|&(y, xs)| {
                xs.iter().map(move |&x| Landing {
                    source: LatticeSite::new(x, y),
                    point: LatticeSite::new(x, y),
                })
            })
            .collect();
        WindowRealization::from_landings(&cfg, spec, &landings).unwrap()
    }

    /// A column whose tie sign is `want` on row `y`.
    fn column_with_sign(y: i64, want: i8) -> i64 {
        let sampler = crate::field::FieldSampler::new(ModelConfig::standard(0)).unwrap();
        let k = sampler.row_keys(y);
        (0..).find(|&x| k.tie_sign(x) == want).unwrap()
    }

    #[test]
    fn nearest_next_examples() {
        assert_eq!(
            nearest_next(&row(1, &[-2, 3]), 0).unwrap(),
            Nearest {
                j: 2,
                left: true,
                right: false
            }
        );
        assert_eq!(nearest_next(&row(1, &[0]), 0).unwrap().j, 0);
        let tie = nearest_next(&row(1, &[-2, 2]), 0).unwrap();
        assert!(tie.left && tie.right && tie.j == 2);
        assert!(nearest_next(&row(1, &[]), 0).is_err());
    }

    #[test]
    fn step_examples() {
        let mut w = fixture(&[(0, &[0]), (1, &[-2, 3])], -10, 10);
        assert_eq!(
            ph_step(&mut w, 0, LatticeSite::new(0, 0)).unwrap(),
            LatticeSite::new(-2, 1)
        );
        let mut w = fixture(&[(0, &[0]), (1, &[0, 7])], -10, 10);
        assert_eq!(
            ph_step(&mut w, 0, LatticeSite::new(0, 0)).unwrap(),
            LatticeSite::new(0, 1)
        );
    }

    #[test]
    fn ties_follow_the_sign() {
        for want in [1i8, -1] {
            let c = column_with_sign(0, want);
            let mut w = fixture(&[(0, &[c]), (1, &[c - 2, c + 2])], c - 10, c + 10);
            let v = ph_step(&mut w, 0, LatticeSite::new(c, 0)).unwrap();
            assert_eq!(v.x, c + 2 * want as i64);
        }
    }

    #[test]
    fn steps_near_the_edge_are_unsound() {
        let mut w = fixture(&[(0, &[0]), (1, &[4])], -3, 5);
        assert!(matches!(
            ph_step(&mut w, 0, LatticeSite::new(0, 0)),
            Err(Error::BoundaryUnsound { .. })
        ));
    }

    #[test]
    fn identity_lattice_paths_are_vertical() {
        let cfg = ModelConfig::new(0, 1.0, PerturbationLaw::point_mass()).unwrap();
        let mut w = materialize_window(&cfg, &WindowSpec::new(0, 10, 0, 5).unwrap()).unwrap();
        let t = trace_path(&mut w, LatticeSite::new(5, 0), 3);
        assert_eq!(t.vertices, (0..4).map(|y| LatticeSite::new(5, y)).collect::<Vec<_>>());
        assert!(!t.truncated);
        let t = trace_path(&mut w, LatticeSite::new(5, 0), 10);
        assert!(t.truncated);
        assert_eq!(t.vertices.len(), 6);
    }

    #[test]
    fn identical_starts_merge_at_once() {
        let cfg = ModelConfig::standard(2);
        let mut w = materialize_window(&cfg, &WindowSpec::new(-100, 100, 0, 30).unwrap()).unwrap();
        let s = LatticeSite::new(0, 0);
        let j = trace_joint(&mut w, &[s, s], 10).unwrap();
        assert_eq!(
            j.merge_events,
            vec![MergeEvent {
                step: 0,
                survivor: 0,
                absorbed: 1
            }]
        );
        assert_eq!(j.traces[0], j.traces[1]);
    }

    #[test]
    fn joint_matches_single_traces() {
        let cfg = ModelConfig::standard(9);
        let mut w = materialize_window(&cfg, &WindowSpec::new(-300, 300, 0, 80).unwrap()).unwrap();
        let starts = [LatticeSite::new(-6, 0), LatticeSite::new(0, 0), LatticeSite::new(5, 0)];
        let joint = trace_joint(&mut w, &starts, 60).unwrap();
        for (s, jt) in starts.iter().zip(&joint.traces) {
            let single = trace_path(&mut w, *s, 60);
            assert_eq!(single.vertices, jt.vertices);
        }
        assert_eq!(check_noncrossing(&joint.traces, &[]), 0);
    }

    #[test]
    fn coalescence_examples() {
        let cfg = ModelConfig::standard(4);
        let s = LatticeSite::new(3, 0);
        assert_eq!(
            coalescence_time(&cfg, s, s, 10).unwrap().time,
            CoalescenceTime::Exact(0)
        );
        let mut w = fixture(&[(0, &[0, 1]), (1, &[0])], -10, 10);
        let c = coalescence_time_in(&mut w, LatticeSite::new(0, 0), LatticeSite::new(1, 0), 1).unwrap();
        assert_eq!(c.time, CoalescenceTime::Exact(1));
        let cfg = ModelConfig::new(0, 1.0, PerturbationLaw::point_mass()).unwrap();
        let c = coalescence_time(&cfg, LatticeSite::new(0, 0), LatticeSite::new(1, 0), 10).unwrap();
        assert_eq!(c.time, CoalescenceTime::Censored(10));
    }

    #[test]
    fn dual_examples() {
        assert_eq!(dual_vertices(&row(0, &[1, 5])), vec![DualVertex { x2: 6, y: 0 }]);
        assert_eq!(dual_vertices(&row(0, &[0, 1])), vec![DualVertex { x2: 1, y: 0 }]);
        // Row 0 = {0, 4} stepping to 1 and 5 on row 1.
        let mut w = fixture(&[(0, &[-9, 0, 4, 9]), (1, &[-9, 1, 5, 9])], -10, 10);
        let mut f = DualForest::new(&mut w);
        let h = f.dual_step(DualVertex { x2: 6, y: 1 }).unwrap();
        assert_eq!(h, DualVertex { x2: 4, y: 0 });
        // Everything on the row passes right of the vertex.
        assert!(f.dual_step(DualVertex { x2: -19, y: 1 }).is_err());
    }

    #[test]
    fn corrupted_dual_is_caught() {
        let cfg = ModelConfig::standard(8);
        let mut w = materialize_window(&cfg, &WindowSpec::new(-200, 200, 0, 60).unwrap()).unwrap();
        let primal = trace_path(&mut w, LatticeSite::new(0, 0), 50);
        let top = w.row(50).unwrap().clone();
        let v = LatticeSite::new(primal.vertices[50].x, 50);
        let i = top.xs.iter().position(|&x| x == v.x).unwrap();
        let start = DualVertex {
            x2: top.xs[i] + top.xs[i + 1],
            y: 50,
        };
        let mut f = DualForest::new(&mut w);
        let mut dual = f.dual_trace(start, 40);
        assert!(!dual.truncated);
        assert_eq!(
            check_noncrossing(std::slice::from_ref(&primal), std::slice::from_ref(&dual)),
            0
        );
        let k = 20;
        let y = dual.vertices[k].y;
        dual.vertices[k].x2 = 2 * primal.at_level(y).unwrap().x - 1;
        assert!(check_noncrossing(&[primal], &[dual]) >= 1);
        assert_eq!(check_noncrossing(&[], &[]), 0);
    }

    #[test]
    fn trace_dump_format() {
        let t = PathTrace {
            start: LatticeSite::new(1, 2),
            vertices: vec![LatticeSite::new(1, 2), LatticeSite::new(0, 3)],
            truncated: false,
        };
        assert_eq!(t.dump(), "0 1 2\n1 0 3\n");
        let d = DualTrace {
            vertices: vec![DualVertex { x2: 3, y: 4 }],
            truncated: false,
        };
        assert_eq!(d.dump(), "0 3 4 D\n");
    }

    #[test]
    fn connectivity_degenerate_cases() {
        let cfg = ModelConfig::standard(1);
        let one = connectivity_experiment(&cfg, 50, 1, &[10], 3).unwrap();
        assert_eq!(one[0].fraction, 1.0);
        let lattice = ModelConfig::new(1, 1.0, PerturbationLaw::point_mass()).unwrap();
        let none = connectivity_experiment(&lattice, 50, 10, &[100], 3).unwrap();
        assert_eq!(none[0].fraction, 0.0);
    }
}
