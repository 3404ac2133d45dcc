//! On-demand materialization of `V` around moving paths on the unbounded lattice.
//!
//! Each lane keeps a band of rows. A source row is processed over a contiguous
//! column range that only ever grows, so every site is hashed at most once per
//! lane. Landings are recorded on their target row as a bitset; with upward
//! tracking enabled, landings with `dy >= 1` are also kept together with their
//! source row so envelope queries can be answered from the registry.
//!
//! Nearest-point queries are exact up to a per-query miss budget derived from
//! the perturbation tails, in the same way as window margins. Envelope queries
//! scan a fixed half-width and depth around the apex chosen so that the union
//! bound of [`envelope_leak`] stays under their own budget.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::field::{unit_threshold, FieldSampler, LatticeSite, ModelConfig, RowKeys};
use crate::process::{depths_for, envelope_leak, Landscape, Margins, Nearest, ScanRect};

/// Largest search radius for a nearest point before giving up.
pub const MAX_REACH: i64 = 1 << 12;
const FIRST_REACH: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LazyOptions {
    /// Miss budget of one nearest-point query.
    pub epsilon: f64,
    /// Miss budget of one envelope query; `None` disables upward tracking.
    pub envelope_epsilon: Option<f64>,
}

impl Default for LazyOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            envelope_epsilon: None,
        }
    }
}

impl LazyOptions {
    pub fn with_envelopes(epsilon: f64) -> Self {
        Self {
            epsilon: 1e-12,
            envelope_epsilon: Some(epsilon),
        }
    }
}

/// Scan geometry for envelope queries, relative to the apex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopeReach {
    pub half_width: i64,
    pub depth: i64,
}

/// Sorted-free set of columns backed by a growable bitset.
#[derive(Debug, Clone, Default)]
struct BitRow {
    origin: i64,
    words: Vec<u64>,
}

impl BitRow {
    fn clear(&mut self) {
        self.words.clear();
    }

    fn insert(&mut self, x: i64) {
        if self.words.is_empty() {
            self.origin = (x.div_euclid(64) - 4) * 64;
            self.words.resize(8, 0);
        }
        if x < self.origin {
            let need = ((self.origin - x + 63) / 64) as usize;
            let grow = need.max(self.words.len());
            let mut words = vec![0; grow];
            words.extend_from_slice(&self.words);
            self.words = words;
            self.origin -= grow as i64 * 64;
        }
        let end = self.origin + self.words.len() as i64 * 64;
        if x >= end {
            let need = ((x - end) / 64 + 1) as usize;
            let grow = need.max(self.words.len());
            self.words.resize(self.words.len() + grow, 0);
        }
        let off = (x - self.origin) as usize;
        self.words[off / 64] |= 1 << (off % 64);
    }

    /// Smallest member `>= x` and `<= limit`.
    fn next_from(&self, x: i64, limit: i64) -> Option<i64> {
        if self.words.is_empty() {
            return None;
        }
        let start = x.max(self.origin);
        let end = (self.origin + self.words.len() as i64 * 64 - 1).min(limit);
        if start > end {
            return None;
        }
        let mut off = (start - self.origin) as usize;
        let last = (end - self.origin) as usize;
        let mut w = off / 64;
        let mut bits = self.words[w] & (!0u64 << (off % 64));
        loop {
            if bits != 0 {
                off = w * 64 + bits.trailing_zeros() as usize;
                return (off <= last).then_some(self.origin + off as i64);
            }
            w += 1;
            if w * 64 > last {
                return None;
            }
            bits = self.words[w];
        }
    }

    /// Largest member `<= x` and `>= limit`.
    fn prev_from(&self, x: i64, limit: i64) -> Option<i64> {
        if self.words.is_empty() {
            return None;
        }
        let start = x.min(self.origin + self.words.len() as i64 * 64 - 1);
        let end = self.origin.max(limit);
        if start < end {
            return None;
        }
        let first = (end - self.origin) as usize;
        let off = (start - self.origin) as usize;
        let mut w = off / 64;
        let shift = 63 - off % 64;
        let mut bits = (self.words[w] << shift) >> shift;
        loop {
            if bits != 0 {
                let found = w * 64 + 63 - bits.leading_zeros() as usize;
                return (found >= first).then_some(self.origin + found as i64);
            }
            if w == 0 || w * 64 <= first {
                return None;
            }
            w -= 1;
            bits = self.words[w];
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    keys: RowKeys,
    /// Processed source columns; empty while `lo > hi`.
    lo: i64,
    hi: i64,
    points: BitRow,
    /// Upward landings on this row: `(x, source row)`.
    ups: Vec<(i64, i64)>,
}

/// What a lane records for each processed site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Mode {
    #[default]
    Unset,
    /// Landing points only, for nearest queries.
    Points,
    /// Upward landings only, for envelope queries.
    Upward,
    Both,
}

#[derive(Debug, Clone, Default)]
struct Lane {
    base: i64,
    rows: VecDeque<Row>,
    top: i64,
    mode: Mode,
    /// Released rows kept for their allocations.
    spare: Vec<Row>,
}

impl Lane {
    fn pop_front(&mut self) {
        if let Some(mut row) = self.rows.pop_front() {
            row.points.clear();
            row.ups.clear();
            self.spare.push(row);
        }
        self.base += 1;
    }
}

/// `V` explored lazily around any number of lanes.
#[derive(Debug, Clone)]
pub struct LazyField {
    sampler: FieldSampler,
    /// Margins for reach `FIRST_REACH << k`.
    levels: Vec<Margins>,
    envelope: Option<EnvelopeReach>,
    keep: i64,
    lanes: Vec<Lane>,
    sites_hashed: u64,
}

/// Depth and half-width for envelope queries under budget `epsilon`.
pub fn envelope_reach(sampler: &FieldSampler, epsilon: f64, min_width: i64) -> Result<EnvelopeReach> {
    let tables = sampler.tables();
    let p = sampler.config().p;
    let apex = LatticeSite::new(0, 0);
    const FAR: i64 = 1 << 40;
    let leak = |w: i64, d: i64| {
        let scan = ScanRect {
            x_lo: -w,
            x_hi: w,
            y_lo: -d,
            y_hi: 0,
        };
        envelope_leak(tables, p, apex, &scan, i64::MIN, 0)
    };
    let mut depth = 0;
    while leak(FAR, depth) > epsilon / 2.0 {
        depth += 1;
        if depth > 100_000 {
            return Err(Error::InvalidParameter("envelope depth does not converge".into()));
        }
    }
    if leak(FAR, depth) > epsilon {
        return Err(Error::InvalidParameter("envelope budget unattainable".into()));
    }
    let mut hi = min_width.max(1);
    while leak(hi, depth) > epsilon {
        hi *= 2;
        if hi > FAR / 2 {
            return Err(Error::InvalidParameter("envelope width does not converge".into()));
        }
    }
    let mut lo = min_width.max(0);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if leak(mid, depth) > epsilon {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(EnvelopeReach { half_width: hi, depth })
}

impl LazyField {
    pub fn new(cfg: ModelConfig, opts: LazyOptions) -> Result<Self> {
        let sampler = FieldSampler::new(cfg)?;
        if !(opts.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {}", opts.epsilon)));
        }
        let mut levels = Vec::new();
        let mut r = FIRST_REACH;
        while r <= MAX_REACH {
            levels.push(depths_for(&cfg.law, 2 * r + 1, 1, opts.epsilon)?);
            r *= 2;
        }
        let widest = *levels.last().expect("at least one reach level");
        let envelope = match opts.envelope_epsilon {
            Some(eps) if eps > 0.0 => Some(envelope_reach(&sampler, eps, FIRST_REACH + widest.dx)?),
            Some(eps) => return Err(Error::InvalidParameter(format!("envelope epsilon = {eps}"))),
            None => None,
        };
        let keep = widest.dy.max(envelope.map_or(0, |e| e.depth)) + 2;
        Ok(Self {
            sampler,
            levels,
            envelope,
            keep,
            lanes: Vec::new(),
            sites_hashed: 0,
        })
    }

    /// Margins used at the widest nearest-point reach.
    pub fn margins(&self) -> Margins {
        *self.levels.last().expect("at least one reach level")
    }

    pub fn envelope(&self) -> Option<EnvelopeReach> {
        self.envelope
    }

    /// Lattice sites examined so far, over all lanes.
    pub fn sites_hashed(&self) -> u64 {
        self.sites_hashed
    }

    /// Drops all explored state; the next query starts from scratch.
    pub fn reset(&mut self) {
        self.lanes.clear();
    }

    /// Drops one lane's state.
    pub fn reset_lane(&mut self, lane: usize) {
        if let Some(l) = self.lanes.get_mut(lane) {
            *l = Lane::default();
        }
    }

    fn lane_mut(&mut self, lane: usize) -> &mut Lane {
        if lane >= self.lanes.len() {
            self.lanes.resize_with(lane + 1, Lane::default);
        }
        &mut self.lanes[lane]
    }

    /// Makes sure `lane` records what `want` needs. A lane that switches
    /// role is rebuilt in `Both` mode.
    fn require(&mut self, lane: usize, want: Mode) {
        let l = self.lane_mut(lane);
        match (l.mode, want) {
            (Mode::Unset, _) => l.mode = want,
            (Mode::Both, _) => {}
            (have, want) if have == want => {}
            _ => {
                *l = Lane::default();
                l.mode = Mode::Both;
            }
        }
    }

    /// Index of row `y` in `lane`, allocating rows up to `y`.
    fn row_index(&mut self, lane: usize, y: i64) -> Result<usize> {
        let seed = self.sampler.config().seed;
        let keep = self.keep;
        let l = self.lane_mut(lane);
        if l.rows.is_empty() {
            l.base = y - keep;
            l.top = y;
        }
        if y < l.base {
            return Err(Error::BoundaryUnsound {
                site: LatticeSite::new(0, y),
                reason: format!("row {y} already released (lane floor {})", l.base),
            });
        }
        while l.base + l.rows.len() as i64 <= y {
            let ry = l.base + l.rows.len() as i64;
            let keys = RowKeys::new(seed, ry);
            let row = match l.spare.pop() {
                Some(mut row) => {
                    row.keys = keys;
                    row.lo = 0;
                    row.hi = -1;
                    row
                }
                None => Row {
                    keys,
                    lo: 0,
                    hi: -1,
                    points: BitRow::default(),
                    ups: Vec::new(),
                },
            };
            l.rows.push_back(row);
        }
        Ok((y - l.base) as usize)
    }

    /// Processes source rows `[b_lo, b_hi]` over columns `[c_lo, c_hi]`.
    /// Rows below the lane floor are skipped; callers account for them.
    fn ensure(&mut self, lane: usize, b_lo: i64, b_hi: i64, c_lo: i64, c_hi: i64) -> Result<()> {
        let dy_top = self.sampler.tables().dy_support();
        // Allocate landing rows first so the loop below can index freely.
        self.row_index(lane, b_hi + dy_top)?;
        let mut hashed = 0u64;
        let sampler = &self.sampler;
        let l = &mut self.lanes[lane];
        let mode = l.mode;
        for b in b_lo.max(l.base)..=b_hi {
            let i = (b - l.base) as usize;
            let (lo, hi) = (l.rows[i].lo, l.rows[i].hi);
            let keys = l.rows[i].keys;
            let mut run = |from: i64, to: i64| {
                if from <= to {
                    visit_range(sampler, mode, &keys, b, i, from, to, &mut l.rows);
                    hashed += (to - from + 1) as u64;
                }
            };
            if lo > hi {
                run(c_lo, c_hi);
                l.rows[i].lo = c_lo;
                l.rows[i].hi = c_hi;
                continue;
            }
            run(c_lo, lo - 1);
            run(hi + 1, c_hi);
            l.rows[i].lo = lo.min(c_lo);
            l.rows[i].hi = hi.max(c_hi);
        }
        self.sites_hashed += hashed;
        Ok(())
    }

    /// Releases rows that no query at or above `y` can need.
    fn advance(&mut self, lane: usize, y: i64) {
        let keep = self.keep;
        let l = &mut self.lanes[lane];
        if y > l.top {
            l.top = y;
        }
        let floor = l.top - keep;
        while l.base < floor && !l.rows.is_empty() {
            l.pop_front();
        }
    }

    /// Prepares `lane` for an envelope query at `apex` over sources
    /// `[src_lo, src_hi]`; returns the half-width.
    fn prepare_envelope(&mut self, lane: usize, apex: LatticeSite, src_lo: i64, src_hi: i64) -> Result<i64> {
        let reach = self
            .envelope
            .ok_or_else(|| Error::InvalidParameter("envelope queries need upward tracking".into()))?;
        if src_hi > apex.y {
            return Err(Error::InvalidParameter(format!(
                "source rows up to {src_hi} lie above the apex {apex}"
            )));
        }
        self.require(lane, Mode::Upward);
        let rows_lo = src_lo.max(apex.y - reach.depth);
        self.row_index(lane, apex.y)?;
        self.advance(lane, apex.y);
        if rows_lo < self.lanes[lane].base {
            return Err(Error::BoundaryUnsound {
                site: apex,
                reason: "envelope rows already released".into(),
            });
        }
        let w = reach.half_width;
        self.ensure(lane, rows_lo, src_hi, apex.x - w, apex.x + w)?;
        Ok(w)
    }

    /// Highest `h >= 1` such that some upward landing from a source row
    /// accepted by `keep` sits at height `h` inside the envelope of `apex`.
    fn scan_ups(&self, lane: usize, apex: LatticeSite, keep: impl Fn(i64) -> bool) -> Option<i64> {
        let l = &self.lanes[lane];
        let top = l.base + l.rows.len() as i64 - 1 - apex.y;
        let mut h = top;
        while h >= 1 {
            let row = &l.rows[(apex.y + h - l.base) as usize];
            let reach = h * h;
            if row.ups.iter().any(|&(x, b)| keep(b) && (x - apex.x).abs() <= reach) {
                return Some(h);
            }
            h -= 1;
        }
        None
    }
}

/// Hashes source sites `(a, b)` for `a` in `[from, to]` into `rows`, where
/// row index `i` holds source row `b`.
///
/// Sites are first filtered branch-free into a small buffer; only the
/// survivors pay for the remaining draws.
#[allow(clippy::too_many_arguments)]
fn visit_range(
    sampler: &FieldSampler,
    mode: Mode,
    keys: &RowKeys,
    b: i64,
    i: usize,
    from: i64,
    to: i64,
    rows: &mut VecDeque<Row>,
) {
    const CHUNK: i64 = 256;
    let open_cut = unit_threshold(sampler.config().p);
    let tables = sampler.tables();
    let up_cut = tables.dy_positive_bits();
    let mut buf = [0i64; CHUNK as usize];
    let mut start = from;
    while start <= to {
        let stop = (start + CHUNK - 1).min(to);
        let mut n = 0;
        match mode {
            Mode::Upward => {
                for a in start..=stop {
                    buf[n] = a;
                    n += ((keys.dy_bits(a) >= up_cut) & (keys.open_bits(a) < open_cut)) as usize;
                }
                for &a in &buf[..n] {
                    let d = tables.sample_dy(keys.dy_bits(a));
                    let x = a + sampler.dx(keys, a);
                    rows[i + d as usize].ups.push((x, b));
                }
            }
            Mode::Points | Mode::Both | Mode::Unset => {
                for a in start..=stop {
                    buf[n] = a;
                    n += (keys.open_bits(a) < open_cut) as usize;
                }
                let ups = mode == Mode::Both;
                for &a in &buf[..n] {
                    let d = sampler.dy(keys, a);
                    let x = a + sampler.dx(keys, a);
                    let target = &mut rows[i + d as usize];
                    target.points.insert(x);
                    if ups && d > 0 {
                        target.ups.push((x, b));
                    }
                }
            }
        }
        start = stop + 1;
    }
}

impl Landscape for LazyField {
    fn sampler(&self) -> &FieldSampler {
        &self.sampler
    }

    fn tie_sign(&mut self, lane: usize, at: LatticeSite) -> i8 {
        match self.row_index(lane, at.y) {
            Ok(i) => self.lanes[lane].rows[i].keys.tie_sign(at.x),
            Err(_) => self.sampler.row_keys(at.y).tie_sign(at.x),
        }
    }

    fn nearest(&mut self, lane: usize, y: i64, x: i64) -> Result<Nearest> {
        self.require(lane, Mode::Points);
        self.row_index(lane, y)?;
        self.advance(lane, y);
        let mut r = FIRST_REACH;
        for level in 0..self.levels.len() {
            let Margins { dx, dy } = self.levels[level];
            self.ensure(lane, y - dy, y, x - r - dx, x + r + dx)?;
            let l = &self.lanes[lane];
            let row = &l.rows[(y - l.base) as usize].points;
            let right = row.next_from(x, x + r).map(|v| v - x);
            let left = row.prev_from(x, x - r).map(|v| x - v);
            let j = match (left, right) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            if let Some(j) = j {
                return Ok(Nearest {
                    j,
                    left: left == Some(j),
                    right: right == Some(j),
                });
            }
            r *= 2;
        }
        Err(Error::BoundaryUnsound {
            site: LatticeSite::new(x, y),
            reason: format!("no point within {MAX_REACH} columns"),
        })
    }

    fn max_overshoot(&mut self, lane: usize, apex: LatticeSite, src_lo: i64, src_hi: i64) -> Result<Option<i64>> {
        if src_lo > src_hi {
            return Ok(None);
        }
        self.prepare_envelope(lane, apex, src_lo, src_hi)?;
        Ok(self.scan_ups(lane, apex, |b| b >= src_lo && b <= src_hi))
    }

    fn max_overshoot_split(
        &mut self,
        lane: usize,
        apex: LatticeSite,
        src_lo: i64,
        split: i64,
        src_hi: i64,
    ) -> Result<(Option<i64>, Option<i64>)> {
        if src_lo > src_hi {
            return Ok((None, None));
        }
        self.prepare_envelope(lane, apex, src_lo, src_hi)?;
        let all = self.scan_ups(lane, apex, |b| b >= src_lo && b <= src_hi);
        let newer = match all {
            None => None,
            Some(_) => self.scan_ups(lane, apex, |b| b > split && b >= src_lo && b <= src_hi),
        };
        Ok((all, newer))
    }

    fn release_below(&mut self, lane: usize, y: i64) {
        if let Some(l) = self.lanes.get_mut(lane) {
            while l.base < y && !l.rows.is_empty() {
                l.pop_front();
            }
        }
    }
}
