//! Coordinate-indexed random field.
//!
//! Every lattice site carries an i.i.d. triple (open flag, tie sign,
//! perturbation). The triple is a pure function of `(seed, x, y)`: each
//! component is read from its own counter-based hash stream, so any site can
//! be evaluated in O(1) without touching its neighbours. That is what lets the
//! point process be materialized lazily and exactly on arbitrary windows.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// A point of Z^2. `y` is the level (row), `x` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeSite {
    pub x: i64,
    pub y: i64,
}

impl LatticeSite {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

impl std::fmt::Display for LatticeSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The variates attached to one lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteVariates {
    pub open: bool,
    /// Rademacher sign used to break two-sided ties; always -1 or +1.
    pub tie_sign: i8,
    pub dx: i64,
    /// Vertical perturbation, never negative.
    pub dy: i64,
}

impl SiteVariates {
    /// Open with zero perturbation.
    pub fn is_special(&self) -> bool {
        self.open && self.dx == 0 && self.dy == 0
    }
}

/// Perturbation law family.
///
/// `TwoSidedGeometric` keeps the decay ratio `q = (1 - theta_x) / 2` of the
/// horizontal law and normalizes it: `P(X = j) = (1 - q)/(1 + q) * q^|j|`.
/// `theta = 1` is allowed and gives a point mass at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PerturbationLaw {
    TwoSidedGeometric { theta_x: f64, theta_y: f64 },
    GaussianFloor { sigma_x: f64, sigma_y: f64 },
}

impl PerturbationLaw {
    pub const fn geometric(theta_x: f64, theta_y: f64) -> Self {
        Self::TwoSidedGeometric { theta_x, theta_y }
    }

    /// All mass at (0, 0).
    pub const fn point_mass() -> Self {
        Self::TwoSidedGeometric {
            theta_x: 1.0,
            theta_y: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TwoSidedGeometric { theta_x, theta_y } => {
                for (name, v) in [("theta_x", theta_x), ("theta_y", theta_y)] {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1]")));
                    }
                }
            }
            Self::GaussianFloor { sigma_x, sigma_y } => {
                for (name, v) in [("sigma_x", sigma_x), ("sigma_y", sigma_y)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact `P(|X| >= n)` (no table truncation).
    pub fn x_tail(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        match *self {
            Self::TwoSidedGeometric { theta_x, .. } => {
                let q = (1.0 - theta_x) / 2.0;
                let c = (1.0 - q) / (1.0 + q);
                2.0 * c * q.powi(n as i32) / (1.0 - q)
            }
            // |trunc(sigma Z)| >= n  iff  |sigma Z| >= n
            Self::GaussianFloor { sigma_x, .. } => erfc(n as f64 / (sigma_x * std::f64::consts::SQRT_2)),
        }
    }

    /// Exact `P(Y >= n)`.
    pub fn y_tail(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        match *self {
            Self::TwoSidedGeometric { theta_y, .. } => (1.0 - theta_y).powi(n as i32),
            Self::GaussianFloor { sigma_y, .. } => erfc(n as f64 / (sigma_y * std::f64::consts::SQRT_2)),
        }
    }

    /// Constants `(C0, C1)` with `P(|X| >= n) v P(Y >= n) <= C0 exp(-C1 n)`.
    /// `C1` is infinite for the point mass.
    pub fn tail_constants(&self) -> (f64, f64) {
        match *self {
            Self::TwoSidedGeometric { theta_x, theta_y } => {
                let q = (1.0 - theta_x) / 2.0;
                let c = (1.0 - q) / (1.0 + q);
                let cx0 = 2.0 * c / (1.0 - q);
                let cx1 = -q.ln();
                let cy1 = -(1.0 - theta_y).ln();
                (cx0.max(1.0), cx1.min(cy1))
            }
            Self::GaussianFloor { sigma_x, sigma_y } => {
                // erfc(z) <= exp(-z^2) and n^2 >= 2n - 1
                let s = sigma_x.max(sigma_y);
                let s2 = s * s;
                ((0.5 / s2).exp(), 1.0 / s2)
            }
        }
    }
}

/// `P(|X| >= n) v P(Y >= n)`, exact for every supported family.
pub fn law_tail_bound(law: &PerturbationLaw, n: u64) -> f64 {
    law.x_tail(n).max(law.y_tail(n)).min(1.0)
}

/// Probability mass below which a table is cut off. Far below the 2^-53
/// resolution of the uniform variates, so truncation never changes a draw.
const TABLE_CUTOFF: f64 = 1e-18;
const MAX_TABLE_LEN: usize = 4096;

/// Normalized pmf tables and inverse-CDF samplers for one law.
#[derive(Debug, Clone)]
pub struct LawTables {
    law: PerturbationLaw,
    /// `abs_pmf[m] = P(|X| = m)`.
    abs_pmf: Vec<f64>,
    /// Inverse-CDF lookup of `|X|`.
    abs_cuts: Cuts,
    /// `y_pmf[k] = P(Y = k)`.
    y_pmf: Vec<f64>,
    y_cdf: Vec<f64>,
    y_cuts: Cuts,
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn normalize(mut pmf: Vec<f64>) -> Vec<f64> {
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    pmf
}

impl LawTables {
    pub fn new(law: PerturbationLaw) -> Result<Self> {
        law.validate()?;
        let mut abs_pmf = Vec::new();
        for m in 0..MAX_TABLE_LEN as u64 {
            let mass = law.x_tail(m) - law.x_tail(m + 1);
            if m > 0 && law.x_tail(m) < TABLE_CUTOFF {
                break;
            }
            abs_pmf.push(mass.max(0.0));
        }
        let mut y_pmf = Vec::new();
        for k in 0..MAX_TABLE_LEN as u64 {
            if k > 0 && law.y_tail(k) < TABLE_CUTOFF {
                break;
            }
            y_pmf.push((law.y_tail(k) - law.y_tail(k + 1)).max(0.0));
        }
        let abs_pmf = normalize(abs_pmf);
        let y_pmf = normalize(y_pmf);
        let abs_cdf = cumulative(&abs_pmf);
        let y_cdf = cumulative(&y_pmf);
        Ok(Self {
            law,
            abs_cuts: Cuts::new(&abs_cdf),
            y_cuts: Cuts::new(&y_cdf),
            y_cdf,
            abs_pmf,
            y_pmf,
        })
    }

    pub fn law(&self) -> &PerturbationLaw {
        &self.law
    }

    /// Tabulated `P(X = j)`; symmetric in `j` by construction.
    pub fn dx_pmf(&self, j: i64) -> f64 {
        let m = j.unsigned_abs() as usize;
        match self.abs_pmf.get(m) {
            None => 0.0,
            Some(&p) if m == 0 => p,
            Some(&p) => p / 2.0,
        }
    }

    pub fn dy_pmf(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        self.y_pmf.get(k as usize).copied().unwrap_or(0.0)
    }

    /// Largest |dx| with nonzero tabulated mass.
    pub fn dx_support(&self) -> i64 {
        self.abs_pmf.len() as i64 - 1
    }

    pub fn dy_support(&self) -> i64 {
        self.y_pmf.len() as i64 - 1
    }

    /// `P(Y >= k)` from the table.
    pub fn dy_tail(&self, k: i64) -> f64 {
        if k <= 0 {
            1.0
        } else {
            1.0 - self.y_cdf.get(k as usize - 1).copied().unwrap_or(1.0)
        }
    }

    #[inline]
    fn sample_abs(&self, bits: u64) -> i64 {
        self.abs_cuts.inverse(bits)
    }

    #[inline]
    pub(crate) fn sample_dy(&self, bits: u64) -> i64 {
        self.y_cuts.inverse(bits)
    }

    /// `Y >= k` decided from the dy draw alone.
    #[inline]
    pub(crate) fn dy_at_least(&self, bits: u64, k: i64) -> bool {
        if k <= 0 {
            return true;
        }
        match self.y_cuts.cuts.get(k as usize - 1) {
            Some(&c) => bits >= c,
            None => false,
        }
    }

    /// `Y >= 1` iff the 53-bit dy draw is at least this.
    pub(crate) fn dy_positive_bits(&self) -> u64 {
        self.y_cuts.cuts.first().copied().unwrap_or(u64::MAX)
    }

    /// `P(X = Y = 0)` under the independent joint law.
    pub fn zero_mass(&self) -> f64 {
        self.abs_pmf[0] * self.y_pmf[0]
    }
}

const GUIDE_BITS: u32 = 12;

/// Inverse-CDF lookup on 53-bit draws: `cuts[k]` is the 53-bit image of
/// `cdf[k]` (last entry dropped) and `guide[j]` the answer at the start of
/// bucket `j` of the top `GUIDE_BITS` bits.
#[derive(Debug, Clone)]
struct Cuts {
    cuts: Vec<u64>,
    guide: Vec<u16>,
}

impl Cuts {
    fn new(cdf: &[f64]) -> Self {
        let cuts: Vec<u64> = cdf[..cdf.len().saturating_sub(1)]
            .iter()
            .map(|&c| unit_threshold(c))
            .collect();
        let guide = (0..1u64 << GUIDE_BITS)
            .map(|j| {
                let start = j << (53 - GUIDE_BITS);
                cuts.iter().take_while(|&&c| start >= c).count() as u16
            })
            .collect();
        Self { cuts, guide }
    }

    /// Smallest `k` with `u < cdf[k]`, capped at the last index, where
    /// `bits` is the 53-bit image of `u`.
    #[inline]
    fn inverse(&self, bits: u64) -> i64 {
        let mut k = self.guide[(bits >> (53 - GUIDE_BITS)) as usize] as usize;
        while k < self.cuts.len() && bits >= self.cuts[k] {
            k += 1;
        }
        k as i64
    }
}

/// Model parameters: seed, open probability, perturbation law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seed: u64,
    pub p: f64,
    pub law: PerturbationLaw,
}

impl ModelConfig {
    pub fn new(seed: u64, p: f64, law: PerturbationLaw) -> Result<Self> {
        let cfg = Self { seed, p, law };
        cfg.validate()?;
        Ok(cfg)
    }

    /// p = 0.5 with the geometric law at theta_x = theta_y = 0.5.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            p: 0.5,
            law: PerturbationLaw::geometric(0.5, 0.5),
        }
    }

    /// Open probability may be 0 or 1 for fixtures; the model proper needs (0, 1).
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("p = {} must lie in [0, 1]", self.p)));
        }
        self.law.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

// Stream tags for the independent components of a site triple.
const TAG_OPEN: u64 = 0x243F_6A88_85A3_08D3;
const TAG_SIGN: u64 = 0x1319_8A2E_0370_7344;
const TAG_DX: u64 = 0xA409_3822_299F_31D0;
const TAG_DX_SIGN: u64 = 0x082E_FA98_EC4E_6C89;
const TAG_DY: u64 = 0x4528_21E6_38D0_1377;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Default master seed of the experiments.
pub const MASTER_SEED: u64 = 0x00C0_FFEE;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent 64-bit seed for replica `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ 0xD1B5_4A32_D192_ED03).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Integer cut equivalent to comparing a 53-bit uniform against `t`:
/// `unit(h) < t` iff `h >> 11 < unit_threshold(t)`.
pub(crate) fn unit_threshold(t: f64) -> u64 {
    (t.clamp(0.0, 1.0) * (1u64 << 53) as f64).ceil() as u64
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-row stream keys. Hashing a site is then one SplitMix64 step of the
/// row's stream, indexed by the column.
#[derive(Debug, Clone, Copy)]
pub struct RowKeys {
    open: u64,
    sign: u64,
    dx: u64,
    dx_sign: u64,
    dy: u64,
}

impl RowKeys {
    #[inline]
    pub fn new(seed: u64, y: i64) -> Self {
        let base = mix64(seed ^ mix64((y as u64).wrapping_add(0x6A09_E667_F3BC_C909)));
        let key = |tag: u64| mix64(base ^ tag);
        Self {
            open: key(TAG_OPEN),
            sign: key(TAG_SIGN),
            dx: key(TAG_DX),
            dx_sign: key(TAG_DX_SIGN),
            dy: key(TAG_DY),
        }
    }

    #[inline]
    fn draw(key: u64, x: i64) -> u64 {
        mix64(key.wrapping_add((x as u64).wrapping_mul(GOLDEN)))
    }

    /// The 53 bits behind [`Self::u_open`]; `u_open(x) < t` iff
    /// `open_bits(x) < unit_threshold(t)`.
    #[inline]
    pub(crate) fn open_bits(&self, x: i64) -> u64 {
        Self::draw(self.open, x) >> 11
    }

    #[inline]
    pub(crate) fn dy_bits(&self, x: i64) -> u64 {
        Self::draw(self.dy, x) >> 11
    }

    #[inline]
    pub fn u_open(&self, x: i64) -> f64 {
        unit(Self::draw(self.open, x))
    }

    #[inline]
    pub fn u_dy(&self, x: i64) -> f64 {
        unit(Self::draw(self.dy, x))
    }

    #[inline]
    pub fn tie_sign(&self, x: i64) -> i8 {
        if Self::draw(self.sign, x) >> 63 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub(crate) fn dx_bits(&self, x: i64) -> u64 {
        Self::draw(self.dx, x) >> 11
    }

    #[inline]
    pub fn u_dx(&self, x: i64) -> f64 {
        unit(Self::draw(self.dx, x))
    }

    #[inline]
    pub fn dx_negative(&self, x: i64) -> bool {
        Self::draw(self.dx_sign, x) >> 63 == 1
    }
}

/// Samples site variates for one model; caches the law tables.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    cfg: ModelConfig,
    tables: LawTables,
}

impl FieldSampler {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            tables: LawTables::new(cfg.law)?,
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn tables(&self) -> &LawTables {
        &self.tables
    }

    #[inline]
    pub fn row_keys(&self, y: i64) -> RowKeys {
        RowKeys::new(self.cfg.seed, y)
    }

    #[inline]
    pub fn is_open(&self, keys: &RowKeys, x: i64) -> bool {
        keys.u_open(x) < self.cfg.p
    }

    #[inline]
    pub fn dy(&self, keys: &RowKeys, x: i64) -> i64 {
        self.tables.sample_dy(keys.dy_bits(x))
    }

    #[inline]
    pub fn dy_at_least(&self, keys: &RowKeys, x: i64, k: i64) -> bool {
        self.tables.dy_at_least(keys.dy_bits(x), k)
    }

    #[inline]
    pub fn dx(&self, keys: &RowKeys, x: i64) -> i64 {
        let m = self.tables.sample_abs(keys.dx_bits(x));
        if m != 0 && keys.dx_negative(x) {
            -m
        } else {
            m
        }
    }

    #[inline]
    pub fn variates_with(&self, keys: &RowKeys, x: i64) -> SiteVariates {
        SiteVariates {
            open: self.is_open(keys, x),
            tie_sign: keys.tie_sign(x),
            dx: self.dx(keys, x),
            dy: self.dy(keys, x),
        }
    }

    pub fn variates(&self, site: LatticeSite) -> SiteVariates {
        let v = self.variates_with(&self.row_keys(site.y), site.x);
        debug_assert!(v.dy >= 0);
        v
    }

    /// `p * P(X = Y = 0)`.
    pub fn special_rate(&self) -> f64 {
        self.cfg.p * self.tables.zero_mass()
    }
}

/// The triple attached to `site`. Deterministic in `(cfg, site)`.
///
/// Builds the law tables on every call; hot loops should hold a
/// [`FieldSampler`] instead.
pub fn site_variates(cfg: &ModelConfig, site: LatticeSite) -> SiteVariates {
    FieldSampler::new(*cfg)
        .expect("invalid model configuration")
        .variates(site)
}

/// One binned marginal of a [`PmfReport`].
#[derive(Debug, Clone, Serialize)]
pub struct MarginalCheck {
    /// Bin label: the value, or `<=v` / `>=v` for pooled tails.
    pub bins: Vec<String>,
    pub expected: Vec<f64>,
    pub observed: Vec<u64>,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PmfReport {
    pub n_samples: usize,
    pub dx: MarginalCheck,
    pub dy: MarginalCheck,
    pub threshold: f64,
    pub flagged: bool,
}

impl PmfReport {
    pub fn p_value(&self) -> f64 {
        self.dx.p_value.min(self.dy.p_value)
    }
}

/// Chi-square goodness of fit of integer observations against a pmf over
/// `[lo, hi]`. Values outside the range are pooled into the end bins, and end
/// bins are widened until their expected count reaches 5.
fn chi_square_marginal(
    counts: &std::collections::BTreeMap<i64, u64>,
    pmf: impl Fn(i64) -> f64,
    lo: i64,
    hi: i64,
    n: usize,
) -> MarginalCheck {
    let n_f = n as f64;
    // Candidate bins: single values in [lo, hi]; pool outer values into ends.
    let mut edges: Vec<(i64, i64)> = Vec::new();
    let mut start = lo;
    let mut acc = 0.0;
    for v in lo..=hi {
        acc += pmf(v) * n_f;
        if acc >= 5.0 {
            edges.push((start, v));
            start = v + 1;
            acc = 0.0;
        }
    }
    if start <= hi {
        match edges.last_mut() {
            Some(last) => last.1 = hi,
            None => edges.push((lo, hi)),
        }
    }
    let mut bins = Vec::new();
    let mut expected = Vec::new();
    let mut observed = Vec::new();
    let n_bins = edges.len();
    for (i, &(a, b)) in edges.iter().enumerate() {
        let lo_open = i == 0;
        let hi_open = i + 1 == n_bins;
        let mut e: f64 = (a..=b).map(&pmf).sum();
        // All mass outside [lo, hi] belongs to the open end bins.
        if lo_open {
            e += (lo - 200..lo).map(&pmf).sum::<f64>();
        }
        if hi_open {
            e += (hi + 1..hi + 200).map(&pmf).sum::<f64>();
        }
        let o: u64 = counts
            .iter()
            .filter(|(&v, _)| (lo_open || v >= a) && (hi_open || v <= b))
            .map(|(_, &c)| c)
            .sum();
        let label = match (lo_open, hi_open) {
            (true, true) => "all".to_string(),
            (true, false) => format!("<={b}"),
            (false, true) => format!(">={a}"),
            _ if a == b => a.to_string(),
            _ => format!("{a}..{b}"),
        };
        bins.push(label);
        expected.push(e * n_f);
        observed.push(o);
    }
    let chi_square: f64 = expected
        .iter()
        .zip(&observed)
        .filter(|(e, _)| **e > 0.0)
        .map(|(e, &o)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = n_bins.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi_square)
    };
    MarginalCheck {
        bins,
        expected,
        observed,
        chi_square,
        dof,
        p_value,
    }
}

/// Draws `n_samples` variates from distinct sites and tests both marginals
/// against the analytic pmf. `sampler` exists so negative controls can swap
/// in a broken sampler; production use goes through [`pmf_selfcheck`].
pub fn pmf_selfcheck_with<F>(
    law: &PerturbationLaw,
    n_samples: usize,
    threshold: f64,
    mut sampler: F,
) -> Result<PmfReport>
where
    F: FnMut(LatticeSite) -> SiteVariates,
{
    if n_samples < 10_000 {
        return Err(Error::InsufficientSamples {
            needed: 10_000,
            got: n_samples,
        });
    }
    let tables = LawTables::new(*law)?;
    let width = 1024i64;
    let mut dx_counts = std::collections::BTreeMap::new();
    let mut dy_counts = std::collections::BTreeMap::new();
    for i in 0..n_samples as i64 {
        let site = LatticeSite::new(i % width, i / width);
        let v = sampler(site);
        *dx_counts.entry(v.dx).or_insert(0u64) += 1;
        *dy_counts.entry(v.dy).or_insert(0u64) += 1;
    }
    let xs = tables.dx_support();
    let ys = tables.dy_support();
    let dx = chi_square_marginal(&dx_counts, |j| tables.dx_pmf(j), -xs, xs, n_samples);
    let dy = chi_square_marginal(&dy_counts, |k| tables.dy_pmf(k), 0, ys, n_samples);
    let flagged = dx.p_value < threshold || dy.p_value < threshold;
    Ok(PmfReport {
        n_samples,
        dx,
        dy,
        threshold,
        flagged,
    })
}

/// Chi-square self check of the production sampler. The open flag is ignored;
/// perturbations are drawn at every site.
pub fn pmf_selfcheck(law: &PerturbationLaw, n_samples: usize, seed: u64, threshold: f64) -> Result<PmfReport> {
    let sampler = FieldSampler::new(ModelConfig {
        seed,
        p: 1.0,
        law: *law,
    })?;
    pmf_selfcheck_with(law, n_samples, threshold, |s| sampler.variates(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Linear scan on the float CDF: the reference the integer lookup must
    /// reproduce exactly.
    fn float_inverse(cdf: &[f64], u: f64) -> i64 {
        let mut k = 0;
        while k + 1 < cdf.len() && u >= cdf[k] {
            k += 1;
        }
        k as i64
    }

    proptest! {
        #[test]
        fn integer_lookup_matches_float_scan(bits in 0u64..(1 << 53), theta in 0.05f64..0.95) {
            let t = LawTables::new(PerturbationLaw::geometric(theta, theta)).unwrap();
            let u = bits as f64 / (1u64 << 53) as f64;
            prop_assert_eq!(t.sample_dy(bits), float_inverse(&t.y_cdf, u));
            prop_assert_eq!(t.sample_abs(bits), float_inverse(&cumulative(&t.abs_pmf), u));
        }

        #[test]
        fn lookup_agrees_near_cuts(k in 0usize..30, off in -3i64..3) {
            let t = LawTables::new(PerturbationLaw::geometric(0.5, 0.5)).unwrap();
            let Some(&c) = t.y_cuts.cuts.get(k) else { return Ok(()) };
            let bits = (c as i64 + off).clamp(0, (1 << 53) - 1) as u64;
            let u = bits as f64 / (1u64 << 53) as f64;
            prop_assert_eq!(t.sample_dy(bits), float_inverse(&t.y_cdf, u));
        }

        #[test]
        fn open_threshold_is_exact(bits in 0u64..(1 << 53), p in 0.0f64..=1.0) {
            let u = bits as f64 / (1u64 << 53) as f64;
            prop_assert_eq!(u < p, bits < unit_threshold(p));
        }
    }

    #[test]
    fn geometric_tables_match_normalized_weights() {
        let t = LawTables::new(PerturbationLaw::geometric(0.5, 0.5)).unwrap();
        // q = 0.25, c = 0.75 / 1.25 = 0.6
        assert!((t.dx_pmf(0) - 0.6).abs() < 1e-15);
        assert!((t.dx_pmf(1) - 0.15).abs() < 1e-15);
        assert!((t.dx_pmf(-1) - 0.15).abs() < 1e-15);
        assert!((t.dy_pmf(0) - 0.5).abs() < 1e-15);
        assert!((t.dy_pmf(1) - 0.25).abs() < 1e-15);
        assert!((t.dy_pmf(2) - 0.125).abs() < 1e-15);
        assert_eq!(t.dy_pmf(-1), 0.0);
    }

    #[test]
    fn tables_sum_to_one() {
        for law in [
            PerturbationLaw::geometric(0.5, 0.5),
            PerturbationLaw::geometric(0.1, 0.05),
            PerturbationLaw::GaussianFloor {
                sigma_x: 1.5,
                sigma_y: 0.7,
            },
            PerturbationLaw::point_mass(),
        ] {
            let t = LawTables::new(law).unwrap();
            let sx: f64 = (-t.dx_support()..=t.dx_support()).map(|j| t.dx_pmf(j)).sum();
            let sy: f64 = (0..=t.dy_support()).map(|k| t.dy_pmf(k)).sum();
            assert!((sx - 1.0).abs() < 1e-12, "{law:?}: {sx}");
            assert!((sy - 1.0).abs() < 1e-12, "{law:?}: {sy}");
            for j in 1..=t.dx_support() {
                assert_eq!(t.dx_pmf(j), t.dx_pmf(-j));
            }
            assert!(t.zero_mass() > 0.0);
        }
    }

    #[test]
    fn tail_bound_examples() {
        let law = PerturbationLaw::geometric(0.5, 0.5);
        assert_eq!(law_tail_bound(&law, 0), 1.0);
        // Y tail 2^-10 dominates the X tail 1.6 * 4^-10.
        assert!((law.y_tail(10) - 2f64.powi(-10)).abs() < 1e-18);
        assert!((law_tail_bound(&law, 10) - 9.765625e-4).abs() < 1e-15);
        assert!((law.x_tail(4) - 0.00625).abs() < 1e-15);
        let (c0, c1) = law.tail_constants();
        for n in 0..40 {
            assert!(law_tail_bound(&law, n) <= c0 * (-c1 * n as f64).exp() + 1e-15);
        }
    }

    #[test]
    fn gaussian_tail_constants_dominate() {
        let law = PerturbationLaw::GaussianFloor {
            sigma_x: 2.0,
            sigma_y: 1.0,
        };
        let (c0, c1) = law.tail_constants();
        for n in 0..60 {
            assert!(law_tail_bound(&law, n) <= c0 * (-c1 * n as f64).exp());
        }
    }

    #[test]
    fn variates_are_deterministic() {
        let cfg = ModelConfig::standard(7);
        let s = LatticeSite::new(3, 4);
        assert_eq!(site_variates(&cfg, s), site_variates(&cfg, s));
    }

    #[test]
    fn point_mass_selfcheck_is_trivial() {
        let r = pmf_selfcheck(&PerturbationLaw::point_mass(), 10_000, 1, 0.01).unwrap();
        assert_eq!(r.dx.p_value, 1.0);
        assert_eq!(r.dy.p_value, 1.0);
        assert_eq!(r.dx.observed, vec![10_000]);
        assert!(!r.flagged);
    }

    #[test]
    fn selfcheck_rejects_small_runs() {
        assert!(pmf_selfcheck(&PerturbationLaw::point_mass(), 100, 1, 0.01).is_err());
    }

    #[test]
    fn dy_threshold_agrees_with_sampling() {
        let s = FieldSampler::new(ModelConfig::standard(11)).unwrap();
        let keys = s.row_keys(-5);
        for x in -500..500 {
            let dy = s.dy(&keys, x);
            for k in 0..8 {
                assert_eq!(s.dy_at_least(&keys, x, k), dy >= k);
            }
        }
    }
}
