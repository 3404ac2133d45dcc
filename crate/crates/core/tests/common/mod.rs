//! Brute-force references built on per-site variates alone.

#![allow(dead_code)]

use std::collections::BTreeMap;

use howard_core::{margin_depths, site_variates, FieldSampler, LatticeSite, ModelConfig, PerturbationLaw, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row `y` as column -> sorted sources.
pub type OracleRow = BTreeMap<i64, Vec<LatticeSite>>;

/// Every landing in `spec`, scanning `factor` times the production margins.
pub fn brute_rows(cfg: &ModelConfig, spec: &WindowSpec, factor: i64) -> Vec<(i64, OracleRow)> {
    let m = margin_depths(&cfg.law, spec).unwrap();
    let sampler = FieldSampler::new(*cfg).unwrap();
    let mut rows: Vec<(i64, OracleRow)> = (spec.y_lo..=spec.y_hi).map(|y| (y, OracleRow::new())).collect();
    for b in spec.y_lo - factor * m.dy..=spec.y_hi {
        for a in spec.x_lo - factor * m.dx..=spec.x_hi + factor * m.dx {
            let v = sampler.variates(LatticeSite::new(a, b));
            if !v.open {
                continue;
            }
            let (x, y) = (a + v.dx, b + v.dy);
            if spec.contains(LatticeSite::new(x, y)) {
                rows[(y - spec.y_lo) as usize]
                    .1
                    .entry(x)
                    .or_default()
                    .push(LatticeSite::new(a, b));
            }
        }
    }
    for (_, row) in &mut rows {
        for sources in row.values_mut() {
            sources.sort();
        }
    }
    rows
}

/// Rows of the production window that differ from the deeper scan, in
/// points, provenance or special flags.
pub fn window_mismatches(cfg: &ModelConfig, spec: &WindowSpec) -> usize {
    let w = howard_core::materialize_window(cfg, spec).unwrap();
    let oracle = brute_rows(cfg, spec, 4);
    w.rows
        .iter()
        .zip(&oracle)
        .filter(|(row, (y, expect))| {
            let same = row.y == *y
                && row.xs.iter().copied().eq(expect.keys().copied())
                && row.xs.iter().enumerate().all(|(i, x)| {
                    let mut got = row.provenance[i].clone();
                    got.sort();
                    got == expect[x] && row.special[i] == site_variates(cfg, LatticeSite::new(*x, *y)).is_special()
                });
            !same
        })
        .count()
}

/// `n` steps of `h` from `start`, read off one brute-force scan of a window
/// wide enough to contain every nearest-point search (widened on demand).
pub fn brute_path(cfg: &ModelConfig, start: LatticeSite, n: usize) -> Vec<LatticeSite> {
    let mut half = 64;
    'widen: loop {
        let spec = WindowSpec::new(start.x - half, start.x + half, start.y + 1, start.y + n as i64 + 1).unwrap();
        let rows = brute_rows(cfg, &spec, 4);
        let mut out = vec![start];
        for k in 0..n {
            let u = out[k];
            let row = &rows[k].1;
            let Some(j) = row.keys().map(|&x| (x - u.x).abs()).min() else {
                half *= 2;
                continue 'widen;
            };
            if u.x - j < spec.x_lo || u.x + j > spec.x_hi {
                half *= 2;
                continue 'widen;
            }
            let left = row.contains_key(&(u.x - j));
            let right = row.contains_key(&(u.x + j));
            let x = if j == 0 {
                u.x
            } else if left && right {
                if site_variates(cfg, u).tie_sign > 0 {
                    u.x + j
                } else {
                    u.x - j
                }
            } else if right {
                u.x + j
            } else {
                u.x - j
            };
            out.push(LatticeSite::new(x, u.y + 1));
        }
        return out;
    }
}

/// Seeded random models and windows of up to 40 x 40.
pub fn fixtures(count: usize, seed: u64) -> Vec<(ModelConfig, WindowSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let law = PerturbationLaw::geometric(rng.random_range(0.3..0.9), rng.random_range(0.3..0.9));
            let cfg = ModelConfig::new(rng.random(), rng.random_range(0.2..0.95), law).unwrap();
            let x_lo = rng.random_range(-1000..1000);
            let y_lo = rng.random_range(-1000..1000);
            let spec = WindowSpec::new(
                x_lo,
                x_lo + rng.random_range(4..40),
                y_lo,
                y_lo + rng.random_range(4..40),
            )
            .unwrap();
            (cfg, spec)
        })
        .collect()
}

pub fn window_crossings(cfg: &ModelConfig, spec: &WindowSpec) -> usize {
    howard_core::network::window_crossings(cfg, spec).unwrap().violations
}

/// Paths from `starts` traced jointly on the lazy field: returns the number
/// of pairs that separate after sharing a vertex.
pub fn absorption_violations(cfg: &ModelConfig, starts: &[LatticeSite], n: usize) -> usize {
    use howard_core::network::trace_path_on;
    use howard_core::{LazyField, LazyOptions};
    let mut field = LazyField::new(*cfg, LazyOptions::default()).unwrap();
    // Independent traces, one lane each, so a merge is never imposed.
    let traces: Vec<_> = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| trace_path_on(&mut field, i, s, n))
        .collect();
    let mut violations = 0;
    for (i, a) in traces.iter().enumerate() {
        for b in &traces[i + 1..] {
            if let Some(k) = (0..a.vertices.len().min(b.vertices.len())).find(|&k| a.vertices[k] == b.vertices[k]) {
                violations += (k..a.vertices.len().min(b.vertices.len()))
                    .filter(|&m| a.vertices[m] != b.vertices[m])
                    .count();
            }
        }
    }
    violations
}
