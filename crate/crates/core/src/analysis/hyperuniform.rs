//! Number-variance scaling of box counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use super::stats::fit_line;
use crate::error::{Error, Result};
use crate::field::derive_seed;
use crate::process::BoxCountStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperuniformityFit {
    /// Slope of log variance against log side.
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub ci: (f64, f64),
}

/// Fits `ln Var = intercept + alpha ln side` over `(side, variance)` pairs.
pub fn hyperuniformity_fit(points: &[(i64, f64)]) -> Result<HyperuniformityFit> {
    if points.len() < 5 {
        return Err(Error::InsufficientSamples {
            needed: 5,
            got: points.len(),
        });
    }
    let lo = points.iter().map(|p| p.0).min().unwrap_or(0);
    let hi = points.iter().map(|p| p.0).max().unwrap_or(0);
    if lo <= 0 || hi < 10 * lo {
        return Err(Error::Degenerate(format!("sides {lo}..{hi} do not span a decade")));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Degenerate(format!("variance {} at side {}", p.1, p.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let f = fit_line(&xs, &ys)?;
    Ok(HyperuniformityFit {
        alpha: f.slope,
        intercept: f.intercept,
        r2: f.r2,
        ci: (f.slope - 1.96 * f.slope_se, f.slope + 1.96 * f.slope_se),
    })
}

/// Fit on the counts of `V` (collisions merged).
pub fn fit_box_counts(stats: &[BoxCountStats]) -> Result<HyperuniformityFit> {
    hyperuniformity_fit(&stats.iter().map(|s| (s.side, s.variance)).collect::<Vec<_>>())
}

/// Poisson counts with the same mean and replica number as each entry of
/// `stats`; a control whose variance scales with area.
pub fn poisson_control(stats: &[BoxCountStats], seed: u64) -> Result<Vec<BoxCountStats>> {
    stats
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s.side as u64));
            let law = Poisson::new(s.mean).map_err(|e| Error::Degenerate(format!("Poisson mean {}: {e}", s.mean)))?;
            let counts: Vec<u64> = (0..s.replicas).map(|_| law.sample(&mut rng) as u64).collect();
            let n = counts.len() as f64;
            let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
            let variance = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(BoxCountStats {
                side: s.side,
                replicas: s.replicas,
                mean,
                variance,
                multiplicity_mean: mean,
                multiplicity_variance: variance,
                multiplicity_counts: counts.clone(),
                counts,
            })
        })
        .collect()
}
