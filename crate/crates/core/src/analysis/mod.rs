//! Statistics on simulated output: survival tails, symmetry and i.i.d.
//! diagnostics, diffusive-scaling tests, η counts and number variance.
//!
//! Everything here is deterministic given its inputs and, where resampling
//! is involved, an explicit seed.

pub mod diagnostics;
pub mod hyperuniform;
pub mod scaling;
pub mod stats;
pub mod survival;

pub use diagnostics::{exponential_tail, iid_diagnostics, symmetry_test, IidReport, SymmetryReport};
pub use hyperuniform::{fit_box_counts, hyperuniformity_fit, poisson_control, HyperuniformityFit};
pub use scaling::{
    donsker_test, eta_statistic, gaussian_marginal_test, random_walk_control, DonskerReport, EtaQuery, EtaReport,
    Scaling,
};
pub use stats::{LineFit, TestResult};
pub use survival::{
    level_ratio, log_grid, product_limit, survival_estimate, tail_exponent, tail_exponent_bootstrap, SurvivalCurve,
    TailFit,
};
