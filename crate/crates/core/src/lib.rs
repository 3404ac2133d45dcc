//! Perturbed Howard directed spanning network: exact finite-window
//! realizations, path tracing, renewal decomposition and the statistics used
//! to study its scaling limit.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod explore;
pub mod field;
pub mod network;
pub mod process;
pub mod renewal;

pub use error::{Error, Result};
pub use explore::{LazyField, LazyOptions};
pub use field::{
    derive_seed, mix64, site_variates, FieldSampler, LatticeSite, LawTables, ModelConfig, PerturbationLaw,
    SiteVariates, MASTER_SEED,
};
pub use process::{
    box_counts, is_special, margin_depths, materialize_window, Landscape, Margins, Nearest, RowPoints,
    WindowRealization, WindowSpec,
};
