//! Permutation tests, bootstrap intervals and sample-size stability.

mod bootstrap;
mod mantel;
mod stability;

pub use bootstrap::{bootstrap_pga, percentile_type7, BootstrapCI, MAX_REDRAWS};
pub use mantel::{mantel_test, mantel_test_with, Alternative, MantelResult};
pub use stability::{stability_sweep, StabilityRow, MIN_SUBSAMPLE};
