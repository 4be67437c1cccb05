//! Kernel density estimation for grouped (binned) data.
//!
//! Bin counts are turned back into continuous samples by jittering within
//! bins, the bandwidth is chosen by a cross-validation pilot refined with a
//! smoothed bootstrap, and line-transect densities at zero distance are
//! estimated by reflection with bootstrap confidence intervals.

pub mod bandwidth;
pub mod error;
pub mod grouped;
pub mod inference;
pub mod kernel;
pub mod optimize;
mod pairsum;
pub mod simulation;
pub mod streams;

#[cfg(test)]
mod testutil;

pub use bandwidth::{select_bandwidth, BandwidthSelection, SelectorConfig};
pub use error::{Error, Result};
pub use grouped::{read_grouped_csv, stake_data, ContinuousSample, GroupedSample, Provenance};
pub use inference::{bootstrap_pivots, estimate_d, Interval, IntervalConfig, TransectEstimate};
pub use kernel::{kde, DensityEstimate};
pub use optimize::SearchRange;
pub use simulation::{builtin_model, run_bandwidth_study, MixtureModel, StudyConfig, StudyResult};
pub use streams::{Purpose, RngStreams};
