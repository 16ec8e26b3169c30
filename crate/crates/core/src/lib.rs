//! MAC-level throughput model for single-user 802.11ax and 802.11ac
//! transmission with two-level (A-MSDU inside A-MPDU) aggregation.
//!
//! - [`params`]: protocol and overhead constants.
//! - [`geometry`]: frame sizes, airtime and feasibility limits.
//! - [`exact`]: exact cycle throughput, plan search and a Monte-Carlo check.
//! - [`approx`]: continuous model, closed-form optimum and window crossovers.
//! - [`report`]: parameter sweeps, protocol comparison and CSV/JSON output.

pub mod approx;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod params;
pub mod report;

pub use error::{Error, Result};
