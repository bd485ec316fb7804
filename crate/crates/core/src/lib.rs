//! Biodiversity shadow-pricing engine.
//!
//! Builds marginal biodiversity recovery cost (MBRC) curves from gridded
//! habitat, species and land-cost data via greedy cost-effectiveness
//! prioritization, answers target-compatible shadow-price queries, and
//! prices project impacts for cost-benefit analysis.

pub mod cba;
pub mod curve;
pub mod error;
pub mod package;
pub mod prioritizer;
pub mod raster;
pub mod sar;
pub mod scenario;
pub mod synth;
pub mod testkit;

pub use error::{Error, Result};
