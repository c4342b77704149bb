//! Core models for self-organizing list dynamics.
//!
//! The crate has three layers that build on each other:
//!
//! * [`distributions`] defines the request distributions (power law,
//!   geometric, explicit, truncations) that drive everything else.
//! * [`list`], [`stationary`], and [`chain`] cover the list process
//!   itself: simulation under a replacement policy, exact stationary
//!   laws for small lists, and a generic finite jump-chain solver used
//!   as the independent cross-check for every closed form.
//! * [`exclusion`] and [`coupling`] cover the particle-process view: a
//!   constrained exclusion process on the slot lattice, its stationary
//!   occupancy laws, and the coupled two-list construction that ties
//!   list positions to particle positions.

pub mod chain;
pub mod coupling;
pub mod distributions;
pub mod error;
pub mod exclusion;
pub mod list;
pub mod stationary;

pub use distributions::{Family, RequestDistribution};
pub use error::{Error, Result};
pub use exclusion::{CaepRates, ExclusionState};
pub use list::{CostRecorder, ListState, Policy};
