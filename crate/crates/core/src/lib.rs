//! Counterfactual explanations evaluated through necessity and sufficiency.
//!
//! Modules build on each other bottom-up: [`tabular`] encodes instances,
//! [`model`] scores them, [`cfgen`] searches for counterfactuals,
//! [`attribution`] and [`metrics`] summarize them, and [`causality`] provides a
//! brute-force oracle for small models. [`synth`] generates benchmark data with
//! known ground truth.

pub mod attribution;
pub mod causality;
pub mod cfgen;
pub mod error;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
