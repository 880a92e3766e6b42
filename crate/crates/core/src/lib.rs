//! Run-of-river hydropower FCR simulation toolkit.
//!
//! Compares a fixed-speed Kaplan unit, two Kaplan + battery hybrids and a
//! variable-speed propeller unit delivering frequency containment reserve,
//! and reports tracking, wear and efficiency indicators.

// `!(x > 0.0)` is how validation rejects NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cam;
pub mod control;
pub mod error;
pub mod hillchart;
pub mod kpi;
pub mod physics;
pub mod plant;
pub mod scenario;
pub mod search;
pub mod surrogate;

pub use error::{Error, Result};
