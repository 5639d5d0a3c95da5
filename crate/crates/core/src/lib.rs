//! Forecasting and simulation engine for deciding when to disable ("wire off")
//! a degraded vendor.

pub mod availability;
pub mod baseline;
pub mod data;
pub mod decision;
pub mod diagnostics;
pub mod behavior;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod wiredoff;
pub mod wiredon;

pub use error::{Error, Result};
