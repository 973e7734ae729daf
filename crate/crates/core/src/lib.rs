//! Privacy-drift workbench core.
//!
//! Trains a small dense classifier incrementally over four non-IID splits
//! (centrally or through simulated FedAvg), tracks membership-inference AUC
//! after every phase and correlates it with training accuracy.

pub mod attack;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod schedule;
pub mod seed;

pub use error::{Error, Result};
