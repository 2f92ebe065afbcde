//! Contract-based hierarchical resilience management for a simulated sorting line.

pub mod baseline;
pub mod contract;
pub mod harness;
pub mod observer;
pub mod plant;
pub mod rm;
