//! Robust adaptive dictionary pair learning.
//!
//! Learns per-class synthesis/analysis dictionary pairs with l2,1-robust
//! fitting, adaptive within-class reconstruction weights and a
//! discriminating mean term, then classifies by the smallest class-wise
//! reconstruction residual.

pub mod baselines;
pub mod classify;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
