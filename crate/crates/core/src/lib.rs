//! Anchor-free integrity monitoring for multi-robot swarms.
//!
//! Robots reconstruct sparse localization errors (GNSS spoofing, faults) from
//! noisy inter-robot ranges with a distributed sequential-convex / ADMM
//! solver, then flag robots whose reconstructed error exceeds a threshold.

pub mod attack;
pub mod blockvec;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod monitor;
pub mod rng;
pub mod runtime;
pub mod simworld;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};
