//! Exact moments, mixing coefficients and block partitions for time-inhomogeneous
//! finite-state Markov chains, with Monte Carlo diagnostics for the Gaussian
//! approximation of their partial sums.
//!
//! The chain law is known, so every moment, mixing coefficient and block inequality is
//! computed exactly by passes over the state space. Sampling is only used for the
//! distributional diagnostics in [`sim`].

// NaN must fail the parameter checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod balance;
pub mod battery;
pub mod blocks;
pub mod chain;
pub mod cli;
pub mod document;
pub mod error;
pub mod linalg;
pub mod mixing;
pub mod moments;
pub mod sim;
pub mod stats;
pub mod verify;

pub use chain::{ChainSpec, JointLaw, KernelSchedule, ObservableSchedule, StateSizes, WeightSchedule};
pub use error::{Error, Result};
