//! A spectrally truncated laboratory for Gaussian calculus on Hilbert
//! spaces: the Ornstein-Uhlenbeck semigroup evaluated by Mehler and
//! density kernels, commutator representation formulas and norm sweeps,
//! closed-form Gaussian integral identities with Monte Carlo oracles, and
//! a characteristics/particle solver for the continuity equation with
//! weak-form verification.
//!
//! All operators are diagonal in the eigenbasis of the covariance
//! operator Q, so a truncation of dimension n with eigenvalues
//! lambda_1 >= ... >= lambda_n > 0 carries the whole construction.

pub mod catalog;
pub mod commutator;
pub mod config;
pub mod cylinder;
pub mod error;
pub mod estimate;
pub mod identities;
pub mod quadrature;
pub mod report;
pub mod semigroup;
pub mod spectral;
pub mod suites;
pub mod transport;

pub use error::{OulabError, Result};
pub use estimate::Estimate;
