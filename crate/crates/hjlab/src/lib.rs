//! Finite-difference laboratory for the viscous equation
//! `u_t - lap(u) + |grad u|^m = f` on intervals and rectangles, with relaxed
//! Dirichlet and state-constraint boundary behavior, long-time diagnostics,
//! and a stochastic-control cross check.

pub mod analysis;
pub mod config;
pub mod control;
pub mod domain;
pub mod ergodic;
pub mod error;
pub mod evolve;
pub mod oracle1d;
pub mod runner;
pub mod scheme;
pub mod stationary;

pub use error::{Error, Result};
