//! Gaussian quasi-maximum-likelihood estimation for GARCH(p,q) processes with
//! light- or heavy-tailed innovations.
//!
//! The crate is organised bottom-up:
//!
//! - [`innovations`]: standardized noise laws, seeded streams and the
//!   heavy-tail normalizing sequence `a_n`.
//! - [`garch`]: parameters, path simulation and stationarity checks.
//! - [`filter`]: the observable volatility filter, its ψ-series form and the
//!   parameter gradient.
//! - [`qmle`]: the quasi-likelihood, its score and the constrained maximizer.
//! - [`sre`]: the polynomial stochastic recurrence embedding of the
//!   volatility/gradient state, spectral radii and top Lyapunov exponents.
//! - [`tails`]: Hill estimation, Breiman ratios, empirical spectral measure and
//!   the blocks extremal-index estimator.
//! - [`experiments`]: Monte-Carlo drivers, configuration and persistence used
//!   by the `garch-stable` command line tool.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod garch;
pub mod innovations;
pub mod qmle;
pub mod sre;
pub mod stats;
pub mod tails;

pub use error::{Error, Result};
pub use garch::{GarchParams, GarchPath};
pub use innovations::{InnovationModel, SeedSpec};
