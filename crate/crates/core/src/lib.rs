//! Empirical-process tools for Poisson sampling designs with inclusion
//! probabilities proportional to size.
//!
//! The crate covers the whole pipeline used to study uniform confidence bands
//! for a finite-population distribution function:
//!
//! * [`popgen`]: synthetic superpopulation draws and CSV ingestion,
//! * [`design`]: capped PPS inclusion probabilities, Poisson draws and an
//!   exact enumeration oracle for small populations,
//! * [`empirical`]: Horvitz-Thompson, Hájek and classical empirical processes
//!   on indicator grids,
//! * [`covariance`]: design covariances, their plug-in estimators and limits,
//! * [`gausslim`]: Cholesky-based simulation of the Gaussian limit and its
//!   sup-norm quantiles,
//! * [`bands`]: uniform bands and coverage checks,
//! * [`harness`]: the replicated Monte Carlo study and its reports.
//!
//! With the default `parallel` feature, replicate loops and Gaussian draws run
//! on rayon. Every random quantity comes from a stream keyed by its role, so
//! results do not depend on the number of worker threads.

pub mod bands;
pub mod covariance;
pub mod design;
pub mod empirical;
pub mod error;
pub mod gausslim;
pub mod harness;
pub mod popgen;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
