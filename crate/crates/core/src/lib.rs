//! Differentially private query answering on databases that grow by one
//! record per time step.
//!
//! The crate is organized bottom-up:
//!
//!  - [`db`]: universes, fractional histograms, database streams and linear
//!    queries.
//!  - [`noise`]: seeded, path-addressed randomness, Laplace sampling and the
//!    `ξ_t = c·t^p` noise functions.
//!  - [`accountant`]: basic, CDP and zCDP composition plus the closed-form
//!    privacy ledgers of the sparse-vector family and PMWG.
//!  - [`sparse`]: Above Threshold, Numeric Above Threshold and Numeric Sparse
//!    for growing databases.
//!  - [`pmwg`]: private multiplicative weights with uniform updates on data
//!    arrival.
//!  - [`blackbox`]: static mechanisms (Laplace release, SmallDB, grid ERM)
//!    with their accuracy contracts.
//!  - [`schedulers`]: epoch-based reruns of a static mechanism (fixed
//!    accuracy) and per-step reruns (improving accuracy), including ERMG.
//!  - [`harness`]: stream and workload generation, experiments, metrics and
//!    Monte Carlo privacy audits.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod blackbox;
pub mod db;
pub mod error;
pub mod harness;
pub mod noise;
pub mod pmwg;
pub mod schedulers;
pub mod sparse;

pub use accountant::{PrivacyBudget, PrivacyLedger};
pub use db::{DatabaseStream, Histogram, LinearQuery, QueryEvent, Universe};
pub use error::{Error, Result};
pub use noise::{NoiseFunction, Purpose, RandomSource};
