//! Chunked-learning laboratory.
//!
//! Continual learning with the distribution shift removed: a learner sees a
//! sequence of identically distributed chunks of data, trains on one chunk
//! at a time, and never revisits a chunk. This crate provides
//!
//! * [`data`]: datasets, synthetic generators and chunk-stream builders,
//! * [`model`]: a from-scratch MLP over flat parameter vectors and a
//!   ridge-capable least-squares solver,
//! * [`trainer`]: chunked SGD (standard and online regimes) with an
//!   experience-replay baseline,
//! * [`averaging`]: per-chunk mean / EMA weight averaging,
//! * [`linear_oracle`]: sequential Bayesian linear regression, least-squares
//!   weight averaging and the approximation bound relating the two,
//! * [`metrics`]: accuracy matrices, forgetting, stability gap and the
//!   chunking-proportion decomposition,
//! * [`experiment`]: the sweep protocols shared by the CLI and the demo.

pub mod averaging;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod linear_oracle;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
