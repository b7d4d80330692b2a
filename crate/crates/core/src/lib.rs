//! Throughput, stability and detection models for two-stage compressive
//! random access.
//!
//! * [`specfun`]: Lambert W, Poisson CDF, Gaussian tail.
//! * [`analytic`]: closed-form means, steady state, throughputs and drift.
//! * [`sim`]: session-level Monte Carlo with reproducible ChaCha streams.
//! * [`signal`]: complex-baseband preamble model, ML pairwise trials, spark.

pub mod analytic;
pub mod error;
pub mod params;
pub mod signal;
pub mod sim;
pub mod specfun;

pub use error::{Error, Result};
pub use params::ProtocolParams;
pub use sim::{Mode, Scheme, SimConfig, ThroughputEstimate};
