//! Identification of discrete-time MIMO LTI state-space models from
//! periodically excited, noise-corrupted input/output samples.
//!
//! The pipeline estimates frequency-domain coefficient matrices by
//! projecting the samples onto an orthogonal sinusoid basis, recovers the
//! system order and the `(A, B, C, D)` quadruple by frequency-domain
//! subspace identification, and reconstructs the process/measurement/input
//! noise covariances from lagged residual correlations. Both inputs and
//! outputs may be noisy (errors-in-variables), and the excitation can be
//! any discrete periodic signal.

pub mod covariance;
pub mod error;
pub mod excitation;
pub mod fft;
pub mod isp;
pub mod linalg;
pub mod lti;
pub mod metrics;
pub mod subspace;

pub use error::{Error, Result};
