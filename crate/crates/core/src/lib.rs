//! Koopman-operator (EDMD) and wavelet feature extraction for quasi-periodic
//! signals, transformer and RNN classifiers trained on those features, and the
//! experiment pipeline that compares them on ECG-like data.

pub mod error;
pub mod exec;
pub mod koopman;
pub mod models;
pub mod pipeline;
pub mod signal;
pub mod wavelet;

pub use error::{Error, Result};
pub use exec::Exec;
