//! Witness-certified KL rates and complexity-charged model comparison for
//! two-party, two-setting Bell experiments.
//!
//! The pipeline runs from raw coincidence counts to a CHSH witness
//! certificate in bits per trial, maximum-likelihood fits of five model
//! classes, and BIC/AIC comparisons with bootstrap and simulation studies.

pub mod cli;
pub mod error;
pub mod fit;
pub mod formats;
pub mod manifest;
pub mod montecarlo;
pub mod selection;
pub mod tables;
pub mod witness;

pub use error::{Error, Result};
