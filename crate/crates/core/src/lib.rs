//! Scale-equivariant generative forecasting for financial return series.
//!
//! The crate covers the whole workflow: fractional Gaussian noise synthesis,
//! Hurst exponent estimation, the characteristic-function collapse
//! diagnostic, a Daubechies-4 wavelet front end, a dilated causal network
//! with a conditional normalizing-flow head, spectral regularization,
//! classical baselines, statistical comparison tools and the end-to-end
//! training and evaluation pipeline.

pub mod baselines;
pub mod collapse;
pub mod equivariance;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod nn;
pub mod pipeline;
pub mod series;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod util;
pub mod wavelet;

pub use error::{Error, Result};
