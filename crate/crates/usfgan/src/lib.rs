//! Neural vocoder with a factorized source-excitation / resonance-filtering
//! generator, adversarial training, and spectral-envelope regularization.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod envelope;
pub mod error;
pub mod excitation;
pub mod extract;
pub mod features;
pub mod losses;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod plot;
pub mod store;
pub mod synth;
pub mod synthdata;
pub mod trainer;
pub mod wav;

pub use error::{Error, Result};
