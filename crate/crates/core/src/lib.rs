//! Respiratory sound classification: audio loading, spectral features,
//! feature selection, classifiers, evaluation and a streaming runtime.

pub mod audio;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod models;
pub mod runtime;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
