//! Modular health indicators: one denoising LSTM autoencoder per sensor,
//! a weighted joint indicator and a streaming engine that calibrates on a
//! burn-in prefix and then flags readings outside the learned region.

pub mod component;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod nn;
pub mod runlog;
pub mod stats;
pub mod supervisor;

pub use error::{Error, Result};
