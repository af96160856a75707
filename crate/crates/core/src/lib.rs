//! Motion synthesis controlled by text and sparse joint trajectories.

pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod motion;
pub mod mtt;
pub mod optim;
pub mod refine;
pub mod schedule;
pub mod text;
pub mod vqvae;
pub mod wire;

pub use error::{Error, Result};
