//! Stochastic multi-pedestrian trajectory prediction.
//!
//! A directed social graph is rebuilt every frame from view cones; a graph
//! network with attention and social gates turns it into per-agent features;
//! a per-step Gaussian latent model with a hierarchical recurrent decoder
//! predicts each agent's next velocity. Training maximizes a β-weighted
//! evidence lower bound; evaluation scores the best of K sampled futures.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod latent;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;

pub use error::{Error, Result};
