//! Product-of-experts variational autoencoder for multi-domain collaborative
//! filtering on implicit feedback.
//!
//! The crate is organized as a pipeline:
//!
//! - [`ingest`] turns rating records into per-domain binary matrices and
//!   produces the user and fold-in splits;
//! - [`numerics`] holds the dense layers, sampling and gradient checking;
//! - [`model`] is the POE-VAE with its objectives;
//! - [`training`] runs Adam with KL annealing and handles checkpoints;
//! - [`evaluation`] computes Recall@K/NDCG@K, baselines and Pareto fronts;
//! - [`synthgen`] generates multi-domain data with a known latent structure;
//! - [`cli`] binds everything into the `poe-rec` command.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
