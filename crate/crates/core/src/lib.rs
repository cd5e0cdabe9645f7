//! Route choice modeling with anchor-based cross-nested path-size logit.
//!
//! The crate covers the whole chain from a raw road network and GPS trips to
//! fitted choice models: speed estimation, built-environment complexity
//! factors, Louvain anchor communities, choice set generation, per-route
//! features and maximum-likelihood estimation.

pub mod anchors;
pub mod choiceset;
pub mod cnpsl;
pub mod complexity;
pub mod error;
pub mod features;
pub mod netgraph;
pub mod pipeline;
pub mod synth;
pub mod traffic;

pub use error::{Error, Result};
