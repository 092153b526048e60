//! Causal-subgraph inference for labeled graphs.
//!
//! A two-channel variational graph autoencoder splits each adjacency into a
//! causal and a spurious edge distribution, trained inside a multi-step
//! counterfactual distillation loop. The crate also carries the task GNN the
//! explainer interrogates, synthetic and on-disk dataset loaders, and a small
//! dense-matrix autodiff engine everything runs on.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod data;
pub mod diffusion;
pub mod gnn;
pub mod graph;
pub mod model;

pub use error::{CiderError, Result};
