//! Bayesian clustering of multivariate binary data with an unknown number of
//! Bernoulli mixture components.
//!
//! The weights and success probabilities are integrated out and the sampler
//! works on the number of clusters and the allocations directly. Several
//! tempered copies of the sampler run side by side and exchange states
//! (Metropolis-coupled MCMC); the retained draws of the untempered chain are
//! then relabelled to undo label switching before summarising.

pub mod data;
pub mod error;
pub mod mc3;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod relabel;
pub mod sampler;
pub mod simgen;
pub mod zoo;

pub use error::{Error, Result};
pub use model::{AllocationState, BinaryDataset, Hyperparams, PriorK, ThetaP};
