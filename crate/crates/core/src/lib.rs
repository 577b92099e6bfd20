//! Bayesian nonparametric time-series segmentation with hierarchical
//! Dirichlet process hidden Markov models: the plain HDP-HMM, the sticky and
//! disentangled-sticky variants, and the recurrent sticky model whose
//! self-persistence depends on the previous observation through a logistic
//! regression.

pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod emissions;
pub mod error;
pub mod hdp;
pub mod kernels;
pub mod linalg;
pub mod recurrence;
pub mod samplers;
pub mod verify;

pub use data::ObservationSequence;
pub use error::{Error, Result};
