//! Gradient descent over ensembles of model particles, with margin
//! diagnostics and an evaluation protocol.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod data;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod optimizer;
pub mod rng;

pub use data::Dataset;
pub use ensemble::{ParticleEnsemble, ResidualTransportMap};
pub use error::{Error, Result};
pub use loss::LossSpec;
pub use model::{ModelKind, ModelSpec, OutputHead, ParamVector};
pub use optimizer::{TrainConfig, TrainTrace};
