//! Federated collaborative filtering with a gated dual-encoder VAE.
//!
//! Each simulated client owns a private encoder and gate; the encoder and
//! decoder shared across clients are trained from uploaded gradients. The
//! crate is generic over the floating-point type; the `*64` aliases below are
//! what the command-line tool uses.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod fed;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DenseNet64 = nn::DenseNet<f64>;
pub type AdamState64 = nn::AdamState<f64>;
pub type Gradients64 = nn::Gradients<f64>;
pub type ModelBundle64 = model::ModelBundle<f64>;
pub type GaussianPosterior64 = model::GaussianPosterior<f64>;
pub type GateParams64 = model::GateParams<f64>;
pub type ServerState64 = fed::ServerState<f64>;
pub type ClientState64 = fed::ClientState<f64>;
pub type ClientUpload64 = fed::ClientUpload<f64>;
