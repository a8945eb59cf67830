//! Federated simulation: client sampling, local updates, gradient noise,
//! server aggregation, and the federated and centralised training loops.
//!
//! Only [`ClientUpload`] values cross from a client to the server. They carry
//! gradients for the shared encoder and decoder, the client's predicted
//! scores and its ELBO trace; private encoders and gates stay in
//! [`ClientState`].

mod client;
mod noise;
mod runner;
mod sampler;
mod server;

pub use client::{client_update, LocalSettings};
pub use noise::{add_gradient_noise, NoiseConfig};
pub use runner::{
    evaluate, run_central, run_federated, NoopObserver, Observer, RoundReport, TrainingRun,
};
pub use sampler::sample_clients;
pub use server::{aggregate, apply_update, GradientSum};

pub use crate::config::UpdateRule;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BundleView, GateParams, ModelShape};
use crate::nn::{AdamState, DenseNet, Gradients};
use crate::scalar::Scalar;

/// Parameters and optimiser state held by the server between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState<S> {
    pub global_encoder: DenseNet<S>,
    pub decoder: DenseNet<S>,
    pub encoder_opt: AdamState<S>,
    pub decoder_opt: AdamState<S>,
    /// Completed rounds.
    pub round: u64,
    /// Participants of the last completed round.
    pub previous: BTreeSet<usize>,
}

impl<S: Scalar> ServerState<S> {
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        Self::from_parts(shape.global_encoder(seed)?, shape.decoder(seed)?)
    }

    pub fn from_parts(global_encoder: DenseNet<S>, decoder: DenseNet<S>) -> Result<Self> {
        if global_encoder.out_dim() != 2 * decoder.in_dim() {
            return Err(Error::dim(
                "encoder head",
                2 * decoder.in_dim(),
                global_encoder.out_dim(),
            ));
        }
        if decoder.out_dim() != global_encoder.in_dim() {
            return Err(Error::dim(
                "decoder output",
                global_encoder.in_dim(),
                decoder.out_dim(),
            ));
        }
        Ok(Self {
            encoder_opt: AdamState::for_net(&global_encoder),
            decoder_opt: AdamState::for_net(&decoder),
            global_encoder,
            decoder,
            round: 0,
            previous: BTreeSet::new(),
        })
    }

    pub fn items(&self) -> usize {
        self.global_encoder.in_dim()
    }

    pub fn latent(&self) -> usize {
        self.decoder.in_dim()
    }
}

/// One client's private state. Nothing in here is ever sent to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState<S> {
    pub id: usize,
    pub local_encoder: DenseNet<S>,
    pub gate: GateParams<S>,
    /// Created on the first Adam step.
    pub encoder_opt: Option<AdamState<S>>,
    pub gate_opt: Option<AdamState<S>>,
    /// Sorted train positives.
    pub positives: Vec<usize>,
    /// Sampled negatives, used by the masked loss.
    pub negatives: Vec<usize>,
    /// The held-out test item, never drawn as a negative.
    pub heldout: Option<usize>,
}

impl<S: Scalar> ClientState<S> {
    pub fn init(shape: &ModelShape, seed: u64, id: usize, positives: Vec<usize>) -> Result<Self> {
        Self::from_parts(
            id,
            shape.local_encoder(seed, id)?,
            GateParams::zeros(shape.items),
            positives,
        )
    }

    pub fn from_parts(
        id: usize,
        local_encoder: DenseNet<S>,
        gate: GateParams<S>,
        positives: Vec<usize>,
    ) -> Result<Self> {
        if gate.items() != local_encoder.in_dim() {
            return Err(Error::dim(
                "gate items",
                local_encoder.in_dim(),
                gate.items(),
            ));
        }
        if let Some(&bad) = positives.iter().find(|&&i| i >= gate.items()) {
            return Err(Error::dim("positive item", gate.items(), bad + 1));
        }
        if positives.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Logic(format!(
                "client {id}: positives must be strictly increasing"
            )));
        }
        Ok(Self {
            id,
            local_encoder,
            gate,
            encoder_opt: None,
            gate_opt: None,
            positives,
            negatives: Vec::new(),
            heldout: None,
        })
    }

    /// Dense binary interaction row over `items`.
    pub fn interactions(&self) -> Vec<S> {
        let mut r = vec![S::zero(); self.gate.items()];
        for &i in &self.positives {
            r[i] = S::one();
        }
        r
    }

    /// Sorted, deduplicated positives and negatives.
    pub fn candidates(&self) -> Vec<usize> {
        let mut c = self.positives.clone();
        c.extend_from_slice(&self.negatives);
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn view<'a>(&'a self, server: &'a ServerState<S>) -> BundleView<'a, S> {
        BundleView {
            global_encoder: &server.global_encoder,
            local_encoder: &self.local_encoder,
            gate: &self.gate,
            decoder: &server.decoder,
        }
    }
}

/// Everything a client sends to the server after a local update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientUpload<S> {
    pub client: usize,
    /// Gradients of `-L_beta` accumulated over the local epochs.
    pub grad_global_encoder: Gradients<S>,
    pub grad_decoder: Gradients<S>,
    /// Decoder logits at the end of the local update.
    pub scores: Vec<S>,
    pub elbo_trace: Vec<f64>,
}

impl<S: Scalar> ClientUpload<S> {
    pub fn elbo_mean(&self) -> f64 {
        if self.elbo_trace.is_empty() {
            return f64::NAN;
        }
        self.elbo_trace.iter().sum::<f64>() / self.elbo_trace.len() as f64
    }
}
