use rand::Rng;

use crate::config::UpdateRule;
use crate::data::draw_negatives;
use crate::error::{Error, Result};
use crate::model::{BetaSchedule, BundleGrads, BundleView, ElboOptions, GateMode, LossMode};
use crate::nn::{adam_step, sgd_step, AdamState, DenseNet};
use crate::scalar::Scalar;

use super::{ClientState, ClientUpload};

/// Knobs of one local update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSettings<S> {
    pub epochs: usize,
    pub lr: S,
    pub dropout: S,
    pub gate: GateMode<S>,
    pub rule: UpdateRule,
    pub loss: LossMode,
    /// Global step of the first local epoch; epoch `e` uses `beta(first_step + e)`.
    pub first_step: u64,
    /// Redraw this many negatives per positive at every epoch (masked loss only).
    pub resample_negatives: Option<usize>,
}

/// Runs `settings.epochs` local epochs for `client` starting from the shared
/// parameters and returns the accumulated shared-parameter gradients.
///
/// The shared parameters are trained on working copies that are dropped on
/// return; the client's private encoder and gate are updated in place. Under
/// [`UpdateRule::Adam`] the working copies are stepped by an Adam state that
/// starts fresh every call, otherwise by gradient descent.
/// A non-finite loss or gradient aborts with [`Error::NonFinite`]; private
/// updates from the epochs completed before that point are kept.
pub fn client_update<S: Scalar, R: Rng + ?Sized>(
    client: &mut ClientState<S>,
    global_encoder: &DenseNet<S>,
    decoder: &DenseNet<S>,
    schedule: &BetaSchedule,
    settings: &LocalSettings<S>,
    rng: &mut R,
) -> Result<ClientUpload<S>> {
    if settings.epochs == 0 {
        return Err(Error::config("local_epochs", "must be >= 1"));
    }
    let m = global_encoder.in_dim();
    if client.gate.items() != m {
        return Err(Error::dim("client items", m, client.gate.items()));
    }
    let r_u = client.interactions();
    let mut phi = global_encoder.clone();
    let mut theta = decoder.clone();
    let mut acc_phi = phi.zero_grads("global_encoder");
    let mut acc_theta = theta.zero_grads("decoder");
    let mut grads = BundleGrads {
        global_encoder: phi.zero_grads("global_encoder"),
        local_encoder: client.local_encoder.zero_grads("local_encoder"),
        gate: vec![S::zero(); client.gate.psi().len()],
        decoder: theta.zero_grads("decoder"),
    };
    let learned_gate = matches!(settings.gate, GateMode::Learned);
    // moments for the working copies live only as long as the copies
    let mut working_opts = match settings.rule {
        UpdateRule::Adam => Some((AdamState::for_net(&phi), AdamState::for_net(&theta))),
        UpdateRule::PlainSgd => None,
    };
    let mut trace = Vec::with_capacity(settings.epochs);
    let fixed_candidates = match settings.loss {
        LossMode::Masked if settings.resample_negatives.is_none() => Some(client.candidates()),
        _ => None,
    };

    for e in 0..settings.epochs {
        let beta = S::of(schedule.at(settings.first_step + e as u64));
        let fresh = match (settings.loss, settings.resample_negatives) {
            (LossMode::Masked, Some(per_positive)) => {
                let negs = draw_negatives(&client.positives, m, per_positive, client.heldout, rng);
                let mut c = client.positives.clone();
                c.extend(negs);
                c.sort_unstable();
                c.dedup();
                Some(c)
            }
            _ => None,
        };
        let opts = ElboOptions {
            beta,
            train: true,
            dropout: settings.dropout,
            gate: settings.gate,
            candidates: fresh.as_deref().or(fixed_candidates.as_deref()),
        };

        grads.zero();
        let view = BundleView {
            global_encoder: &phi,
            local_encoder: &client.local_encoder,
            gate: &client.gate,
            decoder: &theta,
        };
        let (value, tape) = view.elbo(&r_u, &opts, rng)?;
        view.elbo_backward(&tape, &mut grads)?;
        // the sgd and adam steps below reject non-finite network gradients
        if grads.gate.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                tensor: "gate.psi".into(),
            });
        }

        acc_phi.add_assign(&grads.global_encoder)?;
        acc_theta.add_assign(&grads.decoder)?;
        match working_opts.as_mut() {
            Some((phi_opt, theta_opt)) => {
                adam_step(&mut phi, phi_opt, &grads.global_encoder, settings.lr)?;
                adam_step(&mut theta, theta_opt, &grads.decoder, settings.lr)?;
            }
            None => {
                sgd_step(&mut phi, &grads.global_encoder, settings.lr)?;
                sgd_step(&mut theta, &grads.decoder, settings.lr)?;
            }
        }

        match settings.rule {
            UpdateRule::Adam => {
                let opt = client
                    .encoder_opt
                    .get_or_insert_with(|| AdamState::for_net(&client.local_encoder));
                adam_step(
                    &mut client.local_encoder,
                    opt,
                    &grads.local_encoder,
                    settings.lr,
                )?;
                if learned_gate {
                    let opt = client
                        .gate_opt
                        .get_or_insert_with(|| AdamState::new(&[client.gate.psi().len()]));
                    opt.update(
                        &mut [client.gate.psi_mut()],
                        &[&grads.gate],
                        |_| "gate.psi".to_string(),
                        settings.lr,
                    )?;
                }
            }
            UpdateRule::PlainSgd => {
                sgd_step(&mut client.local_encoder, &grads.local_encoder, settings.lr)?;
                if learned_gate {
                    for (p, &g) in client.gate.psi_mut().iter_mut().zip(&grads.gate) {
                        *p -= settings.lr * g;
                    }
                }
            }
        }
        trace.push(value.to_f64_lossy());
    }

    let scores = BundleView {
        global_encoder: &phi,
        local_encoder: &client.local_encoder,
        gate: &client.gate,
        decoder: &theta,
    }
    .predict_scores(&r_u, settings.gate)?;
    Ok(ClientUpload {
        client: client.id,
        grad_global_encoder: acc_phi,
        grad_decoder: acc_theta,
        scores,
        elbo_trace: trace,
    })
}
