use crate::config::UpdateRule;
use crate::error::{Error, Result};
use crate::nn::{adam_step, sgd_step, Gradients};
use crate::scalar::Scalar;

use super::{ClientUpload, ServerState};

/// Running sum of uploaded gradients for one aggregation.
///
/// Uploads must be added in non-decreasing client order so the floating-point
/// reduction does not depend on which client finished first.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSum<S> {
    pub global_encoder: Gradients<S>,
    pub decoder: Gradients<S>,
    pub count: usize,
    last_client: Option<usize>,
}

impl<S: Scalar> GradientSum<S> {
    pub fn new(server: &ServerState<S>) -> Self {
        Self {
            global_encoder: server.global_encoder.zero_grads("global_encoder"),
            decoder: server.decoder.zero_grads("decoder"),
            count: 0,
            last_client: None,
        }
    }

    pub fn add(&mut self, upload: &ClientUpload<S>) -> Result<()> {
        if self.last_client.is_some_and(|c| c > upload.client) {
            return Err(Error::Logic(format!(
                "upload of client {} added out of order",
                upload.client
            )));
        }
        self.global_encoder
            .add_assign(&upload.grad_global_encoder)?;
        self.decoder.add_assign(&upload.grad_decoder)?;
        self.last_client = Some(upload.client);
        self.count += 1;
        Ok(())
    }
}

/// Applies the mean of `sum` to the server. Returns `false` (and leaves the
/// server untouched) when no upload was collected.
pub fn apply_update<S: Scalar>(
    server: &mut ServerState<S>,
    mut sum: GradientSum<S>,
    lr: S,
    rule: UpdateRule,
) -> Result<bool> {
    if sum.count == 0 {
        log::warn!(
            "round {}: no successful uploads, skipping aggregation",
            server.round + 1
        );
        return Ok(false);
    }
    let n_s = S::of(sum.count as f64);
    match rule {
        UpdateRule::PlainSgd => {
            let scale = lr / n_s;
            sgd_step(&mut server.global_encoder, &sum.global_encoder, scale)?;
            sgd_step(&mut server.decoder, &sum.decoder, scale)?;
        }
        UpdateRule::Adam => {
            let inv = S::one() / n_s;
            sum.global_encoder.scale(inv);
            sum.decoder.scale(inv);
            adam_step(
                &mut server.global_encoder,
                &mut server.encoder_opt,
                &sum.global_encoder,
                lr,
            )?;
            adam_step(
                &mut server.decoder,
                &mut server.decoder_opt,
                &sum.decoder,
                lr,
            )?;
        }
    }
    Ok(true)
}

/// Sums `uploads` in client-id order and applies the mean.
pub fn aggregate<S: Scalar>(
    server: &mut ServerState<S>,
    uploads: &[ClientUpload<S>],
    lr: S,
    rule: UpdateRule,
) -> Result<bool> {
    let mut ordered: Vec<&ClientUpload<S>> = uploads.iter().collect();
    ordered.sort_by_key(|u| u.client);
    let mut sum = GradientSum::new(server);
    for u in ordered {
        sum.add(u)?;
    }
    apply_update(server, sum, lr, rule)
}
