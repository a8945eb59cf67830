use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dropout, softmax, Activation, DenseNet, Gradients, Tape};
use crate::scalar::Scalar;

use super::gate::{resolve_weights, GateMode, GateParams};
use super::posterior::{
    kl_to_standard_normal, multinomial_log_likelihood, reparameterize_with, standard_normal,
    GaussianPosterior, LOG_PROB_FLOOR, VARIANCE_FLOOR,
};

/// Architecture of one client's model.
///
/// Both encoders map `items -> hidden x (layers - 1) -> 2 * latent`, the
/// decoder maps `latent -> hidden x (layers - 1) -> items`. Hidden layers use
/// `tanh`, heads are linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub items: usize,
    pub latent: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl ModelShape {
    pub fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.items];
        dims.extend(std::iter::repeat_n(
            self.hidden,
            self.layers.saturating_sub(1),
        ));
        dims.push(2 * self.latent);
        dims
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.latent];
        dims.extend(std::iter::repeat_n(
            self.hidden,
            self.layers.saturating_sub(1),
        ));
        dims.push(self.items);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("items", self.items),
            ("latent_dim", self.latent),
            ("hidden_dim", self.hidden),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn global_encoder<S: Scalar>(&self, seed: u64) -> Result<DenseNet<S>> {
        DenseNet::glorot(
            &self.encoder_dims(),
            Activation::Tanh,
            Activation::Identity,
            seed,
            "init.global_encoder",
        )
    }

    pub fn local_encoder<S: Scalar>(&self, seed: u64, client: usize) -> Result<DenseNet<S>> {
        let label = format!("init.local_encoder.{client}");
        DenseNet::glorot(
            &self.encoder_dims(),
            Activation::Tanh,
            Activation::Identity,
            seed,
            &label,
        )
    }

    pub fn decoder<S: Scalar>(&self, seed: u64) -> Result<DenseNet<S>> {
        DenseNet::glorot(
            &self.decoder_dims(),
            Activation::Tanh,
            Activation::Identity,
            seed,
            "init.decoder",
        )
    }
}

/// Everything one client evaluates: the shared encoder and decoder plus its
/// private encoder and gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<S> {
    pub global_encoder: DenseNet<S>,
    pub local_encoder: DenseNet<S>,
    pub gate: GateParams<S>,
    pub decoder: DenseNet<S>,
}

/// Gradients for every parameter group of a [`ModelBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct BundleGrads<S> {
    pub global_encoder: Gradients<S>,
    pub local_encoder: Gradients<S>,
    pub gate: Vec<S>,
    pub decoder: Gradients<S>,
}

impl<S: Scalar> BundleGrads<S> {
    pub fn zero(&mut self) {
        self.global_encoder.zero();
        self.local_encoder.zero();
        self.gate.iter_mut().for_each(|g| *g = S::zero());
        self.decoder.zero();
    }
}

impl<S: Scalar> ModelBundle<S> {
    pub fn new(
        global_encoder: DenseNet<S>,
        local_encoder: DenseNet<S>,
        gate: GateParams<S>,
        decoder: DenseNet<S>,
    ) -> Result<Self> {
        let m = global_encoder.in_dim();
        let head = global_encoder.out_dim();
        if !head.is_multiple_of(2) {
            return Err(Error::config(
                "latent_dim",
                "encoder head width must be even",
            ));
        }
        if local_encoder.in_dim() != m {
            return Err(Error::dim("local encoder input", m, local_encoder.in_dim()));
        }
        if local_encoder.out_dim() != head {
            return Err(Error::dim(
                "local encoder head",
                head,
                local_encoder.out_dim(),
            ));
        }
        if gate.items() != m {
            return Err(Error::dim("gate items", m, gate.items()));
        }
        if decoder.in_dim() != head / 2 {
            return Err(Error::dim("decoder input", head / 2, decoder.in_dim()));
        }
        if decoder.out_dim() != m {
            return Err(Error::dim("decoder output", m, decoder.out_dim()));
        }
        Ok(Self {
            global_encoder,
            local_encoder,
            gate,
            decoder,
        })
    }

    /// Glorot-initialised bundle for a given client index; the gate starts at zero.
    pub fn init(shape: &ModelShape, seed: u64, client: usize) -> Result<Self> {
        shape.validate()?;
        Self::new(
            shape.global_encoder(seed)?,
            shape.local_encoder(seed, client)?,
            GateParams::zeros(shape.items),
            shape.decoder(seed)?,
        )
    }

    pub fn items(&self) -> usize {
        self.global_encoder.in_dim()
    }

    pub fn latent(&self) -> usize {
        self.decoder.in_dim()
    }

    pub fn view(&self) -> BundleView<'_, S> {
        BundleView {
            global_encoder: &self.global_encoder,
            local_encoder: &self.local_encoder,
            gate: &self.gate,
            decoder: &self.decoder,
        }
    }

    pub fn zero_grads(&self) -> BundleGrads<S> {
        BundleGrads {
            global_encoder: self.global_encoder.zero_grads("global_encoder"),
            local_encoder: self.local_encoder.zero_grads("local_encoder"),
            gate: vec![S::zero(); self.gate.psi().len()],
            decoder: self.decoder.zero_grads("decoder"),
        }
    }
}

/// Multinomial normalisation used by the reconstruction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Softmax over all items.
    #[default]
    Full,
    /// Softmax restricted to the user's positives and sampled negatives.
    Masked,
}

#[derive(Debug, Clone, Copy)]
pub struct ElboOptions<'a, S> {
    pub beta: S,
    pub train: bool,
    pub dropout: S,
    pub gate: GateMode<S>,
    /// Sorted item indices the softmax is restricted to (masked loss only).
    pub candidates: Option<&'a [usize]>,
}

impl<S: Scalar> ElboOptions<'_, S> {
    pub fn eval(beta: S) -> Self {
        Self {
            beta,
            train: false,
            dropout: S::zero(),
            gate: GateMode::Learned,
            candidates: None,
        }
    }
}

/// The two random inputs of one ELBO evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboNoise<S> {
    /// Encoder input after dropout.
    pub input: Vec<S>,
    pub eps: Vec<S>,
}

impl<S: Scalar> ElboNoise<S> {
    pub fn draw<R: Rng + ?Sized>(
        r_u: &[S],
        opts: &ElboOptions<'_, S>,
        latent: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input = if opts.train {
            dropout(r_u, opts.dropout, rng)?
        } else {
            r_u.to_vec()
        };
        Ok(Self {
            input,
            eps: standard_normal(latent, rng),
        })
    }
}

/// Intermediate values of one ELBO evaluation, sufficient for the backward pass.
#[derive(Debug, Clone)]
pub struct ElboTape<S> {
    r_u: Vec<S>,
    beta: S,
    learned_gate: bool,
    global_tape: Tape<S>,
    local_tape: Tape<S>,
    global: GaussianPosterior<S>,
    local: GaussianPosterior<S>,
    weights: (S, S),
    clamped: Vec<bool>,
    combined: GaussianPosterior<S>,
    eps: Vec<S>,
    decoder_tape: Tape<S>,
    candidates: Option<Vec<usize>>,
    /// Softmax over all items, or over `candidates` in masked mode.
    probs: Vec<S>,
    pub log_likelihood: S,
    pub kl: S,
}

impl<S: Scalar> ElboTape<S> {
    pub fn weights(&self) -> (S, S) {
        self.weights
    }

    pub fn posterior(&self) -> &GaussianPosterior<S> {
        &self.combined
    }

    pub fn z(&self) -> &[S] {
        self.decoder_tape.input()
    }
}

/// Single-sample `L_beta = log p(r_u | z) - beta * KL(q || N(0, I))`.
pub fn elbo<S: Scalar, R: Rng + ?Sized>(
    bundle: &ModelBundle<S>,
    r_u: &[S],
    opts: &ElboOptions<'_, S>,
    rng: &mut R,
) -> Result<(S, ElboTape<S>)> {
    bundle.view().elbo(r_u, opts, rng)
}

/// [`elbo`] with dropout mask and `eps` supplied by the caller.
pub fn elbo_with_noise<S: Scalar>(
    bundle: &ModelBundle<S>,
    r_u: &[S],
    opts: &ElboOptions<'_, S>,
    noise: ElboNoise<S>,
) -> Result<(S, ElboTape<S>)> {
    bundle.view().elbo_with_noise(r_u, opts, noise)
}

/// Accumulates the gradient of `-L_beta` for every parameter group.
pub fn elbo_backward<S: Scalar>(
    bundle: &ModelBundle<S>,
    tape: &ElboTape<S>,
    grads: &mut BundleGrads<S>,
) -> Result<()> {
    bundle.view().elbo_backward(tape, grads)
}

impl<S: Scalar> BundleView<'_, S> {
    pub fn items(&self) -> usize {
        self.global_encoder.in_dim()
    }

    pub fn latent(&self) -> usize {
        self.decoder.in_dim()
    }

    pub fn elbo<R: Rng + ?Sized>(
        &self,
        r_u: &[S],
        opts: &ElboOptions<'_, S>,
        rng: &mut R,
    ) -> Result<(S, ElboTape<S>)> {
        if r_u.len() != self.items() {
            return Err(Error::dim("interaction vector", self.items(), r_u.len()));
        }
        let noise = ElboNoise::draw(r_u, opts, self.latent(), rng)?;
        self.elbo_with_noise(r_u, opts, noise)
    }

    pub fn elbo_with_noise(
        &self,
        r_u: &[S],
        opts: &ElboOptions<'_, S>,
        noise: ElboNoise<S>,
    ) -> Result<(S, ElboTape<S>)> {
        let bundle = self;
        let m = bundle.items();
        let k = bundle.latent();
        if r_u.len() != m {
            return Err(Error::dim("interaction vector", m, r_u.len()));
        }
        if noise.eps.len() != k {
            return Err(Error::dim("eps", k, noise.eps.len()));
        }
        let beta = opts.beta.to_f64_lossy();
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::config("beta", format!("{beta} outside [0, 1]")));
        }

        let (head_g, global_tape) = bundle.global_encoder.forward_taped(noise.input.clone())?;
        let (head_l, local_tape) = bundle.local_encoder.forward_taped(noise.input)?;
        let global = GaussianPosterior::from_head(&head_g)?;
        let local = GaussianPosterior::from_head(&head_l)?;
        let (w1, w2) = resolve_weights(opts.gate, bundle.gate, r_u)?;

        let floor = S::of(VARIANCE_FLOOR);
        let mut mu = Vec::with_capacity(k);
        let mut log_var = Vec::with_capacity(k);
        let mut clamped = Vec::with_capacity(k);
        for j in 0..k {
            mu.push(w1 * global.mu[j] + w2 * local.mu[j]);
            let var = w1 * w1 * global.log_var[j].exp() + w2 * w2 * local.log_var[j].exp();
            clamped.push(var < floor);
            log_var.push(var.max(floor).ln());
        }
        if clamped.iter().any(|&c| c) {
            log::debug!("combined variance clamped at {VARIANCE_FLOOR}");
        }
        let combined = GaussianPosterior { mu, log_var };
        let z = reparameterize_with(&combined, &noise.eps);
        let (logits, decoder_tape) = bundle.decoder.forward_taped(z)?;

        let (candidates, probs, log_likelihood) = match opts.candidates {
            None => {
                let probs = softmax(&logits);
                let ll = multinomial_log_likelihood(r_u, &probs);
                (None, probs, ll)
            }
            Some(c) => {
                if let Some(&bad) = c.iter().find(|&&i| i >= m) {
                    return Err(Error::dim("candidate item", m, bad + 1));
                }
                let sub: Vec<S> = c.iter().map(|&i| logits[i]).collect();
                let probs = softmax(&sub);
                let r_sub: Vec<S> = c.iter().map(|&i| r_u[i]).collect();
                let ll = multinomial_log_likelihood(&r_sub, &probs);
                (Some(c.to_vec()), probs, ll)
            }
        };
        let kl = kl_to_standard_normal(&combined);
        let value = log_likelihood - opts.beta * kl;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                tensor: "elbo".into(),
            });
        }

        Ok((
            value,
            ElboTape {
                r_u: r_u.to_vec(),
                beta: opts.beta,
                learned_gate: matches!(opts.gate, GateMode::Learned),
                global_tape,
                local_tape,
                global,
                local,
                weights: (w1, w2),
                clamped,
                combined,
                eps: noise.eps,
                decoder_tape,
                candidates,
                probs,
                log_likelihood,
                kl,
            },
        ))
    }

    pub fn elbo_backward(&self, tape: &ElboTape<S>, grads: &mut BundleGrads<S>) -> Result<()> {
        let bundle = self;
        let m = bundle.items();
        let k = bundle.latent();
        let floor = S::of(LOG_PROB_FLOOR);
        let half = S::of(0.5);
        let two = S::of(2.0);

        // d(-ll)/dlogits through softmax of the floored log-probabilities
        let mut d_logits = vec![S::zero(); m];
        let positions: Box<dyn Iterator<Item = (usize, usize)>> = match &tape.candidates {
            None => Box::new((0..m).map(|i| (i, i))),
            Some(c) => Box::new(c.iter().copied().enumerate()),
        };
        let pairs: Vec<(usize, usize)> = positions.collect();
        let mut dot = S::zero();
        let mut g = vec![S::zero(); pairs.len()];
        for (slot, &(p, item)) in pairs.iter().enumerate() {
            let r = tape.r_u[item];
            if r != S::zero() {
                g[slot] = r / (tape.probs[p] + floor);
                dot += tape.probs[p] * g[slot];
            }
        }
        for (slot, &(p, item)) in pairs.iter().enumerate() {
            d_logits[item] = -(tape.probs[p] * (g[slot] - dot));
        }

        let dz = bundle
            .decoder
            .backward(&tape.decoder_tape, &d_logits, &mut grads.decoder)?;

        let (w1, w2) = tape.weights;
        let beta = tape.beta;
        let mut d_head_g = vec![S::zero(); 2 * k];
        let mut d_head_l = vec![S::zero(); 2 * k];
        let mut dw1 = S::zero();
        let mut dw2 = S::zero();
        for j in 0..k {
            let mu = tape.combined.mu[j];
            let lv = tape.combined.log_var[j];
            let sd = (lv * half).exp();
            let var = lv.exp();
            let d_mu = dz[j] + beta * mu;
            let d_lv = dz[j] * tape.eps[j] * sd * half + beta * half * (var - S::one());
            let d_var = if tape.clamped[j] {
                S::zero()
            } else {
                d_lv / var
            };

            let vg = tape.global.log_var[j].exp();
            let vl = tape.local.log_var[j].exp();
            d_head_g[j] = w1 * d_mu;
            d_head_l[j] = w2 * d_mu;
            d_head_g[k + j] = d_var * w1 * w1 * vg;
            d_head_l[k + j] = d_var * w2 * w2 * vl;
            dw1 += d_mu * tape.global.mu[j] + d_var * two * w1 * vg;
            dw2 += d_mu * tape.local.mu[j] + d_var * two * w2 * vl;
        }

        bundle.global_encoder.backward_params(
            &tape.global_tape,
            &d_head_g,
            &mut grads.global_encoder,
        )?;
        bundle.local_encoder.backward_params(
            &tape.local_tape,
            &d_head_l,
            &mut grads.local_encoder,
        )?;
        if tape.learned_gate {
            bundle
                .gate
                .backward(&tape.r_u, tape.weights, (dw1, dw2), &mut grads.gate);
        }
        Ok(())
    }
}

/// Combined posterior mean in eval mode (no dropout, no sampling).
pub fn posterior_mean<S: Scalar>(
    bundle: &ModelBundle<S>,
    r_u: &[S],
    gate: GateMode<S>,
) -> Result<Vec<S>> {
    bundle.view().posterior_mean(r_u, gate)
}

/// Decoder logits at the combined posterior mean; used for ranking.
pub fn predict_scores<S: Scalar>(
    bundle: &ModelBundle<S>,
    r_u: &[S],
    gate: GateMode<S>,
) -> Result<Vec<S>> {
    bundle.view().predict_scores(r_u, gate)
}

/// Borrowed parts of a bundle, for scoring without assembling an owned one.
#[derive(Debug, Clone, Copy)]
pub struct BundleView<'a, S> {
    pub global_encoder: &'a DenseNet<S>,
    pub local_encoder: &'a DenseNet<S>,
    pub gate: &'a GateParams<S>,
    pub decoder: &'a DenseNet<S>,
}

impl<S: Scalar> BundleView<'_, S> {
    pub fn posterior_mean(&self, r_u: &[S], gate: GateMode<S>) -> Result<Vec<S>> {
        let m = self.global_encoder.in_dim();
        if r_u.len() != m {
            return Err(Error::dim("interaction vector", m, r_u.len()));
        }
        let head_g = self.global_encoder.forward_eval(r_u)?;
        let head_l = self.local_encoder.forward_eval(r_u)?;
        let k = self.decoder.in_dim();
        let (w1, w2) = resolve_weights(gate, self.gate, r_u)?;
        Ok((0..k).map(|j| w1 * head_g[j] + w2 * head_l[j]).collect())
    }

    pub fn predict_scores(&self, r_u: &[S], gate: GateMode<S>) -> Result<Vec<S>> {
        let mu = self.posterior_mean(r_u, gate)?;
        self.decoder.forward_eval(&mu)
    }
}

/// Softmax of the decoder output at `z`.
pub fn decode<S: Scalar>(decoder: &DenseNet<S>, z: &[S]) -> Result<Vec<S>> {
    Ok(softmax(&decoder.forward_eval(z)?))
}
