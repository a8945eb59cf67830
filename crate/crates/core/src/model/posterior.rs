use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::scalar::Scalar;

/// Variance floor applied after blending two posteriors.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Additive floor inside `ln(pi + floor)` of the multinomial likelihood.
pub const LOG_PROB_FLOOR: f64 = 1e-10;

/// Diagonal Gaussian `N(mu, diag(exp(log_var)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<S> {
    pub mu: Vec<S>,
    pub log_var: Vec<S>,
}

impl<S: Scalar> GaussianPosterior<S> {
    pub fn new(mu: Vec<S>, log_var: Vec<S>) -> Result<Self> {
        if mu.len() != log_var.len() {
            return Err(Error::dim("posterior log_var", mu.len(), log_var.len()));
        }
        Ok(Self { mu, log_var })
    }

    /// Splits a `2k`-wide encoder head into `(mu, log_var)`.
    pub fn from_head(head: &[S]) -> Result<Self> {
        if !head.len().is_multiple_of(2) {
            return Err(Error::dim(
                "encoder head (must be even)",
                head.len() + 1,
                head.len(),
            ));
        }
        let k = head.len() / 2;
        Ok(Self {
            mu: head[..k].to_vec(),
            log_var: head[k..].to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn variance(&self) -> Vec<S> {
        self.log_var.iter().map(|lv| lv.exp()).collect()
    }
}

/// Runs `encoder` on `r_u` and splits its head into a posterior.
pub fn encode<S: Scalar, R: Rng + ?Sized>(
    encoder: &DenseNet<S>,
    r_u: &[S],
    train: bool,
    dropout_rate: S,
    rng: &mut R,
) -> Result<GaussianPosterior<S>> {
    let (head, _) = encoder.forward(r_u, train, dropout_rate, rng)?;
    GaussianPosterior::from_head(&head)
}

/// Gate-weighted blend of two independent Gaussians:
/// `mu = w1 mu_g + w2 mu_l`, `var = w1^2 var_g + w2^2 var_l`.
pub fn combine_posteriors<S: Scalar>(
    global: &GaussianPosterior<S>,
    local: &GaussianPosterior<S>,
    w1: S,
    w2: S,
) -> Result<GaussianPosterior<S>> {
    if global.dim() != local.dim() {
        return Err(Error::dim(
            "posterior combination",
            global.dim(),
            local.dim(),
        ));
    }
    let floor = S::of(VARIANCE_FLOOR);
    let mut mu = Vec::with_capacity(global.dim());
    let mut log_var = Vec::with_capacity(global.dim());
    for j in 0..global.dim() {
        mu.push(w1 * global.mu[j] + w2 * local.mu[j]);
        let var = w1 * w1 * global.log_var[j].exp() + w2 * w2 * local.log_var[j].exp();
        if var < floor {
            log::debug!("combined variance {var} clamped at {VARIANCE_FLOOR} (dim {j})");
        }
        log_var.push(var.max(floor).ln());
    }
    Ok(GaussianPosterior { mu, log_var })
}

/// Draws `eps ~ N(0, I_k)`.
pub fn standard_normal<S: Scalar, R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<S> {
    (0..k)
        .map(|_| S::of(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// `z = mu + exp(log_var / 2) * eps` for a fixed `eps`.
pub fn reparameterize_with<S: Scalar>(gp: &GaussianPosterior<S>, eps: &[S]) -> Vec<S> {
    let half = S::of(0.5);
    gp.mu
        .iter()
        .zip(&gp.log_var)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect()
}

pub fn reparameterize<S: Scalar, R: Rng + ?Sized>(
    gp: &GaussianPosterior<S>,
    rng: &mut R,
) -> Vec<S> {
    let eps = standard_normal(gp.dim(), rng);
    reparameterize_with(gp, &eps)
}

/// `sum_i r_i ln(pi_i + 1e-10)`.
pub fn multinomial_log_likelihood<S: Scalar>(r_u: &[S], pi: &[S]) -> S {
    let floor = S::of(LOG_PROB_FLOOR);
    r_u.iter()
        .zip(pi)
        .filter(|(r, _)| **r != S::zero())
        .map(|(&r, &p)| r * (p + floor).ln())
        .sum()
}

/// Closed-form `KL(N(mu, diag var) || N(0, I))`.
pub fn kl_to_standard_normal<S: Scalar>(gp: &GaussianPosterior<S>) -> S {
    let half = S::of(0.5);
    gp.mu
        .iter()
        .zip(&gp.log_var)
        .map(|(&m, &lv)| lv.exp() + m * m - S::one() - lv)
        .sum::<S>()
        * half
}
