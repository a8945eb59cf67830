//! The per-client gated dual-encoder VAE.
//!
//! A client encodes its interaction vector twice, once with the shared global
//! encoder and once with its private local encoder. A private gate turns the
//! same vector into a weight pair that blends the two Gaussian posteriors;
//! the blended posterior is sampled with the reparameterisation trick and
//! decoded by the shared decoder into a multinomial over items.

mod beta;
mod bundle;
mod gate;
mod posterior;

pub use beta::BetaSchedule;
pub use bundle::{
    decode, elbo, elbo_backward, elbo_with_noise, posterior_mean, predict_scores, BundleGrads,
    BundleView, ElboNoise, ElboOptions, ElboTape, LossMode, ModelBundle, ModelShape,
};
pub(crate) use gate::resolve_weights;
pub use gate::{gate_weights, GateMode, GateParams};
pub use posterior::{
    combine_posteriors, encode, kl_to_standard_normal, multinomial_log_likelihood, reparameterize,
    reparameterize_with, standard_normal, GaussianPosterior, LOG_PROB_FLOOR, VARIANCE_FLOOR,
};
