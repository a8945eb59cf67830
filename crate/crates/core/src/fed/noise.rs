use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ClientUpload;

/// Gaussian noise added to uploaded gradients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-entry variance `kappa^2`.
    pub variance: f64,
}

impl NoiseConfig {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::config("noise_variance", "must be finite and >= 0"));
        }
        Ok(Self { variance })
    }
}

/// Adds `N(0, kappa^2)` to every gradient entry of `upload`. Scores and the
/// ELBO trace are left alone, and a zero variance draws nothing.
pub fn add_gradient_noise<S: Scalar, R: Rng + ?Sized>(
    mut upload: ClientUpload<S>,
    cfg: NoiseConfig,
    rng: &mut R,
) -> ClientUpload<S> {
    if cfg.variance == 0.0 {
        return upload;
    }
    let sd = cfg.variance.sqrt();
    for v in upload
        .grad_global_encoder
        .iter_mut()
        .chain(upload.grad_decoder.iter_mut())
    {
        let e: f64 = rng.sample(StandardNormal);
        *v += S::of(sd * e);
    }
    upload
}
