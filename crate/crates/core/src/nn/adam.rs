use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{DenseNet, Gradients};

/// Adam moments for one set of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(lens: &[usize]) -> Self {
        Self {
            first: lens.iter().map(|&n| vec![S::zero(); n]).collect(),
            second: lens.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_net(net: &DenseNet<S>) -> Self {
        Self::new(&net.tensor_lens())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<S>], &[Vec<S>]) {
        (&self.first, &self.second)
    }

    /// One bias-corrected Adam update of `params` with `grads`.
    ///
    /// All gradients are checked for finiteness before anything is written,
    /// so a rejected update leaves both parameters and moments untouched.
    pub fn update(
        &mut self,
        params: &mut [&mut [S]],
        grads: &[&[S]],
        names: impl Fn(usize) -> String,
        lr: S,
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(
                "adam tensor count",
                self.first.len(),
                grads.len(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() {
                return Err(Error::dim("adam parameter", self.first[i].len(), p.len()));
            }
            if g.len() != p.len() {
                return Err(Error::dim("adam gradient", p.len(), g.len()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { tensor: names(i) });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = S::of(self.beta1);
        let b2 = S::of(self.beta2);
        let one = S::one();
        let bc1 = S::of(1.0 - self.beta1.powi(t));
        let bc2 = S::of(1.0 - self.beta2.powi(t));
        let eps = S::of(self.eps);
        // lr * m_hat / (sqrt(v_hat) + eps) with the corrections hoisted
        let step_size = lr / bc1;
        let inv_sqrt_bc2 = one / bc2.sqrt();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (((pj, &gj), mj), vj) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mj = b1 * *mj + (one - b1) * gj;
                *vj = b2 * *vj + (one - b2) * gj * gj;
                *pj -= step_size * *mj / (vj.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

/// Adam update of every tensor in `net`. Gradients are left untouched.
pub fn adam_step<S: Scalar>(
    net: &mut DenseNet<S>,
    state: &mut AdamState<S>,
    grads: &Gradients<S>,
    lr: S,
) -> Result<()> {
    let grad_refs: Vec<&[S]> = grads.tensors.iter().map(Vec::as_slice).collect();
    let mut params = net.tensors_mut();
    state.update(&mut params, &grad_refs, |i| grads.tensor_name(i), lr)
}

/// `param -= scale * grad` for every tensor in `net`, rejecting non-finite gradients.
pub fn sgd_step<S: Scalar>(net: &mut DenseNet<S>, grads: &Gradients<S>, scale: S) -> Result<()> {
    if net.tensor_lens() != grads.lens() {
        return Err(Error::dim("sgd gradient", net.param_count(), grads.len()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite { tensor: name });
    }
    for (p, g) in net.tensors_mut().into_iter().zip(&grads.tensors) {
        for (pj, &gj) in p.iter_mut().zip(g) {
            *pj -= scale * gj;
        }
    }
    Ok(())
}
