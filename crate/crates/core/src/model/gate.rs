use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::scalar::Scalar;

/// Per-client gating parameters: an `m x 2` matrix mapping the interaction
/// vector to a pair of logits, `softmax(r_u^T psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams<S> {
    items: usize,
    /// Row-major `(items, 2)`.
    psi: Vec<S>,
}

/// How the two posterior weights are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode<S> {
    Learned,
    /// `(w, 1 - w)` for every client; `w` weighs the global encoder.
    Fixed(S),
}

impl<S: Scalar> GateParams<S> {
    pub fn zeros(items: usize) -> Self {
        Self {
            items,
            psi: vec![S::zero(); items * 2],
        }
    }

    pub fn from_psi(items: usize, psi: Vec<S>) -> Result<Self> {
        if psi.len() != items * 2 {
            return Err(Error::dim("gate psi", items * 2, psi.len()));
        }
        Ok(Self { items, psi })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn psi(&self) -> &[S] {
        &self.psi
    }

    pub fn psi_mut(&mut self) -> &mut [S] {
        &mut self.psi
    }

    pub fn logits(&self, r_u: &[S]) -> Result<[S; 2]> {
        if r_u.len() != self.items {
            return Err(Error::dim("gate input", self.items, r_u.len()));
        }
        let mut logits = [S::zero(); 2];
        for (i, &r) in r_u.iter().enumerate() {
            if r != S::zero() {
                logits[0] += r * self.psi[2 * i];
                logits[1] += r * self.psi[2 * i + 1];
            }
        }
        Ok(logits)
    }

    /// Accumulates `dL/dpsi` into `grad` given `dL/dw` for the two weights.
    pub fn backward(&self, r_u: &[S], weights: (S, S), d_weights: (S, S), grad: &mut [S]) {
        let (w1, w2) = weights;
        let (g1, g2) = d_weights;
        let mean = w1 * g1 + w2 * g2;
        let dl = [w1 * (g1 - mean), w2 * (g2 - mean)];
        for (i, &r) in r_u.iter().enumerate() {
            if r != S::zero() {
                grad[2 * i] += r * dl[0];
                grad[2 * i + 1] += r * dl[1];
            }
        }
    }
}

/// `(w1, w2) = softmax(r_u^T psi)`; `w1` weighs the global encoder.
pub fn gate_weights<S: Scalar>(gate: &GateParams<S>, r_u: &[S]) -> Result<(S, S)> {
    let p = softmax(&gate.logits(r_u)?);
    Ok((p[0], p[1]))
}

pub(crate) fn resolve_weights<S: Scalar>(
    mode: GateMode<S>,
    gate: &GateParams<S>,
    r_u: &[S],
) -> Result<(S, S)> {
    match mode {
        GateMode::Learned => gate_weights(gate, r_u),
        GateMode::Fixed(w) => {
            if gate.items != r_u.len() {
                return Err(Error::dim("gate input", gate.items, r_u.len()));
            }
            Ok((w, S::one() - w))
        }
    }
}
