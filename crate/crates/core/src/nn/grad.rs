use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gradient tensors mirroring a [`DenseNet`](super::DenseNet)'s parameters.
///
/// Tensor order is `[w0, b0, w1, b1, ...]`. `label` names the owning network
/// (for example `global_encoder`) so that payloads stay self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients<S> {
    pub label: String,
    pub tensors: Vec<Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros(label: impl Into<String>, lens: &[usize]) -> Self {
        Self {
            label: label.into(),
            tensors: lens.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    pub fn lens(&self) -> Vec<usize> {
        self.tensors.iter().map(Vec::len).collect()
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|g| *g = S::zero());
        }
    }

    pub fn tensor_name(&self, index: usize) -> String {
        let kind = if index.is_multiple_of(2) { "weight" } else { "bias" };
        format!("{}.{}.{}", self.label, index / 2, kind)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::dim(
                "gradient tensor count",
                self.tensors.len(),
                other.tensors.len(),
            ));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.len() != b.len() {
                return Err(Error::dim("gradient tensor length", a.len(), b.len()));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: S) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Name of the first tensor containing a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors
            .iter()
            .position(|t| t.iter().any(|g| !g.is_finite()))
            .map(|i| self.tensor_name(i))
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.tensors.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.tensors.iter_mut().flatten()
    }
}
