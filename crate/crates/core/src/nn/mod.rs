//! Sequential dense networks with hand-written reverse-mode gradients.
//!
//! A [`DenseNet`] is an ordered list of affine layers, each followed by an
//! element-wise activation. Parameters live on the network; gradients live in
//! a separate [`Gradients`] buffer that the caller owns, zeroes and passes to
//! [`DenseNet::backward`], so that many buffers can accumulate against one
//! read-only network and so idle clients hold no gradient storage.
//!
//! Weights are row-major `(out_dim, in_dim)`.

mod adam;
mod grad;
mod softmax;

pub use adam::{adam_step, sgd_step, AdamState};
pub use grad::Gradients;
pub use softmax::{log_softmax, softmax};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => S::one() - y * y,
            Activation::Identity => S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weight: Vec<S>,
    bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weight: Vec<S>,
        bias: Vec<S>,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("layer", "layer dims must be > 0"));
        }
        if weight.len() != in_dim * out_dim {
            return Err(Error::dim("layer weight", in_dim * out_dim, weight.len()));
        }
        if bias.len() != out_dim {
            return Err(Error::dim("layer bias", out_dim, bias.len()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weight: vec![S::zero(); in_dim * out_dim],
            bias: vec![S::zero(); out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bounds");
        let weight = (0..in_dim * out_dim)
            .map(|_| S::of(dist.sample(rng)))
            .collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weight,
            bias: vec![S::zero(); out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &[S] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [S] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [S] {
        &mut self.bias
    }

    fn forward_dense(&self, x: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.out_dim);
        for (row, &b) in self.weight.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut acc = b;
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            out.push(self.activation.apply(acc));
        }
        out
    }

    fn forward_sparse(&self, x: &[S], nonzero: &[usize]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.out_dim);
        for (row, &b) in self.weight.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut acc = b;
            for &j in nonzero {
                acc += row[j] * x[j];
            }
            out.push(self.activation.apply(acc));
        }
        out
    }
}

/// Cached activations from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    signature: Vec<(usize, usize)>,
    input: Vec<S>,
    /// Indices of non-zero inputs when the input is sparse enough to exploit.
    nonzero: Option<Vec<usize>>,
    outputs: Vec<Vec<S>>,
}

impl<S: Scalar> Tape<S> {
    /// The input actually fed to the first layer (after dropout).
    pub fn input(&self) -> &[S] {
        &self.input
    }

    pub fn output(&self) -> &[S] {
        self.outputs
            .last()
            .expect("taped net has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<S> {
    layers: Vec<Layer<S>>,
}

impl<S: Scalar> DenseNet<S> {
    pub fn new(layers: Vec<Layer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config(
                "layers",
                "a network needs at least one layer",
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::dim("layer chain", pair[0].out_dim, pair[1].in_dim));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised net over `dims` (`dims.len() - 1` layers); hidden
    /// layers use `hidden`, the last one `output`. Each layer draws from its
    /// own substream of `seed`.
    pub fn glorot(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
        label: &str,
    ) -> Result<Self> {
        Self::build(dims, hidden, output, |i, inp, out, act| {
            let mut rng = substream(seed, label, i as u64, 0);
            Layer::glorot(inp, out, act, &mut rng)
        })
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(dims, hidden, output, |_, inp, out, act| {
            Layer::zeros(inp, out, act)
        })
    }

    fn build(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        mut make: impl FnMut(usize, usize, usize, Activation) -> Layer<S>,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config(
                "layers",
                "need at least input and output dims",
            ));
        }
        if dims.contains(&0) {
            return Err(Error::config("layers", "layer dims must be > 0"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                make(i, w[0], w[1], act)
            })
            .collect();
        Self::new(layers)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    /// Tensor lengths in `[w0, b0, w1, b1, ...]` order.
    pub fn tensor_lens(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensor_lens().iter().sum()
    }

    pub fn tensors(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Fresh all-zero gradient buffer shaped like this net.
    pub fn zero_grads(&self, label: impl Into<String>) -> Gradients<S> {
        Gradients::zeros(label, &self.tensor_lens())
    }

    fn signature(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }

    /// Forward pass. In train mode with `dropout_rate > 0`, inverted dropout
    /// is applied to `x` (and only to `x`).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[S],
        train: bool,
        dropout_rate: S,
        rng: &mut R,
    ) -> Result<(Vec<S>, Tape<S>)> {
        if x.len() != self.in_dim() {
            return Err(Error::dim("network input", self.in_dim(), x.len()));
        }
        let input = if train {
            dropout(x, dropout_rate, rng)?
        } else {
            x.to_vec()
        };
        self.forward_taped(input)
    }

    /// Forward pass without dropout, keeping a tape.
    pub fn forward_taped(&self, input: Vec<S>) -> Result<(Vec<S>, Tape<S>)> {
        if input.len() != self.in_dim() {
            return Err(Error::dim("network input", self.in_dim(), input.len()));
        }
        let nonzero = sparse_support(&input);
        let mut outputs: Vec<Vec<S>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let out = if i == 0 {
                match &nonzero {
                    Some(nz) => layer.forward_sparse(&input, nz),
                    None => layer.forward_dense(&input),
                }
            } else {
                layer.forward_dense(&outputs[i - 1])
            };
            outputs.push(out);
        }
        let y = outputs.last().cloned().unwrap_or_default();
        Ok((
            y,
            Tape {
                signature: self.signature(),
                input,
                nonzero,
                outputs,
            },
        ))
    }

    /// Forward pass without dropout or tape.
    pub fn forward_eval(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.in_dim() {
            return Err(Error::dim("network input", self.in_dim(), x.len()));
        }
        let mut cur = match sparse_support(x) {
            Some(nz) => self.layers[0].forward_sparse(x, &nz),
            None => self.layers[0].forward_dense(x),
        };
        for layer in &self.layers[1..] {
            cur = layer.forward_dense(&cur);
        }
        Ok(cur)
    }

    /// Accumulates `dL/dparams` into `grads` and returns `dL/dx`.
    pub fn backward(
        &self,
        tape: &Tape<S>,
        upstream: &[S],
        grads: &mut Gradients<S>,
    ) -> Result<Vec<S>> {
        self.backward_impl(tape, upstream, grads, true)
            .map(|dx| dx.expect("input gradient requested"))
    }

    /// Like [`backward`](Self::backward) but skips the input gradient.
    pub fn backward_params(
        &self,
        tape: &Tape<S>,
        upstream: &[S],
        grads: &mut Gradients<S>,
    ) -> Result<()> {
        self.backward_impl(tape, upstream, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        tape: &Tape<S>,
        upstream: &[S],
        grads: &mut Gradients<S>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<S>>> {
        if tape.signature != self.signature() {
            return Err(Error::Logic(
                "tape was produced by a different network".into(),
            ));
        }
        if upstream.len() != self.out_dim() {
            return Err(Error::dim(
                "upstream gradient",
                self.out_dim(),
                upstream.len(),
            ));
        }
        let lens = self.tensor_lens();
        if grads.lens() != lens {
            return Err(Error::dim(
                "gradient buffer",
                lens.iter().sum(),
                grads.len(),
            ));
        }

        let mut delta: Vec<S> = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let y = &tape.outputs[i];
            if layer.activation != Activation::Identity {
                for (d, &yo) in delta.iter_mut().zip(y) {
                    *d *= layer.activation.derivative_from_output(yo);
                }
            }
            let prev: &[S] = if i == 0 {
                &tape.input
            } else {
                &tape.outputs[i - 1]
            };
            let (gw_slot, rest) = grads.tensors[2 * i..].split_at_mut(1);
            let gw = &mut gw_slot[0];
            let gb = &mut rest[0];
            let sparse = if i == 0 {
                tape.nonzero.as_deref()
            } else {
                None
            };
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d == S::zero() {
                    continue;
                }
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                match sparse {
                    Some(nz) => {
                        for &j in nz {
                            row[j] += d * prev[j];
                        }
                    }
                    None => {
                        for (g, &p) in row.iter_mut().zip(prev) {
                            *g += d * p;
                        }
                    }
                }
            }
            if i == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut next = vec![S::zero(); layer.in_dim];
            for (row, &d) in layer.weight.chunks_exact(layer.in_dim).zip(&delta) {
                if d == S::zero() {
                    continue;
                }
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
            delta = next;
        }
        Ok(Some(delta))
    }
}

/// Inverted dropout: each entry is zeroed with probability `rate`, survivors
/// are scaled by `1 / (1 - rate)`.
pub fn dropout<S: Scalar, R: Rng + ?Sized>(x: &[S], rate: S, rng: &mut R) -> Result<Vec<S>> {
    let p = rate.to_f64_lossy();
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("dropout", format!("rate {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(x.to_vec());
    }
    let scale = S::one() / (S::one() - rate);
    Ok(x.iter()
        .map(|&v| {
            if rng.random::<f64>() < p {
                S::zero()
            } else {
                v * scale
            }
        })
        .collect())
}

fn sparse_support<S: Scalar>(x: &[S]) -> Option<Vec<usize>> {
    let nz: Vec<usize> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != S::zero())
        .map(|(i, _)| i)
        .collect();
    (nz.len() * 2 < x.len()).then_some(nz)
}
