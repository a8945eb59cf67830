//! Per-user item embeddings for inspection.
//!
//! An encoder's item embedding matrix is the product of its layer weights,
//! `E = (W_L ... W_1)^T`, so row `i` holds the `2k` values item `i`
//! contributes to the encoder head before any nonlinearity. The combined
//! matrix mixes the global and private matrices with the user's gate
//! weights.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fed::{ClientState, ServerState};
use crate::model::{resolve_weights, GateMode};
use crate::nn::DenseNet;
use crate::scalar::Scalar;

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<S> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> Embeddings<S> {
    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// `items x out_dim` product of the encoder's weight matrices.
pub fn item_embeddings<S: Scalar>(encoder: &DenseNet<S>) -> Embeddings<S> {
    let m = encoder.in_dim();
    // acc is (current width) x m, starting from the identity
    let mut acc = vec![S::zero(); m * m];
    for i in 0..m {
        acc[i * m + i] = S::one();
    }
    let mut width = m;
    for layer in encoder.layers() {
        let (out, inp) = (layer.out_dim(), layer.in_dim());
        let w = layer.weight();
        let mut next = vec![S::zero(); out * m];
        for o in 0..out {
            let dst = &mut next[o * m..(o + 1) * m];
            for j in 0..inp {
                let wj = w[o * inp + j];
                if wj == S::zero() {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(&acc[j * m..(j + 1) * m]) {
                    *d += wj * a;
                }
            }
        }
        acc = next;
        width = out;
    }
    let mut values = vec![S::zero(); m * width];
    for o in 0..width {
        for i in 0..m {
            values[i * width + o] = acc[o * m + i];
        }
    }
    Embeddings {
        rows: m,
        cols: width,
        values,
    }
}

/// Global, private and gate-combined embeddings of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbeddings<S> {
    pub user: usize,
    pub weights: (S, S),
    pub global: Embeddings<S>,
    pub local: Embeddings<S>,
    pub combined: Embeddings<S>,
}

pub fn user_embeddings<S: Scalar>(
    server: &ServerState<S>,
    client: &ClientState<S>,
    gate: GateMode<S>,
) -> Result<UserEmbeddings<S>> {
    let r_u = client.interactions();
    let weights = resolve_weights(gate, &client.gate, &r_u)?;
    let global = item_embeddings(&server.global_encoder);
    let local = item_embeddings(&client.local_encoder);
    if (global.rows, global.cols) != (local.rows, local.cols) {
        return Err(Error::dim("local embedding width", global.cols, local.cols));
    }
    let values = global
        .values
        .iter()
        .zip(&local.values)
        .map(|(&g, &l)| weights.0 * g + weights.1 * l)
        .collect();
    let combined = Embeddings {
        rows: global.rows,
        cols: global.cols,
        values,
    };
    Ok(UserEmbeddings {
        user: client.id,
        weights,
        global,
        local,
        combined,
    })
}

/// CSV with columns `item,interacted,e0,e1,...`, one row per item.
/// `item_id` maps dense item indices back to raw ids.
pub fn embeddings_csv<S: Scalar>(
    emb: &Embeddings<S>,
    positives: &[usize],
    item_id: impl Fn(usize) -> u64,
) -> String {
    let mut out = String::from("item,interacted");
    for c in 0..emb.cols {
        let _ = write!(out, ",e{c}");
    }
    out.push('\n');
    for i in 0..emb.rows {
        let hit = positives.binary_search(&i).is_ok() as u8;
        let _ = write!(out, "{},{hit}", item_id(i));
        for v in emb.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
