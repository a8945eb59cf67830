//! Parameter checkpoints.
//!
//! A checkpoint is a string metadata map plus an ordered list of named,
//! shaped, row-major tensors. The binary form stores every value as its
//! little-endian bit pattern and round-trips exactly:
//!
//! ```text
//! magic    8 bytes   "FDAECKPT"
//! version  u32       1
//! dtype    u8        bytes per value: 4 (f32) or 8 (f64)
//! n_meta   u32       then n_meta x { u32 key_len, key, u32 value_len, value } (UTF-8)
//! n_tensor u32       then n_tensor x { u32 name_len, name, u32 rank,
//!                                      rank x u64 dim, prod(dim) x value }
//! ```
//!
//! All integers are little-endian. The JSON form is
//! `{"version", "dtype", "meta": {..}, "tensors": [{"name", "shape", "values"}]}`.
//!
//! Model checkpoints name their tensors `global_encoder.<layer>.weight|bias`,
//! `decoder.<layer>.weight|bias`, `client.<u>.local_encoder.<layer>.weight|bias`
//! and `client.<u>.gate.psi`, with weights shaped `[out, in]` and `psi`
//! shaped `[items, 2]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::fed::{ClientState, ServerState};
use crate::model::{GateParams, ModelShape};
use crate::nn::{Activation, DenseNet, Layer};
use crate::scalar::{dtype_width, DType, Scalar};

pub const MAGIC: &[u8; 8] = b"FDAECKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint<S> {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor<S>>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new() -> Self {
        Self {
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<S>,
    ) -> Result<()> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        self.tensors.push(NamedTensor {
            name,
            shape,
            values,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor<S>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn require(&self, name: &str) -> Result<&NamedTensor<S>> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key}")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta_value(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("metadata {key}: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let width = dtype_width(S::DTYPE);
        let payload: usize = self.tensors.iter().map(|t| t.values.len() * width).sum();
        let mut out = Vec::with_capacity(payload + 1024);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(S::DTYPE.tag());
        put_u32(&mut out, self.meta.len());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.values {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown dtype tag {tag}")))?;
        if dtype != S::DTYPE {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores {dtype:?}, reader expects {:?}",
                S::DTYPE
            )));
        }
        let width = dtype_width(dtype);
        let mut ckpt = Self::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ckpt.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let raw = r.take(
                count
                    .checked_mul(width)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let values = raw.chunks_exact(width).map(S::read_le).collect();
            ckpt.push(name, shape, values)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ckpt)
    }

    pub fn to_json(&self) -> Result<Value> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let values = t
                    .values
                    .iter()
                    .map(|v| {
                        serde_json::Number::from_f64(v.to_f64_lossy())
                            .map(Value::Number)
                            .ok_or_else(|| Error::NonFinite {
                                tensor: t.name.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(json!({"name": t.name, "shape": t.shape, "values": values}))
            })
            .collect::<Result<Vec<_>>>()?;
        let dtype = match S::DTYPE {
            DType::F32 => "f32",
            DType::F64 => "f64",
        };
        Ok(json!({
            "version": VERSION,
            "dtype": dtype,
            "meta": self.meta,
            "tensors": tensors,
        }))
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(format!("JSON checkpoint: {what}"));
        let obj = value.as_object().ok_or_else(|| bad("not an object"))?;
        let expected = match S::DTYPE {
            DType::F32 => "f32",
            DType::F64 => "f64",
        };
        if obj.get("dtype").and_then(Value::as_str) != Some(expected) {
            return Err(bad(&format!("dtype must be {expected}")));
        }
        let mut ckpt = Self::new();
        if let Some(meta) = obj.get("meta").and_then(Value::as_object) {
            for (k, v) in meta {
                let v = v
                    .as_str()
                    .ok_or_else(|| bad("metadata values must be strings"))?;
                ckpt.meta.insert(k.clone(), v.to_string());
            }
        }
        let tensors = obj
            .get("tensors")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing tensors"))?;
        for t in tensors {
            let name = t
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("tensor without name"))?;
            let shape = t
                .get("shape")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("tensor without shape"))?
                .iter()
                .map(|d| d.as_u64().map(|d| d as usize).ok_or_else(|| bad("bad dim")))
                .collect::<Result<Vec<_>>>()?;
            let values = t
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("tensor without values"))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .map(S::of)
                        .ok_or_else(|| bad("non-numeric value"))
                })
                .collect::<Result<Vec<_>>>()?;
            ckpt.push(name, shape, values)?;
        }
        Ok(ckpt)
    }

    /// Writes JSON when `path` ends in `.json`, binary otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_json(path) {
            std::fs::write(path, serde_json::to_vec(&self.to_json()?)?)?;
        } else {
            std::fs::write(path, self.to_bytes())?;
        }
        Ok(())
    }

    /// Reads either form, recognising the binary one by its magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            Self::from_json(&serde_json::from_slice(&bytes)?)
        }
    }

    pub fn push_net(&mut self, prefix: &str, net: &DenseNet<S>) -> Result<()> {
        let acts: Vec<&str> = net
            .layers()
            .iter()
            .map(|l| match l.activation() {
                Activation::Tanh => "tanh",
                Activation::Identity => "identity",
            })
            .collect();
        self.meta
            .insert(format!("{prefix}.activations"), acts.join(","));
        for (i, l) in net.layers().iter().enumerate() {
            self.push(
                format!("{prefix}.{i}.weight"),
                vec![l.out_dim(), l.in_dim()],
                l.weight().to_vec(),
            )?;
            self.push(
                format!("{prefix}.{i}.bias"),
                vec![l.out_dim()],
                l.bias().to_vec(),
            )?;
        }
        Ok(())
    }

    pub fn net(&self, prefix: &str) -> Result<DenseNet<S>> {
        let acts = self.meta_value(&format!("{prefix}.activations"))?;
        let layers = acts
            .split(',')
            .enumerate()
            .map(|(i, a)| {
                let activation = match a {
                    "tanh" => Activation::Tanh,
                    "identity" => Activation::Identity,
                    other => {
                        return Err(Error::Checkpoint(format!(
                            "{prefix}: unknown activation {other}"
                        )))
                    }
                };
                let w = self.require(&format!("{prefix}.{i}.weight"))?;
                let b = self.require(&format!("{prefix}.{i}.bias"))?;
                if w.shape.len() != 2 {
                    return Err(Error::Checkpoint(format!(
                        "{}: weight must be rank 2",
                        w.name
                    )));
                }
                Layer::new(
                    w.shape[1],
                    w.shape[0],
                    activation,
                    w.values.clone(),
                    b.values.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::new(layers)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Private parameters of one client as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientParams<S> {
    pub local_encoder: DenseNet<S>,
    pub gate: GateParams<S>,
}

/// Everything needed to score users after training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<S> {
    pub shape: ModelShape,
    pub server: ServerState<S>,
    pub clients: Vec<ClientParams<S>>,
    /// Caller-supplied metadata (for example the resolved run config).
    pub meta: BTreeMap<String, String>,
}

/// Packs the shared parameters and every client's private parameters.
pub fn model_checkpoint<S: Scalar>(
    shape: &ModelShape,
    server: &ServerState<S>,
    clients: &[ClientState<S>],
    meta: &BTreeMap<String, String>,
) -> Result<Checkpoint<S>> {
    let mut ckpt = Checkpoint::new();
    ckpt.meta
        .extend(meta.iter().map(|(k, v)| (k.clone(), v.clone())));
    for (k, v) in [
        ("items", shape.items),
        ("latent_dim", shape.latent),
        ("hidden_dim", shape.hidden),
        ("layers", shape.layers),
        ("clients", clients.len()),
    ] {
        ckpt.meta.insert(k.into(), v.to_string());
    }
    ckpt.meta.insert("round".into(), server.round.to_string());
    ckpt.push_net("global_encoder", &server.global_encoder)?;
    ckpt.push_net("decoder", &server.decoder)?;
    for c in clients {
        ckpt.push_net(&format!("client.{}.local_encoder", c.id), &c.local_encoder)?;
        ckpt.push(
            format!("client.{}.gate.psi", c.id),
            vec![c.gate.items(), 2],
            c.gate.psi().to_vec(),
        )?;
    }
    Ok(ckpt)
}

/// Inverse of [`model_checkpoint`]. The server's optimiser state starts fresh.
pub fn restore_model<S: Scalar>(ckpt: &Checkpoint<S>) -> Result<ModelCheckpoint<S>> {
    let shape = ModelShape {
        items: ckpt.meta_usize("items")?,
        latent: ckpt.meta_usize("latent_dim")?,
        hidden: ckpt.meta_usize("hidden_dim")?,
        layers: ckpt.meta_usize("layers")?,
    };
    let mut server = ServerState::from_parts(ckpt.net("global_encoder")?, ckpt.net("decoder")?)?;
    server.round = ckpt.meta_usize("round")? as u64;
    if server.items() != shape.items || server.latent() != shape.latent {
        return Err(Error::Checkpoint(format!(
            "shared nets have m = {}, k = {} but metadata says m = {}, k = {}",
            server.items(),
            server.latent(),
            shape.items,
            shape.latent
        )));
    }
    let n = ckpt.meta_usize("clients")?;
    let clients = (0..n)
        .map(|u| {
            let local_encoder = ckpt.net(&format!("client.{u}.local_encoder"))?;
            let psi = ckpt.require(&format!("client.{u}.gate.psi"))?;
            let gate = GateParams::from_psi(shape.items, psi.values.clone())?;
            if local_encoder.in_dim() != shape.items || local_encoder.out_dim() != 2 * shape.latent
            {
                return Err(Error::Checkpoint(format!(
                    "client {u}: local encoder does not match m, k"
                )));
            }
            Ok(ClientParams {
                local_encoder,
                gate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reserved = [
        "items",
        "latent_dim",
        "hidden_dim",
        "layers",
        "clients",
        "round",
    ];
    let meta = ckpt
        .meta
        .iter()
        .filter(|(k, _)| !reserved.contains(&k.as_str()) && !k.ends_with(".activations"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(ModelCheckpoint {
        shape,
        server,
        clients,
        meta,
    })
}

impl<S: Scalar> ModelCheckpoint<S> {
    /// Client states for `data`, which must be the dataset the checkpoint was
    /// trained on, prepared with the same seed.
    ///
    /// Fails with an error naming `m` and `k` when the dataset does not match.
    pub fn client_states(&self, data: &SplitDataset) -> Result<Vec<ClientState<S>>> {
        if data.n_items() != self.shape.items {
            return Err(Error::Checkpoint(format!(
                "dataset has m = {} items but the checkpoint was trained with m = {}, k = {}",
                data.n_items(),
                self.shape.items,
                self.shape.latent
            )));
        }
        if data.n_users() != self.clients.len() {
            return Err(Error::Checkpoint(format!(
                "dataset has {} users but the checkpoint stores {} clients (m = {}, k = {})",
                data.n_users(),
                self.clients.len(),
                self.shape.items,
                self.shape.latent
            )));
        }
        self.clients
            .iter()
            .enumerate()
            .map(|(u, p)| {
                let mut c = ClientState::from_parts(
                    u,
                    p.local_encoder.clone(),
                    p.gate.clone(),
                    data.train.row(u).to_vec(),
                )?;
                c.negatives = data.negatives.get(u).cloned().unwrap_or_default();
                c.heldout = data.test.get(u).copied();
                Ok(c)
            })
            .collect()
    }

    pub fn meta_json(&self) -> Value {
        Value::Object(
            self.meta
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect::<Map<_, _>>(),
        )
    }
}
