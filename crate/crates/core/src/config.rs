//! Run configuration.
//!
//! A [`RunConfig`] is assembled from three layers, highest priority first:
//! explicit overrides (command-line flags), a config file, and the built-in
//! defaults. Config files are either a JSON object or flat `key = value`
//! lines; in both cases the keys are the field names below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::DataFormat;
use crate::error::{Error, Result};
use crate::model::LossMode;

/// Directory searched for named datasets such as `ml-100k`.
pub const DATA_DIR_ENV: &str = "FEDDAE_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Federated,
    Central,
}

/// How shared and private parameters are stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Private parameters via per-client Adam, shared parameters via a
    /// server-side Adam fed the averaged client gradients.
    #[default]
    Adam,
    /// Gradient descent everywhere; the server applies
    /// `phi -= lr / n_s * sum(grad_phi)`.
    PlainSgd,
}

/// Client weights in the global objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientWeighting {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Path to the interaction file, or a named dataset (`ml-100k`).
    pub dataset: String,
    pub format: DataFormat,
    /// Field delimiter for `generic-csv`.
    pub delimiter: String,
    pub min_interactions: usize,
    pub negatives_per_positive: usize,
    /// Redraw negatives every local epoch instead of once per run.
    pub resample_negatives: bool,

    pub mode: Mode,
    pub update_rule: UpdateRule,
    /// Pins the gate to `(w, 1 - w)`, `w` weighing the global encoder.
    pub fixed_weight: Option<f64>,
    pub loss: LossMode,

    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub dropout: f64,

    pub lr: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Central mode only.
    pub batch_size: usize,
    /// Defaults to every client.
    pub clients_per_round: Option<usize>,
    /// Forbid a client from participating in two consecutive rounds.
    pub exclusive_rounds: bool,
    pub client_weighting: ClientWeighting,
    pub noise_variance: f64,

    pub beta_cap: f64,
    /// Defaults to 40% of all global update steps.
    pub anneal_steps: Option<u64>,

    pub top_k: usize,
    pub seed: u64,
    /// Evaluate every this many rounds; the last round is always evaluated.
    pub eval_interval: usize,
    /// Write a checkpoint every this many rounds; 0 writes only the final one.
    pub checkpoint_interval: usize,
    /// Run the clients of one round on the rayon pool.
    pub parallel: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "ml-100k".into(),
            format: DataFormat::MovielensTab,
            delimiter: ",".into(),
            min_interactions: 10,
            negatives_per_positive: 4,
            resample_negatives: false,
            mode: Mode::Federated,
            update_rule: UpdateRule::Adam,
            fixed_weight: None,
            loss: LossMode::Full,
            latent_dim: 256,
            hidden_dim: 16,
            layers: 3,
            dropout: 0.5,
            lr: 1e-2,
            rounds: 100,
            local_epochs: 10,
            batch_size: 2048,
            clients_per_round: None,
            exclusive_rounds: false,
            client_weighting: ClientWeighting::Uniform,
            noise_variance: 0.0,
            beta_cap: 1.0,
            anneal_steps: None,
            top_k: 20,
            seed: 0,
            eval_interval: 10,
            checkpoint_interval: 0,
            parallel: false,
            output_dir: PathBuf::from("runs/latest"),
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with `file` when given, overlaid with `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let mut merged = match serde_json::to_value(Self::default())? {
            Value::Object(map) => map,
            _ => unreachable!("RunConfig serialises to an object"),
        };
        if let Some(path) = file {
            for (k, v) in read_config_file(path)? {
                merged.insert(k, v);
            }
        }
        for (k, v) in overrides {
            merged.insert(k, v);
        }
        let config = Self::from_map(merged)?;
        config.validate()?;
        Ok(config)
    }

    fn from_map(map: Map<String, Value>) -> Result<Self> {
        let known: Vec<String> = match serde_json::to_value(Self::default())? {
            Value::Object(m) => m.keys().cloned().collect(),
            _ => unreachable!(),
        };
        if let Some(key) = map.keys().find(|k| !known.contains(k)) {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        // deserialise key by key so a type error names its key
        let mut out = Map::new();
        for (key, value) in map {
            let mut probe = Map::new();
            probe.insert(key.clone(), value.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(probe)) {
                return Err(Error::config(key, e.to_string()));
            }
            out.insert(key, value);
        }
        Ok(serde_json::from_value(Value::Object(out))?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
            ("top_k", self.top_k),
            ("eval_interval", self.eval_interval),
            ("min_interactions", self.min_interactions),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if self.clients_per_round == Some(0) {
            return Err(Error::config("clients_per_round", "must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("lr", "must be finite and >= 0"));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::config("noise_variance", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.beta_cap) {
            return Err(Error::config("beta_cap", "must lie in [0, 1]"));
        }
        if let Some(w) = self.fixed_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::config("fixed_weight", "must lie in [0, 1]"));
            }
        }
        if self.dataset.is_empty() {
            return Err(Error::config("dataset", "must not be empty"));
        }
        Ok(())
    }

    /// Concrete path for `dataset`, expanding named datasets.
    pub fn dataset_path(&self) -> PathBuf {
        resolve_dataset(&self.dataset)
    }

    /// Global update steps over the whole run, the unit of the beta ramp.
    pub fn total_steps(&self, n_users: usize) -> u64 {
        let per_round = match self.mode {
            Mode::Federated => self.local_epochs,
            Mode::Central => n_users.div_ceil(self.batch_size.min(n_users).max(1)),
        };
        (self.rounds * per_round) as u64
    }

    pub fn anneal_steps_for(&self, n_users: usize) -> u64 {
        self.anneal_steps
            .unwrap_or_else(|| (self.total_steps(n_users) as f64 * 0.4).round() as u64)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Expands `ml-100k` to `<data dir>/ml-100k/u.data`; other names are paths.
pub fn resolve_dataset(name: &str) -> PathBuf {
    match name {
        "ml-100k" => {
            let base = std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data"));
            base.join("ml-100k").join("u.data")
        }
        other => PathBuf::from(other),
    }
}

/// Reads a JSON object or `key = value` config file into a key map.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if text.trim_start().starts_with('{') {
        return match serde_json::from_str::<Value>(&text)? {
            Value::Object(map) => Ok(map),
            _ => Err(Error::config("config", "JSON config must be an object")),
        };
    }
    parse_key_values(&text)
}

/// Parses `key = value` lines. Values that parse as JSON (numbers, booleans,
/// `null`, quoted strings) keep that type; anything else is a string.
pub fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected `key = value`"))?;
        let key = key.trim().replace('-', "_");
        map.insert(key, parse_scalar(value.trim()));
    }
    Ok(map)
}

pub fn parse_scalar(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn overrides(pairs: &[(&str, Value)]) -> Map<String, Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::resolve(None, Map::new()).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(
            (
                c.latent_dim,
                c.layers,
                c.local_epochs,
                c.top_k,
                c.batch_size
            ),
            (256, 3, 10, 20, 2048)
        );
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nrounds = 7\nseed = 3\nmode = central\n").unwrap();
        let c = RunConfig::resolve(Some(&path), overrides(&[("seed", json!(11))])).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.rounds, 7);
        assert_eq!(c.mode, Mode::Central);
        assert_eq!(c.local_epochs, 10);
    }

    #[test]
    fn json_file_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"fixed_weight": 0.75, "update_rule": "plain-sgd"}"#,
        )
        .unwrap();
        let c = RunConfig::resolve(Some(&path), Map::new()).unwrap();
        assert_eq!(c.fixed_weight, Some(0.75));
        assert_eq!(c.update_rule, UpdateRule::PlainSgd);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.noise_variance = 0.5;
        c.anneal_steps = Some(12);
        let text = c.to_json_pretty().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.json");
        std::fs::write(&path, text).unwrap();
        assert_eq!(RunConfig::resolve(Some(&path), Map::new()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let key_of = |m: Map<String, Value>| match RunConfig::resolve(None, m) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(
            key_of(overrides(&[("fixed_weight", json!(1.5))])),
            "fixed_weight"
        );
        assert_eq!(
            key_of(overrides(&[("noise_variance", json!(-1.0))])),
            "noise_variance"
        );
        assert_eq!(
            key_of(overrides(&[("local_epochs", json!(0))])),
            "local_epochs"
        );
        assert_eq!(
            key_of(overrides(&[("no_such_key", json!(1))])),
            "no_such_key"
        );
        assert_eq!(key_of(overrides(&[("rounds", json!("many"))])), "rounds");
        assert_eq!(key_of(overrides(&[("dropout", json!(1.0))])), "dropout");
    }

    #[test]
    fn key_value_parsing_types() {
        let m = parse_key_values("a = 1\nb-c = true\nd = some/path\ne = null\n").unwrap();
        assert_eq!(m["a"], json!(1));
        assert_eq!(m["b_c"], json!(true));
        assert_eq!(m["d"], json!("some/path"));
        assert_eq!(m["e"], Value::Null);
        assert!(parse_key_values("oops").is_err());
    }

    #[test]
    fn default_anneal_is_forty_percent() {
        let c = RunConfig::default();
        assert_eq!(c.anneal_steps_for(943), 400);
        let central = RunConfig {
            mode: Mode::Central,
            batch_size: 100,
            rounds: 10,
            ..RunConfig::default()
        };
        assert_eq!(central.total_steps(943), 100);
    }

    #[test]
    fn named_dataset_expands() {
        assert!(resolve_dataset("ml-100k").ends_with("ml-100k/u.data"));
        assert_eq!(resolve_dataset("x/y.csv"), PathBuf::from("x/y.csv"));
    }
}
