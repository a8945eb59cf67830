use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::{Map, Value};

use feddae::checkpoint::{model_checkpoint, restore_model, Checkpoint, ModelCheckpoint};
use feddae::config::{parse_scalar, resolve_dataset, Mode, RunConfig};
use feddae::data::{binarize_and_filter, load_dataset, prepare, SplitDataset};
use feddae::export::{embeddings_csv, user_embeddings};
use feddae::fed::{
    evaluate, run_central, run_federated, ClientState, Observer, RoundReport, ServerState,
};
use feddae::metrics::{ranks_csv, Metrics};
use feddae::model::{GateMode, ModelShape};

/// Config keys whose values are always strings, even when they look numeric.
const STRING_KEYS: &[&str] = &[
    "dataset",
    "delimiter",
    "output_dir",
    "format",
    "mode",
    "update_rule",
    "loss",
];

fn config_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn cli() -> Command {
    let mut train = Command::new("train")
        .about("Train a model and write reports, metrics and a checkpoint")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("JSON or key = value config file; flags take precedence"),
        )
        .arg(
            Arg::new("ranks-csv")
                .long("ranks-csv")
                .action(ArgAction::SetTrue)
                .help("Also write ranks.csv with every user's held-out rank"),
        );
    for key in config_keys() {
        let flag = key.replace('_', "-");
        let bool_like = matches!(
            key.as_str(),
            "resample_negatives" | "exclusive_rounds" | "parallel"
        );
        let mut arg = Arg::new(key.clone())
            .long(flag)
            .value_name("VALUE")
            .allow_negative_numbers(true);
        if bool_like {
            arg = arg.num_args(0..=1).default_missing_value("true");
        }
        train = train.arg(arg);
    }

    Command::new("feddae")
        .about("Federated collaborative filtering with gated dual-encoder VAEs")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(train)
        .subcommand(
            Command::new("evaluate")
                .about("Recompute HR@K and NDCG@K from a checkpoint")
                .arg(checkpoint_arg())
                .arg(dataset_arg())
                .arg(
                    Arg::new("k")
                        .long("k")
                        .value_parser(clap::value_parser!(usize))
                        .help("Cut-off K (defaults to the trained top_k)"),
                ),
        )
        .subcommand(
            Command::new("stats")
                .about("Print rating, user and item counts and sparsity")
                .arg(dataset_arg().required(true))
                .arg(Arg::new("format").long("format").value_name("FORMAT"))
                .arg(Arg::new("delimiter").long("delimiter").value_name("SEP"))
                .arg(
                    Arg::new("min-interactions")
                        .long("min-interactions")
                        .value_parser(clap::value_parser!(usize)),
                ),
        )
        .subcommand(
            Command::new("export-embeddings")
                .about("Write global, local and combined item embeddings per user as CSV")
                .arg(checkpoint_arg())
                .arg(dataset_arg())
                .arg(
                    Arg::new("users")
                        .long("users")
                        .required(true)
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(u64))
                        .help("Comma-separated raw user ids"),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_parser(clap::value_parser!(PathBuf))
                        .default_value("embeddings"),
                ),
        )
}

fn checkpoint_arg() -> Arg {
    Arg::new("checkpoint")
        .long("checkpoint")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
}

fn dataset_arg() -> Arg {
    Arg::new("dataset")
        .long("dataset")
        .help("Interaction file, or `ml-100k` for the bundled MovieLens layout")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("evaluate", m)) => cmd_evaluate(m),
        Some(("stats", m)) => cmd_stats(m),
        Some(("export-embeddings", m)) => cmd_export(m),
        _ => unreachable!("subcommand_required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(
                e.downcast_ref::<feddae::Error>(),
                Some(feddae::Error::Config { .. })
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn overrides(m: &ArgMatches) -> Map<String, Value> {
    let mut out = Map::new();
    for key in config_keys() {
        if let Some(raw) = m.get_one::<String>(&key) {
            let value = if STRING_KEYS.contains(&key.as_str()) {
                Value::String(raw.clone())
            } else {
                parse_scalar(raw)
            };
            out.insert(key, value);
        }
    }
    out
}

fn shape_of(config: &RunConfig, data: &SplitDataset) -> ModelShape {
    ModelShape {
        items: data.n_items(),
        latent: config.latent_dim,
        hidden: config.hidden_dim,
        layers: config.layers,
    }
}

fn gate_of(config: &RunConfig) -> GateMode<f64> {
    config
        .fixed_weight
        .map_or(GateMode::Learned, GateMode::Fixed)
}

fn prepare_for(config: &RunConfig) -> anyhow::Result<SplitDataset> {
    let path = config.dataset_path();
    let data = prepare(
        &path,
        config.format,
        &config.delimiter,
        config.min_interactions,
        config.negatives_per_positive,
        config.seed,
    )
    .with_context(|| format!("preparing {}", path.display()))?;
    Ok(data)
}

fn metrics_text(metrics: &Metrics) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(&metrics.to_json())?;
    text.push('\n');
    Ok(text)
}

struct RunWriter {
    dir: PathBuf,
    rounds: BufWriter<File>,
    shape: ModelShape,
    meta: BTreeMap<String, String>,
}

impl RunWriter {
    fn checkpoint(
        &self,
        server: &ServerState<f64>,
        clients: &[ClientState<f64>],
        name: &str,
    ) -> feddae::Result<()> {
        let ckpt = model_checkpoint(&self.shape, server, clients, &self.meta)?;
        ckpt.save(&self.dir.join(name))
    }
}

impl Observer<f64> for RunWriter {
    fn on_round(&mut self, report: &RoundReport) -> feddae::Result<()> {
        serde_json::to_writer(&mut self.rounds, report)?;
        self.rounds.write_all(b"\n")?;
        self.rounds.flush()?;
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        server: &ServerState<f64>,
        clients: &[ClientState<f64>],
    ) -> feddae::Result<()> {
        self.checkpoint(
            server,
            clients,
            &format!("checkpoint-{:04}.bin", server.round),
        )
    }
}

fn cmd_train(m: &ArgMatches) -> anyhow::Result<()> {
    let config = RunConfig::resolve(
        m.get_one::<PathBuf>("config").map(PathBuf::as_path),
        overrides(m),
    )?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.json"), config.to_json_pretty()? + "\n")?;

    let data = prepare_for(&config)?;
    log::info!(
        "{}: {} users, {} items, {} train positives",
        config.dataset,
        data.n_users(),
        data.n_items(),
        data.train.nnz()
    );
    let mut meta = BTreeMap::new();
    meta.insert("config".to_string(), serde_json::to_string(&config)?);
    let mut writer = RunWriter {
        rounds: BufWriter::new(File::create(dir.join("rounds.jsonl"))?),
        dir: dir.clone(),
        shape: shape_of(&config, &data),
        meta,
    };
    let run = match config.mode {
        Mode::Federated => run_federated::<f64>(&config, &data, &mut writer)?,
        Mode::Central => run_central::<f64>(&config, &data, &mut writer)?,
    };
    writer.checkpoint(&run.server, &run.clients, "checkpoint.bin")?;
    std::fs::write(dir.join("metrics.json"), metrics_text(&run.metrics)?)?;
    if m.get_flag("ranks-csv") {
        std::fs::write(
            dir.join("ranks.csv"),
            ranks_csv(&run.ranks, |u| data.train.raw_user_id(u)),
        )?;
    }
    print!("{}", metrics_text(&run.metrics)?);
    Ok(())
}

/// The checkpoint, its training config (with `--dataset` applied) and the
/// matching re-prepared dataset.
fn load_trained(m: &ArgMatches) -> anyhow::Result<(ModelCheckpoint<f64>, RunConfig, SplitDataset)> {
    let path = m.get_one::<PathBuf>("checkpoint").expect("required");
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    let ckpt = restore_model(&Checkpoint::<f64>::load(path)?)?;
    let mut config: RunConfig = match ckpt.meta.get("config") {
        Some(text) => serde_json::from_str(text).context("checkpoint config")?,
        None => RunConfig::default(),
    };
    if let Some(dataset) = m.get_one::<String>("dataset") {
        config.dataset = dataset.clone();
    }
    let data = prepare_for(&config)?;
    Ok((ckpt, config, data))
}

fn cmd_evaluate(m: &ArgMatches) -> anyhow::Result<()> {
    let (ckpt, config, data) = load_trained(m)?;
    let k = m.get_one::<usize>("k").copied().unwrap_or(config.top_k);
    if k == 0 {
        return Err(feddae::Error::config("k", "must be >= 1").into());
    }
    let clients = ckpt.client_states(&data)?;
    let ranks = evaluate(&ckpt.server, &clients, &data, gate_of(&config))?;
    let metrics = Metrics::from_ranks(&ranks, k, config.seed)?;
    print!("{}", metrics_text(&metrics)?);
    Ok(())
}

fn cmd_stats(m: &ArgMatches) -> anyhow::Result<()> {
    let defaults = RunConfig::default();
    let name = m.get_one::<String>("dataset").expect("required");
    let format = match m.get_one::<String>("format") {
        Some(f) => serde_json::from_value(Value::String(f.clone()))
            .map_err(|e| feddae::Error::config("format", e.to_string()))?,
        None => defaults.format,
    };
    let delimiter = m
        .get_one::<String>("delimiter")
        .cloned()
        .unwrap_or(defaults.delimiter);
    let min = m
        .get_one::<usize>("min-interactions")
        .copied()
        .unwrap_or(defaults.min_interactions);
    let path = resolve_dataset(name);
    let loaded = load_dataset(&path, format, &delimiter)?;
    let stats = binarize_and_filter(&loaded.records, min)?.stats();
    let mut out = serde_json::to_value(stats)?;
    out["sparsity_label"] = Value::String(stats.sparsity_label());
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_export(m: &ArgMatches) -> anyhow::Result<()> {
    let (ckpt, config, data) = load_trained(m)?;
    let out = m.get_one::<PathBuf>("out").expect("defaulted");
    std::fs::create_dir_all(out)?;
    let clients = ckpt.client_states(&data)?;
    let ids = data.train.user_ids();
    let (lo, hi) = (ids.iter().min().copied(), ids.iter().max().copied());
    for &raw in m.get_many::<u64>("users").expect("required") {
        let u = data.train.user_index(raw).ok_or_else(|| match (lo, hi) {
            (Some(lo), Some(hi)) => anyhow!(
                "unknown user id {raw}; valid ids lie in {lo}..={hi} ({} users)",
                ids.len()
            ),
            _ => anyhow!("unknown user id {raw}; the dataset has no users"),
        })?;
        let emb = user_embeddings(&ckpt.server, &clients[u], gate_of(&config))?;
        let positives = data.train.row(u);
        for (kind, matrix) in [
            ("global", &emb.global),
            ("local", &emb.local),
            ("combined", &emb.combined),
        ] {
            let path = out.join(format!("user_{raw}_{kind}.csv"));
            std::fs::write(
                &path,
                embeddings_csv(matrix, positives, |i| data.train.raw_item_id(i)),
            )
            .with_context(|| format!("writing {}", path.display()))?;
        }
        log::info!(
            "user {raw}: gate weights ({:.4}, {:.4})",
            emb.weights.0,
            emb.weights.1
        );
    }
    Ok(())
}
