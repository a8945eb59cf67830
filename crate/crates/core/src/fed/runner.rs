use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::metrics::{rank_heldout, Metrics, RankResult};
use crate::model::{BetaSchedule, GateMode, ModelShape};
use crate::rng::substream;
use crate::scalar::Scalar;

use super::{
    add_gradient_noise, apply_update, client_update, sample_clients, ClientState, ClientUpload,
    GradientSum, LocalSettings, NoiseConfig, ServerState,
};

/// Summary of one communication round (one epoch in central mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based round index.
    pub t: u64,
    /// Mean ELBO over the local epochs of the successful clients.
    pub elbo_mean: Option<f64>,
    /// Raw ids of the sampled clients.
    pub participants: Vec<u64>,
    /// Raw ids of clients excluded after a non-finite update.
    pub failed: Vec<u64>,
    pub beta: f64,
    pub k: usize,
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
    pub wall_secs: f64,
}

impl RoundReport {
    /// Copy with the wall time zeroed, for replay comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Callbacks invoked while a run progresses.
pub trait Observer<S> {
    /// Every message a client sends to the server, after noise.
    fn on_upload(&mut self, _upload: &ClientUpload<S>) {}

    fn on_round(&mut self, _report: &RoundReport) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_interval` rounds.
    fn on_checkpoint(
        &mut self,
        _server: &ServerState<S>,
        _clients: &[ClientState<S>],
    ) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopObserver;

impl<S> Observer<S> for NoopObserver {}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainingRun<S> {
    pub server: ServerState<S>,
    pub clients: Vec<ClientState<S>>,
    pub reports: Vec<RoundReport>,
    pub ranks: Vec<RankResult>,
    pub metrics: Metrics,
}

struct Setup<S> {
    server: ServerState<S>,
    clients: Vec<ClientState<S>>,
    schedule: BetaSchedule,
    gate: GateMode<S>,
    noise: NoiseConfig,
}

fn setup<S: Scalar>(config: &RunConfig, data: &SplitDataset) -> Result<Setup<S>> {
    config.validate()?;
    let n = data.n_users();
    if n == 0 {
        return Err(Error::config("dataset", "no users after filtering"));
    }
    let shape = ModelShape {
        items: data.n_items(),
        latent: config.latent_dim,
        hidden: config.hidden_dim,
        layers: config.layers,
    };
    let server = ServerState::init(&shape, config.seed)?;
    let clients = (0..n)
        .map(|u| {
            let mut c = ClientState::init(&shape, config.seed, u, data.train.row(u).to_vec())?;
            c.negatives = data.negatives.get(u).cloned().unwrap_or_default();
            c.heldout = data.test.get(u).copied();
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Setup {
        server,
        clients,
        schedule: BetaSchedule::new(config.anneal_steps_for(n), config.beta_cap),
        gate: config
            .fixed_weight
            .map_or(GateMode::Learned, |w| GateMode::Fixed(S::of(w))),
        noise: NoiseConfig::new(config.noise_variance)?,
    })
}

fn settings<S: Scalar>(
    config: &RunConfig,
    gate: GateMode<S>,
    epochs: usize,
    first_step: u64,
) -> LocalSettings<S> {
    LocalSettings {
        epochs,
        lr: S::of(config.lr),
        dropout: S::of(config.dropout),
        gate,
        rule: config.update_rule,
        loss: config.loss,
        first_step,
        resample_negatives: config
            .resample_negatives
            .then_some(config.negatives_per_positive),
    }
}

/// Ranks every user's held-out item with the current shared and private
/// parameters.
pub fn evaluate<S: Scalar>(
    server: &ServerState<S>,
    clients: &[ClientState<S>],
    data: &SplitDataset,
    gate: GateMode<S>,
) -> Result<Vec<RankResult>> {
    if clients.len() != data.n_users() {
        return Err(Error::dim("client count", data.n_users(), clients.len()));
    }
    if server.items() != data.n_items() {
        return Err(Error::dim("items (m)", data.n_items(), server.items()));
    }
    clients
        .par_iter()
        .map(|c| {
            let scores = c.view(server).predict_scores(&c.interactions(), gate)?;
            rank_heldout(c.id, &scores, data.test[c.id], data.train.row(c.id))
        })
        .collect()
}

/// Runs the local updates of `selected` (ascending) and hands each result to
/// `sink` in ascending client order. Parallel mode processes bounded chunks
/// so only a few uploads are alive at once.
#[allow(clippy::too_many_arguments)]
fn run_clients<S: Scalar>(
    clients: &mut [ClientState<S>],
    selected: &[usize],
    server: &ServerState<S>,
    schedule: &BetaSchedule,
    local: &LocalSettings<S>,
    seed: u64,
    round: u64,
    parallel: bool,
    mut sink: impl FnMut(usize, Result<ClientUpload<S>>) -> Result<()>,
) -> Result<()> {
    let update = |c: &mut ClientState<S>| {
        let mut rng = substream(seed, "client", round, c.id as u64);
        client_update(
            c,
            &server.global_encoder,
            &server.decoder,
            schedule,
            local,
            &mut rng,
        )
    };
    let mut mask = vec![false; clients.len()];
    for &u in selected {
        mask[u] = true;
    }
    if !parallel {
        for &u in selected {
            let result = update(&mut clients[u]);
            sink(u, result)?;
        }
        return Ok(());
    }
    let chunk = (rayon::current_num_threads() * 4).max(1);
    let mut picked: Vec<&mut ClientState<S>> = clients.iter_mut().filter(|c| mask[c.id]).collect();
    for group in picked.chunks_mut(chunk) {
        let results: Vec<(usize, Result<ClientUpload<S>>)> =
            group.par_iter_mut().map(|c| (c.id, update(c))).collect();
        for (u, r) in results {
            sink(u, r)?;
        }
    }
    Ok(())
}

struct RoundOutcome<S> {
    sum: GradientSum<S>,
    elbo_total: f64,
    failed: Vec<u64>,
}

fn collect_round<S: Scalar>(
    setup: &mut Setup<S>,
    selected: &[usize],
    local: &LocalSettings<S>,
    config: &RunConfig,
    data: &SplitDataset,
    t: u64,
    observer: &mut dyn Observer<S>,
) -> Result<RoundOutcome<S>> {
    let mut out = RoundOutcome {
        sum: GradientSum::new(&setup.server),
        elbo_total: 0.0,
        failed: Vec::new(),
    };
    let noise = setup.noise;
    run_clients(
        &mut setup.clients,
        selected,
        &setup.server,
        &setup.schedule,
        local,
        config.seed,
        t,
        config.parallel,
        |u, result| match result {
            Ok(upload) => {
                let mut rng = substream(config.seed, "noise", t, u as u64);
                let upload = add_gradient_noise(upload, noise, &mut rng);
                observer.on_upload(&upload);
                out.elbo_total += upload.elbo_mean();
                out.sum.add(&upload)
            }
            Err(Error::NonFinite { tensor }) => {
                log::warn!(
                    "round {}: client {} produced a non-finite {tensor}; excluded",
                    t + 1,
                    data.train.raw_user_id(u)
                );
                out.failed.push(data.train.raw_user_id(u));
                Ok(())
            }
            Err(e) => Err(e),
        },
    )?;
    Ok(out)
}

struct RoundSummary {
    elbo_mean: Option<f64>,
    failed: Vec<u64>,
    participants: Vec<u64>,
    beta: f64,
}

#[allow(clippy::too_many_arguments)]
fn finish_round<S: Scalar>(
    setup: &mut Setup<S>,
    sum: GradientSum<S>,
    summary: RoundSummary,
    config: &RunConfig,
    data: &SplitDataset,
    t: u64,
    started: Instant,
    observer: &mut dyn Observer<S>,
) -> Result<RoundReport> {
    apply_update(&mut setup.server, sum, S::of(config.lr), config.update_rule)?;
    setup.server.round += 1;
    let done = t + 1;
    let (hr, ndcg) = if done.is_multiple_of(config.eval_interval as u64) || done == config.rounds as u64 {
        let ranks = evaluate(&setup.server, &setup.clients, data, setup.gate)?;
        let m = Metrics::from_ranks(&ranks, config.top_k, config.seed)?;
        (Some(m.hr), Some(m.ndcg))
    } else {
        (None, None)
    };
    let report = RoundReport {
        t: done,
        elbo_mean: summary.elbo_mean,
        participants: summary.participants,
        failed: summary.failed,
        beta: summary.beta,
        k: config.top_k,
        hr,
        ndcg,
        wall_secs: started.elapsed().as_secs_f64(),
    };
    log::info!(
        "round {done}/{}: elbo {:.4} hr@{} {} ndcg@{} {} ({:.1}s)",
        config.rounds,
        report.elbo_mean.unwrap_or(f64::NAN),
        config.top_k,
        hr.map_or("-".to_string(), |v| format!("{v:.4}")),
        config.top_k,
        ndcg.map_or("-".to_string(), |v| format!("{v:.4}")),
        report.wall_secs
    );
    observer.on_round(&report)?;
    if config.checkpoint_interval > 0 && done.is_multiple_of(config.checkpoint_interval as u64) {
        observer.on_checkpoint(&setup.server, &setup.clients)?;
    }
    Ok(report)
}

fn finish<S: Scalar>(
    setup: Setup<S>,
    reports: Vec<RoundReport>,
    config: &RunConfig,
    data: &SplitDataset,
) -> Result<TrainingRun<S>> {
    let ranks = evaluate(&setup.server, &setup.clients, data, setup.gate)?;
    let metrics = Metrics::from_ranks(&ranks, config.top_k, config.seed)?;
    Ok(TrainingRun {
        server: setup.server,
        clients: setup.clients,
        reports,
        ranks,
        metrics,
    })
}

/// Federated training: `rounds` rounds of sample, local update, noise and
/// aggregation.
pub fn run_federated<S: Scalar>(
    config: &RunConfig,
    data: &SplitDataset,
    observer: &mut dyn Observer<S>,
) -> Result<TrainingRun<S>> {
    if config.mode != Mode::Federated {
        return Err(Error::config(
            "mode",
            "run_federated needs mode = federated",
        ));
    }
    let mut setup = setup::<S>(config, data)?;
    let n = data.n_users();
    let n_s = config.clients_per_round.unwrap_or(n);
    if n_s > n {
        return Err(Error::config(
            "clients_per_round",
            format!("n_s = {n_s} exceeds n = {n}"),
        ));
    }
    if config.exclusive_rounds && config.rounds > 1 && 2 * n_s > n {
        return Err(Error::config(
            "clients_per_round",
            format!(
                "exclusive rounds need n_s <= n - n_s, got n_s = {n_s}, n = {n}; \
                 disable exclusive_rounds for full participation"
            ),
        ));
    }
    let epochs = config.local_epochs;
    let mut reports = Vec::with_capacity(config.rounds);
    for t in 0..config.rounds as u64 {
        let started = Instant::now();
        let selected = if n_s == n && !config.exclusive_rounds {
            (0..n).collect()
        } else {
            let empty = BTreeSet::new();
            let previous = if config.exclusive_rounds {
                &setup.server.previous
            } else {
                &empty
            };
            sample_clients(
                n,
                n_s,
                previous,
                &mut substream(config.seed, "sample", t, 0),
            )?
        };
        let first_step = t * epochs as u64;
        let local = settings(config, setup.gate, epochs, first_step);
        let outcome = collect_round(&mut setup, &selected, &local, config, data, t, observer)?;
        let count = outcome.sum.count;
        let summary = RoundSummary {
            elbo_mean: (count > 0).then(|| outcome.elbo_total / count as f64),
            failed: outcome.failed,
            participants: selected
                .iter()
                .map(|&u| data.train.raw_user_id(u))
                .collect(),
            beta: setup.schedule.at(first_step + epochs as u64 - 1),
        };
        setup.server.previous = selected.into_iter().collect();
        let report = finish_round(
            &mut setup,
            outcome.sum,
            summary,
            config,
            data,
            t,
            started,
            observer,
        )?;
        reports.push(report);
    }
    finish(setup, reports, config, data)
}

/// Centralised training over user minibatches. Each epoch visits every user
/// once in a seeded random order; every batch contributes one update of the
/// shared parameters from the batch-mean gradient. `local_epochs` is unused.
pub fn run_central<S: Scalar>(
    config: &RunConfig,
    data: &SplitDataset,
    observer: &mut dyn Observer<S>,
) -> Result<TrainingRun<S>> {
    if config.mode != Mode::Central {
        return Err(Error::config("mode", "run_central needs mode = central"));
    }
    let mut setup = setup::<S>(config, data)?;
    let n = data.n_users();
    let batch = if config.batch_size > n {
        log::warn!(
            "batch_size {} exceeds {n} users; clamped to {n}",
            config.batch_size
        );
        n
    } else {
        config.batch_size
    };
    setup.noise = NoiseConfig::default();
    let mut step = 0u64;
    let mut reports = Vec::with_capacity(config.rounds);
    for t in 0..config.rounds as u64 {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(
            order.as_mut_slice(),
            &mut substream(config.seed, "central.order", t, 0),
        );
        let batches: Vec<Vec<usize>> = order
            .chunks(batch)
            .map(|b| {
                let mut b = b.to_vec();
                b.sort_unstable();
                b
            })
            .collect();
        let mut elbo_total = 0.0;
        let mut successes = 0usize;
        let mut failed = Vec::new();
        let last = batches.len() - 1;
        let mut final_outcome = None;
        for (bi, members) in batches.iter().enumerate() {
            let local = settings(config, setup.gate, 1, step);
            let outcome = collect_round(&mut setup, members, &local, config, data, t, observer)?;
            elbo_total += outcome.elbo_total;
            successes += outcome.sum.count;
            failed.extend_from_slice(&outcome.failed);
            step += 1;
            if bi == last {
                final_outcome = Some(outcome);
            } else {
                apply_update(
                    &mut setup.server,
                    outcome.sum,
                    S::of(config.lr),
                    config.update_rule,
                )?;
            }
        }
        // the last batch is applied by `finish_round`, which also evaluates
        let outcome = final_outcome.expect("at least one batch");
        let summary = RoundSummary {
            elbo_mean: (successes > 0).then(|| elbo_total / successes as f64),
            failed,
            participants: data.train.user_ids().to_vec(),
            beta: setup.schedule.at(step - 1),
        };
        let report = finish_round(
            &mut setup,
            outcome.sum,
            summary,
            config,
            data,
            t,
            started,
            observer,
        )?;
        reports.push(report);
    }
    finish(setup, reports, config, data)
}
