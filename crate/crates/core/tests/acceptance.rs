//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! three MovieLens training criteria dominate the runtime (nine 100-round
//! runs); set `FEDDAE_SKIP_REPRODUCTION=1` to report them as SKIP during
//! development, and `FEDDAE_ACCEPTANCE_FULL=1` to also train the
//! informational w=0.25 and w=0.5 variants.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use feddae::checkpoint::model_checkpoint;
use feddae::config::{RunConfig, DATA_DIR_ENV};
use feddae::data::{
    binarize_and_filter, leave_one_out_split, load_dataset, prepare, DataFormat, InteractionMatrix,
    SplitDataset,
};
use feddae::fed::{
    add_gradient_noise, client_update, run_federated, ClientState, ClientUpload, LocalSettings,
    NoiseConfig, NoopObserver, Observer, RoundReport, ServerState, TrainingRun,
};
use feddae::metrics::{hr_at_k, ndcg_at_k, rank_heldout, RankResult};
use feddae::model::{
    combine_posteriors, elbo_backward, elbo_with_noise, kl_to_standard_normal, BetaSchedule,
    BundleGrads, ElboNoise, ElboOptions, GateMode, GaussianPosterior, LossMode, ModelBundle,
    ModelShape,
};
use feddae::rng::substream;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn ml100k_path() -> PathBuf {
    let base = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    base.join("ml-100k").join("u.data")
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| !v.is_empty() && v != "0")
}

fn ingestion() -> Outcome {
    let path = ml100k_path();
    if !path.exists() {
        return Outcome::Fail(format!(
            "{} not found (run scripts/fetch_ml100k.sh)",
            path.display()
        ));
    }
    let started = Instant::now();
    let stats = load_dataset(&path, DataFormat::MovielensTab, ",")
        .and_then(|d| binarize_and_filter(&d.records, 10))
        .map(|m| m.stats());
    let secs = started.elapsed().as_secs_f64();
    match stats {
        Ok(s) => verdict(
            s.ratings == 100_000
                && s.users == 943
                && s.items == 1682
                && s.sparsity_label() == "93.70%"
                && secs < 5.0,
            format!(
                "{} ratings, {} users, {} items, {} sparsity in {secs:.2}s",
                s.ratings,
                s.users,
                s.items,
                s.sparsity_label()
            ),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn bundle_params(b: &mut ModelBundle<f64>) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    out.extend(b.global_encoder.tensors_mut());
    out.extend(b.local_encoder.tensors_mut());
    out.push(b.gate.psi_mut());
    out.extend(b.decoder.tensors_mut());
    out
}

fn bundle_grads(g: &BundleGrads<f64>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    out.extend(g.global_encoder.tensors.iter().cloned());
    out.extend(g.local_encoder.tensors.iter().cloned());
    out.push(g.gate.clone());
    out.extend(g.decoder.tensors.iter().cloned());
    out
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let shape = ModelShape {
        items: 12,
        latent: 3,
        hidden: 8,
        layers: 3,
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for case in 0..20u64 {
        let mut b = ModelBundle::<f64>::init(&shape, case, 0).unwrap();
        let mut rng = substream(case, "acceptance.bundle", 0, 0);
        for t in bundle_params(&mut b) {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let mut r: Vec<f64> = (0..12)
            .map(|_| f64::from(rng.random_bool(0.4) as u8))
            .collect();
        r[case as usize % 12] = 1.0;
        let opts = ElboOptions {
            beta: rng.random_range(0.0..1.0),
            train: true,
            dropout: 0.5,
            gate: GateMode::Learned,
            candidates: None,
        };
        let noise = ElboNoise::draw(&r, &opts, 3, &mut rng).unwrap();
        let loss = |b: &ModelBundle<f64>| -elbo_with_noise(b, &r, &opts, noise.clone()).unwrap().0;
        let (_, tape) = elbo_with_noise(&b, &r, &opts, noise.clone()).unwrap();
        let mut grads = b.zero_grads();
        elbo_backward(&b, &tape, &mut grads).unwrap();
        let analytic = bundle_grads(&grads);
        for (t, tensor) in analytic.iter().enumerate() {
            for (j, &an) in tensor.iter().enumerate() {
                let mut plus = b.clone();
                bundle_params(&mut plus)[t][j] += h;
                let mut minus = b.clone();
                bundle_params(&mut minus)[t][j] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 60.0,
        format!("{checked} partials over 20 bundles, max relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn kl_oracle() -> Outcome {
    let n = 100_000;
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut rng = substream(case, "acceptance.kl", 0, 0);
        let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
        let log_var: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.0)).collect();
        let gp = GaussianPosterior::new(mu.clone(), log_var.clone()).unwrap();
        let closed = kl_to_standard_normal(&gp);
        let mut total = 0.0;
        for _ in 0..n {
            let mut log_ratio = 0.0;
            for j in 0..4 {
                let eps: f64 = rng.sample(StandardNormal);
                let z = mu[j] + (0.5 * log_var[j]).exp() * eps;
                // ln q(z) - ln p(z); the 2*pi terms cancel
                log_ratio += -0.5 * log_var[j] - 0.5 * eps * eps + 0.5 * z * z;
            }
            total += log_ratio;
        }
        let mc = total / n as f64;
        worst = worst.max((closed - mc).abs() / closed.abs());
    }
    verdict(
        worst <= 0.01,
        format!("20 posteriors, max relative gap {:.3}%", 100.0 * worst),
    )
}

fn mixture_oracle() -> Outcome {
    let n = 100_000;
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut rng = substream(case, "acceptance.mixture", 0, 0);
        let (mu1, mu2): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (lv1, lv2): (f64, f64) = (rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0));
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let w1 = a.exp() / (a.exp() + b.exp());
        let w2 = 1.0 - w1;
        let combined = combine_posteriors(
            &GaussianPosterior::new(vec![mu1], vec![lv1]).unwrap(),
            &GaussianPosterior::new(vec![mu2], vec![lv2]).unwrap(),
            w1,
            w2,
        )
        .unwrap();
        let (mu, var) = (combined.mu[0], combined.log_var[0].exp());
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let x = mu1 + (0.5 * lv1).exp() * rng.sample::<f64, _>(StandardNormal);
                let y = mu2 + (0.5 * lv2).exp() * rng.sample::<f64, _>(StandardNormal);
                w1 * x + w2 * y
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sample_var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / (n as f64 - 1.0)).sqrt();
        worst = worst
            .max((mean - mu).abs() / se_mean)
            .max((sample_var - var).abs() / se_var);
    }
    verdict(
        worst <= 3.0,
        format!("20 mixtures, worst deviation {worst:.2} standard errors"),
    )
}

fn toy_split(users: usize, items: usize, seed: u64) -> SplitDataset {
    let mut rng = substream(seed, "acceptance.toy", 0, 0);
    let rows = (0..users)
        .map(|u| {
            let mut row: Vec<usize> = (0..items).filter(|_| rng.random_bool(0.25)).collect();
            row.extend([u % items, (u + 2) % items, (u + 5) % items]);
            row
        })
        .collect();
    let mat = InteractionMatrix::from_rows(items, rows).unwrap();
    leave_one_out_split(&mat, &mut substream(seed, "split", 0, 0))
        .unwrap()
        .with_negatives(4, &mut substream(seed, "negatives", 0, 0))
}

fn toy_config(seed: u64) -> RunConfig {
    RunConfig {
        latent_dim: 4,
        hidden_dim: 6,
        rounds: 10,
        local_epochs: 2,
        eval_interval: 5,
        top_k: 5,
        seed,
        ..RunConfig::default()
    }
}

#[derive(Default)]
struct PayloadScan {
    uploads: Vec<ClientUpload<f64>>,
    offending: usize,
    rounds: Vec<RoundReport>,
}

impl Observer<f64> for PayloadScan {
    fn on_upload(&mut self, upload: &ClientUpload<f64>) {
        let json: serde_json::Value = serde_json::to_value(upload).unwrap();
        let keys: BTreeSet<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        let expected: BTreeSet<&str> = [
            "client",
            "elbo_trace",
            "grad_decoder",
            "grad_global_encoder",
            "scores",
        ]
        .into();
        let labels_ok = json["grad_global_encoder"]["label"] == "global_encoder"
            && json["grad_decoder"]["label"] == "decoder";
        let text = json.to_string();
        if keys != expected || !labels_ok || text.contains("local_encoder") || text.contains("psi")
        {
            self.offending += 1;
        }
        self.uploads.push(upload.clone());
    }

    fn on_round(&mut self, report: &RoundReport) -> feddae::Result<()> {
        self.rounds.push(report.clone());
        Ok(())
    }
}

fn bookkeeping() -> Outcome {
    let data = toy_split(20, 30, 5);
    let cfg = toy_config(5);

    // every server-bound payload over a 10-round run
    let mut scan = PayloadScan::default();
    if let Err(e) = run_federated::<f64>(&cfg, &data, &mut scan) {
        return Outcome::Fail(e.to_string());
    }
    let scanned = scan.uploads.len();

    // no client in two consecutive rounds
    let mut excl_cfg = cfg.clone();
    excl_cfg.exclusive_rounds = true;
    excl_cfg.clients_per_round = Some(8);
    let mut excl = PayloadScan::default();
    if let Err(e) = run_federated::<f64>(&excl_cfg, &data, &mut excl) {
        return Outcome::Fail(e.to_string());
    }
    let overlaps = excl
        .rounds
        .windows(2)
        .filter(|w| {
            let prev: BTreeSet<u64> = w[0].participants.iter().copied().collect();
            w[1].participants.iter().any(|u| prev.contains(u))
        })
        .count();

    // round-one uploads at zero variance against client updates with no noise stage at all
    let shape = ModelShape {
        items: data.n_items(),
        latent: cfg.latent_dim,
        hidden: cfg.hidden_dim,
        layers: cfg.layers,
    };
    let server = ServerState::<f64>::init(&shape, cfg.seed).unwrap();
    let schedule = BetaSchedule::new(cfg.anneal_steps_for(data.n_users()), cfg.beta_cap);
    let local = LocalSettings {
        epochs: cfg.local_epochs,
        lr: cfg.lr,
        dropout: cfg.dropout,
        gate: GateMode::Learned,
        rule: cfg.update_rule,
        loss: LossMode::Full,
        first_step: 0,
        resample_negatives: None,
    };
    let mut mismatched = 0;
    for u in 0..data.n_users() {
        let mut client =
            ClientState::init(&shape, cfg.seed, u, data.train.row(u).to_vec()).unwrap();
        client.negatives = data.negatives[u].clone();
        client.heldout = Some(data.test[u]);
        let clean = client_update(
            &mut client,
            &server.global_encoder,
            &server.decoder,
            &schedule,
            &local,
            &mut substream(cfg.seed, "client", 0, u as u64),
        )
        .unwrap();
        let through_noise = add_gradient_noise(
            clean.clone(),
            NoiseConfig::new(0.0).unwrap(),
            &mut substream(0, "noise", 0, 0),
        );
        if clean != scan.uploads[u] || through_noise != clean {
            mismatched += 1;
        }
    }
    verdict(
        scan.offending == 0 && scanned == 200 && overlaps == 0 && excl.rounds.len() == 10 && mismatched == 0,
        format!(
            "{} private tensors in {scanned} payloads; {overlaps} consecutive-round repeats; {mismatched}/{} zero-noise uploads differ from the noiseless path",
            scan.offending,
            data.n_users()
        ),
    )
}

struct Reproduction {
    fed: Vec<f64>,
    fed_ndcg: Vec<f64>,
    fixed_075: Vec<f64>,
    noisy: Vec<f64>,
    extra: Vec<(f64, Vec<f64>)>,
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn ml100k_config(seed: u64) -> RunConfig {
    RunConfig {
        dataset: ml100k_path().to_string_lossy().into_owned(),
        seed,
        eval_interval: 100,
        ..RunConfig::default()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn train_ml100k(cfg: &RunConfig, data: &SplitDataset, label: &str) -> feddae::Result<(f64, f64)> {
    let started = Instant::now();
    let run: TrainingRun<f64> = run_federated(cfg, data, &mut NoopObserver)?;
    println!(
        "      {label} seed {}: HR@20 {:.4} NDCG@20 {:.4} ({:.0}s)",
        cfg.seed,
        run.metrics.hr,
        run.metrics.ndcg,
        started.elapsed().as_secs_f64()
    );
    Ok((run.metrics.hr, run.metrics.ndcg))
}

fn reproduce() -> feddae::Result<Reproduction> {
    let mut out = Reproduction {
        fed: Vec::new(),
        fed_ndcg: Vec::new(),
        fixed_075: Vec::new(),
        noisy: Vec::new(),
        extra: Vec::new(),
    };
    let extra_weights: &[f64] = if env_flag("FEDDAE_ACCEPTANCE_FULL") {
        &[0.25, 0.5]
    } else {
        &[]
    };
    out.extra = extra_weights.iter().map(|&w| (w, Vec::new())).collect();
    for seed in SEEDS {
        let base = ml100k_config(seed);
        let data = prepare(
            &base.dataset,
            base.format,
            &base.delimiter,
            base.min_interactions,
            base.negatives_per_positive,
            seed,
        )?;
        let (hr, ndcg) = train_ml100k(&base, &data, "FedDAE")?;
        out.fed.push(hr);
        out.fed_ndcg.push(ndcg);

        let mut fixed = base.clone();
        fixed.fixed_weight = Some(0.75);
        out.fixed_075.push(train_ml100k(&fixed, &data, "w=0.75")?.0);

        let mut noisy = base.clone();
        noisy.noise_variance = 1.0;
        out.noisy.push(train_ml100k(&noisy, &data, "noise 1")?.0);

        for (w, hrs) in &mut out.extra {
            let mut cfg = base.clone();
            cfg.fixed_weight = Some(*w);
            hrs.push(train_ml100k(&cfg, &data, &format!("w={w}"))?.0);
        }
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let path = ml100k_path();
    if !path.exists() {
        return Outcome::Fail(format!("{} not found", path.display()));
    }
    let mut details = Vec::new();
    let mut ok = true;
    let mut reference: Option<(String, Vec<u8>)> = None;
    for parallel in [false, true] {
        let cfg = RunConfig {
            dataset: path.to_string_lossy().into_owned(),
            rounds: 2,
            local_epochs: 2,
            eval_interval: 1,
            seed: 11,
            parallel,
            ..RunConfig::default()
        };
        let data = prepare(
            &cfg.dataset,
            cfg.format,
            &cfg.delimiter,
            cfg.min_interactions,
            cfg.negatives_per_positive,
            cfg.seed,
        )
        .unwrap();
        let shape = ModelShape {
            items: data.n_items(),
            latent: cfg.latent_dim,
            hidden: cfg.hidden_dim,
            layers: cfg.layers,
        };
        let mut artifacts = Vec::new();
        for _ in 0..2 {
            let run: TrainingRun<f64> = match run_federated(&cfg, &data, &mut NoopObserver) {
                Ok(r) => r,
                Err(e) => return Outcome::Fail(e.to_string()),
            };
            let metrics = serde_json::to_string_pretty(&run.metrics.to_json()).unwrap();
            let ckpt = model_checkpoint(&shape, &run.server, &run.clients, &Default::default())
                .unwrap()
                .to_bytes();
            artifacts.push((metrics, ckpt));
        }
        let same = artifacts[0] == artifacts[1];
        ok &= same;
        let mode = if parallel { "parallel" } else { "sequential" };
        details.push(format!(
            "{mode} {}",
            if same { "identical" } else { "DIFFERENT" }
        ));
        let first = artifacts.swap_remove(0);
        match &reference {
            None => reference = Some(first),
            Some(r) => {
                let agree = *r == first;
                ok &= agree;
                details.push(format!(
                    "sequential vs parallel {}",
                    if agree { "identical" } else { "DIFFERENT" }
                ));
            }
        }
    }
    verdict(
        ok,
        format!(
            "ML-100K, 2 rounds, metrics.json + checkpoint bytes: {}",
            details.join(", ")
        ),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = substream(0, "acceptance.ranks", 0, 0);
    let mut disagreements = 0;
    for case in 0..1000 {
        let m = rng.random_range(2..=50);
        // coarse grid on odd cases to force ties
        let scores: Vec<f64> = (0..m)
            .map(|_| {
                let s: f64 = rng.random();
                if case % 2 == 1 {
                    (s * 4.0).floor()
                } else {
                    s
                }
            })
            .collect();
        let heldout = rng.random_range(0..m);
        let train: Vec<usize> = (0..m)
            .filter(|&i| i != heldout && rng.random_bool(0.3))
            .collect();
        let mut order: Vec<usize> = (0..m).filter(|i| !train.contains(i)).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let expected = order.iter().position(|&i| i == heldout).unwrap() + 1;
        match rank_heldout(0, &scores, heldout, &train) {
            Ok(r) if r.rank == expected && r.candidates == order.len() => {}
            _ => disagreements += 1,
        }
    }
    let fixture: Vec<RankResult> = [1, 3, 25]
        .iter()
        .enumerate()
        .map(|(user, &rank)| RankResult {
            user,
            rank,
            candidates: 100,
        })
        .collect();
    let hr = hr_at_k(&fixture, 20).unwrap();
    let ndcg = ndcg_at_k(&fixture, 20).unwrap();
    let hr_ok = (hr - 2.0 / 3.0).abs() < 1e-15;
    let ndcg_ok = (ndcg - 0.5).abs() < 1e-15;
    verdict(
        disagreements == 0 && hr_ok && ndcg_ok,
        format!(
            "{disagreements}/1000 oracle disagreements; fixture HR@20 {hr:.6}, NDCG@20 {ndcg:.6}"
        ),
    )
}

fn main() -> ExitCode {
    // libtest forwards flags such as --list or a name filter; only run on a plain invocation
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if args
        .iter()
        .any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str()))
    {
        return ExitCode::SUCCESS;
    }

    let mut results: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut record = |id: &'static str, name: &'static str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{id}] {name}: {detail}");
        results.push((id, name, outcome));
    };

    record("1", "ingestion exactness", ingestion());
    record(
        "2",
        "ELBO gradients vs finite differences",
        gradient_suite(),
    );
    record("3", "closed-form KL vs Monte Carlo", kl_oracle());
    record("4", "gated posterior mixture moments", mixture_oracle());
    record("5", "federated bookkeeping", bookkeeping());

    if env_flag("FEDDAE_SKIP_REPRODUCTION") {
        for (id, name) in [
            ("6", "ML-100K reproduction band"),
            ("7", "fixed-weight ablation trend"),
            ("8", "gradient-noise trend"),
        ] {
            record(
                id,
                name,
                Outcome::Skip("FEDDAE_SKIP_REPRODUCTION is set".into()),
            );
        }
    } else if !ml100k_path().exists() {
        for (id, name) in [
            ("6", "ML-100K reproduction band"),
            ("7", "fixed-weight ablation trend"),
            ("8", "gradient-noise trend"),
        ] {
            record(
                id,
                name,
                Outcome::Fail(format!("{} not found", ml100k_path().display())),
            );
        }
    } else {
        println!(
            "      training on ML-100K, {} seeds x 3 configurations (T=100, E=10)",
            SEEDS.len()
        );
        match reproduce() {
            Ok(r) => {
                let (hr, ndcg) = (mean(&r.fed), mean(&r.fed_ndcg));
                record(
                    "6",
                    "ML-100K reproduction band",
                    verdict(
                        (0.09..=0.16).contains(&hr) && (0.035..=0.065).contains(&ndcg),
                        format!("mean HR@20 {hr:.4} in [0.09, 0.16], mean NDCG@20 {ndcg:.4} in [0.035, 0.065]"),
                    ),
                );
                let fixed = mean(&r.fixed_075);
                let mut detail = format!("FedDAE {hr:.4} >= w=0.75 {fixed:.4}");
                for (w, hrs) in &r.extra {
                    detail.push_str(&format!("; w={w} {:.4} (not gated)", mean(hrs)));
                }
                record(
                    "7",
                    "fixed-weight ablation trend",
                    verdict(hr >= fixed, detail),
                );
                let noisy = mean(&r.noisy);
                record(
                    "8",
                    "gradient-noise trend",
                    verdict(
                        noisy <= hr,
                        format!("noise variance 1: {noisy:.4} <= noise-free {hr:.4}"),
                    ),
                );
            }
            Err(e) => {
                for (id, name) in [
                    ("6", "ML-100K reproduction band"),
                    ("7", "fixed-weight ablation trend"),
                    ("8", "gradient-noise trend"),
                ] {
                    record(id, name, Outcome::Fail(format!("training failed: {e}")));
                }
            }
        }
    }

    record("9", "determinism", determinism());
    record("10", "metric oracle", metric_oracle());

    let failed = results
        .iter()
        .filter(|r| matches!(r.2, Outcome::Fail(_)))
        .count();
    let skipped = results
        .iter()
        .filter(|r| matches!(r.2, Outcome::Skip(_)))
        .count();
    let passed = results.len() - failed - skipped;
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
