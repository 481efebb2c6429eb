//! `sfcsim` command-line runner.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime
//! invariant violation (or any other engine failure), 3 training divergence.
//! Output goes to `--out` if given, else under `$SFCSIM_OUT` (default
//! `sfcsim-out`).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sfcsim::dqn::{load_checkpoint, save_checkpoint, train, write_curve, CurvePoint, TrainError};
use sfcsim::{
    run_episode, write_trace, DqnAgent, EngineError, EpisodeResult, ExportMeta, HeuristicPolicy,
    MetricsBundle, Policy, PolicyKind, RandomPolicy, RunOptions, Scenario, ScenarioConfig,
    SfcKind,
};

const OUT_ENV: &str = "SFCSIM_OUT";
const DEFAULT_OUT_ROOT: &str = "sfcsim-out";

#[derive(Parser)]
#[command(name = "sfcsim", version, about = "SFC provisioning simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one episode and export its metrics.
    Run(RunArgs),
    /// Train a DQN agent and write a checkpoint and learning curve.
    Train(TrainArgs),
    /// Run many seeds, optionally in parallel, and aggregate.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Built-in scenario: paper5dc, paper3dc or tiny.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set dqn.lr=0.0005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write `trace.jsonl`.
    #[arg(long)]
    trace: bool,
    /// Check engine invariants after every step.
    #[arg(long)]
    check_invariants: bool,
    /// Trained agent for `--policy dqn`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Episodes to run now; defaults to what remains of `dqn.episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Save a checkpoint every this many episodes (and at the end).
    #[arg(long, default_value_t = 10)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Seeds as a list and/or ranges, e.g. `1..10` or `1,2,5..7`.
    #[arg(long, default_value = "1..10")]
    seeds: String,
    /// Policies to compare. Repeatable; defaults to the config's policy.
    #[arg(long)]
    policy: Vec<PolicyKind>,
    /// Trained agent for the dqn policy.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Parallel episodes; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn config_err(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure { code: 2, err: e.into() }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Engine(e) => e.into(),
            e @ TrainError::Diverged { .. } => Failure { code: 3, err: e.into() },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.scenario, &args.config) {
        (Some(name), None) => ScenarioConfig::builtin(name).map_err(config_err)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_err)?;
            ScenarioConfig::from_toml(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(config_err)?
        }
        (None, None) => return Err(config_err(anyhow!("give --scenario NAME or --config FILE"))),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(config_err)?;
    }
    Ok(cfg)
}

fn out_dir(args: &ConfigArgs, cfg: &ScenarioConfig, leaf: &str) -> PathBuf {
    if let Some(d) = &args.out {
        return d.clone();
    }
    if let Some(d) = &cfg.output.dir {
        return d.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
    root.join(&cfg.name).join(leaf)
}

fn prepare_dir(dir: &Path, cfg: &ScenarioConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(config_err)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())
        .context("writing effective config")
        .map_err(config_err)
}

fn load_agent(path: &Path, sc: &Scenario) -> Result<DqnAgent, Failure> {
    load_checkpoint(path)
        .and_then(|c| c.into_agent(sc.dcs.len(), sc.graph.links().len()))
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(config_err)
}

/// A ready-to-run policy. DQN agents are greedy and do not learn.
fn make_policy(
    kind: PolicyKind,
    seed: u64,
    agent: Option<&DqnAgent>,
) -> Result<Box<dyn Policy + Send>, Failure> {
    Ok(match kind {
        PolicyKind::Heuristic => Box::new(HeuristicPolicy),
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::Dqn => {
            let mut a = agent
                .ok_or_else(|| config_err(anyhow!("policy dqn needs --checkpoint (create one with `sfcsim train`)")))?
                .clone();
            a.set_epsilon(0.0);
            a.set_learning(false);
            a.begin_episode();
            Box::new(a)
        }
    })
}

fn one_line(m: &MetricsBundle) -> String {
    let mut s = format!("acceptance={}", fmt_opt(m.acceptance_ratio(), 4));
    for k in SfcKind::ALL {
        s.push_str(&format!(" {}={}ms", k.name(), fmt_opt(m.e2e_stats(k).map(|e| e.mean_ms), 3)));
    }
    s
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.cfg)?;
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let sc = cfg.build().map_err(config_err)?;
    let agent = match (&a.checkpoint, sc.policy) {
        (Some(p), PolicyKind::Dqn) => Some(load_agent(p, &sc)?),
        _ => None,
    };
    let mut policy = make_policy(sc.policy, sc.seed, agent.as_ref())?;
    let trace = a.trace || cfg.output.trace;
    let dir = out_dir(&a.cfg, &cfg, &format!("run-{}-seed{}", sc.policy.name(), sc.seed));
    prepare_dir(&dir, &cfg)?;
    let opts = RunOptions {
        trace,
        check_invariants: a.check_invariants,
    };
    let res = run_episode(&sc, policy.as_mut(), opts)?;
    export(&res, &sc, &dir)?;
    println!(
        "{} policy={} seed={} {} steps={} hash={}",
        sc.name,
        sc.policy.name(),
        sc.seed,
        one_line(&res.metrics),
        res.steps,
        &sc.config_hash[..12]
    );
    Ok(())
}

fn export(res: &EpisodeResult, sc: &Scenario, dir: &Path) -> Result<(), Failure> {
    let meta = ExportMeta {
        config_hash: sc.config_hash.clone(),
        seed: sc.seed,
        policy: sc.policy.name().into(),
    };
    res.metrics
        .export(dir, &meta)
        .context("writing metrics")
        .map_err(config_err)?;
    if let Some(t) = &res.trace {
        let f = fs::File::create(dir.join("trace.jsonl"))
            .context("creating trace file")
            .map_err(config_err)?;
        write_trace(BufWriter::new(f), t)
            .context("writing trace")
            .map_err(config_err)?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.cfg)?;
    cfg.policy = PolicyKind::Dqn;
    let sc = cfg.build().map_err(config_err)?;
    let dir = out_dir(&a.cfg, &cfg, "train");
    prepare_dir(&dir, &cfg)?;
    let ckpt = dir.join("checkpoint.json");
    let curve_path = dir.join("curve.csv");

    let (mut agent, mut curve) = match &a.resume {
        Some(p) => {
            let agent = load_agent(p, &sc)?;
            // Keep the earlier part of the curve when resuming in place.
            let mut old = read_curve(&curve_path).map_err(config_err)?;
            old.retain(|c| c.episode < agent.episodes_done());
            (agent, old)
        }
        None => (DqnAgent::for_scenario(&sc), Vec::new()),
    };
    let planned = agent.config().episodes;
    let episodes = a
        .episodes
        .unwrap_or_else(|| planned.saturating_sub(agent.episodes_done()));
    let every = a.checkpoint_every.max(1);

    save_checkpoint(&agent, &ckpt)
        .context("writing checkpoint")
        .map_err(config_err)?;
    let mut save_err = None;
    let result = train(&sc, &mut agent, episodes, |p, ag| {
        eprintln!(
            "episode {} eps={:.3} loss={} acceptance={} reward={:.1}",
            p.episode,
            p.epsilon,
            fmt_opt(p.mean_loss, 4),
            fmt_opt(p.acceptance_ratio, 4),
            p.cumulative_reward
        );
        if (p.episode + 1) % every == 0 && save_err.is_none() {
            save_err = save_checkpoint(ag, &ckpt).err();
        }
    });
    let new_points = match &result {
        Ok(c) => c.clone(),
        Err(_) => Vec::new(),
    };
    curve.extend(new_points);
    if let Some(e) = save_err {
        return Err(config_err(anyhow::Error::new(e).context("writing checkpoint")));
    }
    match result {
        Ok(_) => {
            save_checkpoint(&agent, &ckpt)
                .context("writing checkpoint")
                .map_err(config_err)?;
            write_curve(&curve_path, &curve)
                .context("writing curve")
                .map_err(config_err)?;
            let last = curve.last();
            println!(
                "{} trained episodes={} total={} last_acceptance={} checkpoint={}",
                sc.name,
                episodes,
                agent.episodes_done(),
                fmt_opt(last.and_then(|c| c.acceptance_ratio), 4),
                ckpt.display()
            );
            Ok(())
        }
        Err(e) => {
            // The checkpoint on disk is the last one saved before divergence.
            let _ = write_curve(&curve_path, &curve);
            Err(e.into())
        }
    }
}

fn read_curve(path: &Path) -> anyhow::Result<Vec<CurvePoint>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Parses `1..10`, `3`, `1,4,7..9` (ranges inclusive).
fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed range `{part}`"))?;
                let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed range `{part}`"))?;
                if hi < lo {
                    bail!("empty seed range `{part}`");
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    Ok(seeds)
}

struct SeedRow {
    policy: PolicyKind,
    seed: u64,
    outcome: Result<Vec<f64>, String>,
}

const SWEEP_NAMES: [&str; 13] = [
    "acceptance_ratio",
    "CG_ratio",
    "AugR_ratio",
    "VoIP_ratio",
    "VS_ratio",
    "MIoT_ratio",
    "Ind4.0_ratio",
    "CG_e2e_ms",
    "AugR_e2e_ms",
    "VoIP_e2e_ms",
    "VS_e2e_ms",
    "MIoT_e2e_ms",
    "Ind4.0_e2e_ms",
];

fn sweep_values(m: &MetricsBundle) -> Vec<f64> {
    let mut v = vec![m.acceptance_ratio().unwrap_or(f64::NAN)];
    v.extend(SfcKind::ALL.iter().map(|&k| m.type_ratio(k).unwrap_or(f64::NAN)));
    v.extend(
        SfcKind::ALL
            .iter()
            .map(|&k| m.e2e_stats(k).map_or(f64::NAN, |s| s.mean_ms)),
    );
    v
}

/// Mean and sample standard deviation over the finite values.
fn mean_sd(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cell(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.cfg)?;
    let seeds = parse_seeds(&a.seeds).map_err(config_err)?;
    let sc = cfg.build().map_err(config_err)?;
    let policies = if a.policy.is_empty() { vec![sc.policy] } else { a.policy.clone() };
    let agent = match (&a.checkpoint, policies.contains(&PolicyKind::Dqn)) {
        (Some(p), true) => Some(load_agent(p, &sc)?),
        (None, true) => {
            return Err(config_err(anyhow!("policy dqn needs --checkpoint (create one with `sfcsim train`)")))
        }
        _ => None,
    };
    let dir = out_dir(&a.cfg, &cfg, "sweep");
    prepare_dir(&dir, &cfg)?;

    let jobs: Vec<(PolicyKind, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(config_err)?;
    let rows: Vec<SeedRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(policy, seed)| {
                let outcome = run_one(&sc, policy, seed, agent.as_ref(), &dir)
                    .map(|m| sweep_values(&m))
                    .map_err(|f| format!("{:#}", f.err));
                SeedRow { policy, seed, outcome }
            })
            .collect()
    });

    let path = dir.join("sweep.csv");
    write_sweep(&path, &rows, &policies)
        .context("writing sweep.csv")
        .map_err(config_err)?;
    for p in &policies {
        let ok: Vec<&Vec<f64>> = rows
            .iter()
            .filter(|r| r.policy == *p)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let (m, sd) = mean_sd(ok.iter().map(|v| v[0]));
        println!(
            "{} policy={} seeds={} ok={} acceptance={:.4}±{:.4}",
            sc.name,
            p.name(),
            seeds.len(),
            ok.len(),
            m,
            sd
        );
    }
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|e| format!("{} seed {}: {e}", r.policy.name(), r.seed))
        })
        .collect();
    if failed.is_empty() {
        return Ok(());
    }
    for f in &failed {
        eprintln!("failed: {f}");
    }
    Err(Failure {
        code: 2,
        err: anyhow!("{} of {} episodes failed; results for the rest are in {}", failed.len(), rows.len(), path.display()),
    })
}

fn run_one(
    sc: &Scenario,
    policy: PolicyKind,
    seed: u64,
    agent: Option<&DqnAgent>,
    dir: &Path,
) -> Result<MetricsBundle, Failure> {
    let mut sc = sc.with_seed(seed);
    sc.policy = policy;
    let mut p = make_policy(policy, seed, agent)?;
    let res = run_episode(&sc, p.as_mut(), RunOptions::default())?;
    export(&res, &sc, &dir.join(policy.name()).join(format!("seed{seed}")))?;
    Ok(res.metrics)
}

fn write_sweep(path: &Path, rows: &[SeedRow], policies: &[PolicyKind]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["policy".to_string(), "seed".into(), "status".into()];
    header.extend(SWEEP_NAMES.iter().map(|n| n.to_string()));
    header.extend(SWEEP_NAMES.iter().map(|n| format!("{n}_sd")));
    w.write_record(&header)?;
    let blank = vec![String::new(); SWEEP_NAMES.len()];
    for r in rows {
        let mut rec = vec![r.policy.name().to_string(), r.seed.to_string()];
        match &r.outcome {
            Ok(v) => {
                rec.push("ok".into());
                rec.extend(v.iter().map(|&x| cell(x)));
            }
            Err(e) => {
                rec.push(format!("failed: {e}"));
                rec.extend(blank.iter().cloned());
            }
        }
        rec.extend(blank.iter().cloned());
        w.write_record(&rec)?;
    }
    for p in policies {
        let ok: Vec<&Vec<f64>> = rows
            .iter()
            .filter(|r| r.policy == *p)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let stats: Vec<(f64, f64)> = (0..SWEEP_NAMES.len())
            .map(|i| mean_sd(ok.iter().map(|v| v[i])))
            .collect();
        let mut rec = vec![p.name().to_string(), "aggregate".into(), format!("ok {}", ok.len())];
        rec.extend(stats.iter().map(|s| cell(s.0)));
        rec.extend(stats.iter().map(|s| cell(s.1)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
