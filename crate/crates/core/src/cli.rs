//! The `crowdroute` command line: instance generation, training, solving,
//! benchmarking against the baselines, and ablation runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::actions::ActionType;
use crate::baselines::{reactive_tabu_search, simple_heuristic, simulated_annealing, RtsParams, SaParams};
use crate::dqn::{self, split_seed, DqnError, SolveConfig, TrainConfig, TrainOptions, TrainReport, TrainedModel};
use crate::instance::{generate_instance, load_instance, save_instance, InstanceError, ProblemInstance, Profile};
use crate::plan::{total_shipping_cost, PlanState};
use crate::rules::RuleConfig;

/// Environment variable capping benchmark worker threads.
pub const THREADS_ENV: &str = "CROWDROUTE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<DqnError> for CliError {
    fn from(e: DqnError) -> Self {
        match e {
            DqnError::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        match e {
            InstanceError::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "crowdroute", version, about = "Crowdshipping assignment with a heuristics-guided deep Q-network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random problem instance.
    Generate(GenerateArgs),
    /// Train a Q-network and write the model plus a training-log CSV.
    Train(TrainArgs),
    /// Solve one instance greedily with a trained model.
    Solve(SolveArgs),
    /// Compare the model with the simple heuristic, RTS, and SA.
    Benchmark(BenchmarkArgs),
    /// Train with and without a component and compare on held-out instances.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    /// 50 requests, 22 crowdsourcees.
    Medium,
    /// 200 requests, 70 crowdsourcees.
    Large,
    /// 25 requests, 11 crowdsourcees, short training.
    Desk,
}

impl ProfileArg {
    pub fn train_config(self) -> TrainConfig {
        match self {
            ProfileArg::Medium => TrainConfig::medium(),
            ProfileArg::Large => TrainConfig::large(),
            ProfileArg::Desk => TrainConfig::desk(),
        }
    }

    fn size(self) -> (usize, usize) {
        let c = self.train_config();
        (c.n_requests, c.n_crowdsourcees)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "medium")]
    pub profile: ProfileArg,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub crowdsourcees: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training configuration: a profile plus individual overrides.
#[derive(Debug, Clone, Args)]
pub struct TrainSetup {
    #[arg(long, value_enum, default_value = "medium")]
    pub profile: ProfileArg,
    /// JSON training configuration replacing the profile defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub crowdsourcees: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps_per_episode: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon_decay: Option<f64>,
    #[arg(long)]
    pub target_update: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub replay_capacity: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub termination_threshold: Option<f64>,
    #[arg(long)]
    pub tenure: Option<u32>,
    #[arg(long)]
    pub reward_scale: Option<f64>,
    #[arg(long)]
    pub convergence_window: Option<usize>,
    /// Train without priority lists and Tabu tenure.
    #[arg(long)]
    pub no_rules: bool,
    /// Train with random concrete actions instead of the guided heuristics.
    #[arg(long)]
    pub no_guided: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainSetup {
    pub fn build(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                serde_json::from_str(&text).map_err(|e| io_err(path, e))?
            }
            None => self.profile.train_config(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        set!(episodes, steps_per_episode, max_steps, hidden, learning_rate, gamma, epsilon_decay);
        set!(target_update, minibatch, replay_capacity, termination_threshold, reward_scale, convergence_window);
        if let Some(n) = self.requests {
            cfg.n_requests = n;
        }
        if let Some(m) = self.crowdsourcees {
            cfg.n_crowdsourcees = m;
        }
        if let Some(t) = self.tenure {
            cfg.rules.tabu_tenure = t;
        }
        if self.no_rules {
            cfg.rules = RuleConfig::disabled();
        }
        if self.no_guided {
            cfg.guided = false;
        }
        cfg.seed = self.seed;
        if cfg.n_requests == 0 || cfg.n_crowdsourcees == 0 {
            return Err(CliError::Usage("request and crowdsourcee counts must be positive".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub setup: TrainSetup,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training-log CSV; defaults to the model path with a `.log.csv` suffix.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Held-out instances solved at every checkpoint.
    #[arg(long, default_value_t = 0)]
    pub eval_instances: usize,
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: usize,
    /// Print every action to stderr.
    #[arg(long)]
    pub trace_actions: bool,
    /// Print one line per episode to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Instance file; without it an instance is generated from `--seed`.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum number of actions; defaults to twice the training episode length.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Solve without priority lists and Tabu tenure.
    #[arg(long)]
    pub no_rules: bool,
    /// Write the plan in the text dump format.
    #[arg(long)]
    pub dump_plan: Option<PathBuf>,
    /// Print every action taken.
    #[arg(long)]
    pub trace_actions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Drl,
    Simple,
    Rts,
    Sa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Drl => "drl",
            Method::Simple => "simple",
            Method::Rts => "rts",
            Method::Sa => "sa",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Trained model; required for the `drl` method and sets the instance size.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "drl,simple,rts,sa")]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, default_value = "medium")]
    pub profile: ProfileArg,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub crowdsourcees: Option<usize>,
    /// Seed of the first instance; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-instance CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary CSV; the summary is always printed to stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub rts_max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Component {
    /// Heuristics-guided concrete actions.
    Guided,
    /// Priority lists and Tabu tenure.
    Rules,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub component: Component,
    #[command(flatten)]
    pub setup: TrainSetup,
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    /// Seed of the first held-out instance; instance i uses seed + i.
    #[arg(long, default_value_t = 1_000_000)]
    pub eval_seed: u64,
    /// Per-instance CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for the two trained models.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
}

/// `x` with 6 significant digits, in the style of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).expect("exponent");
    if !(-5..6).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').unwrap();
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials as u64).expect("valid binomial");
    b.sf(wins as u64 - 1)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, path: &Path, row: &[String]) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| io_err(path, e))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| io_err(path, e))
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Validation(format!("stdout: {e}"))
}

/// Parses `args` and runs the command, writing reports to `out` and
/// diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Train(a) => cmd_train(a, out, err),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Benchmark(a) => cmd_benchmark(a, out),
        Command::Ablate(a) => cmd_ablate(a, out, err),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr();
    match run(cli, &mut out, &mut err) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_generate(a: GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (n0, m0) = a.profile.size();
    let n = a.requests.unwrap_or(n0);
    let m = a.crowdsourcees.unwrap_or(m0);
    if n == 0 || m == 0 {
        return Err(CliError::Usage("request and crowdsourcee counts must be positive".into()));
    }
    let profile = Profile::Custom(a.profile.train_config().generator);
    let inst = generate_instance(n, m, a.seed, &profile)?;
    save_instance(&inst, &a.out)?;
    writeln!(out, "wrote {} ({n} requests, {m} crowdsourcees, seed {})", a.out.display(), a.seed).map_err(out_err)
}

fn eval_instances(cfg: &TrainConfig, count: usize) -> Result<Vec<ProblemInstance>, CliError> {
    let profile = Profile::Custom(cfg.generator.clone());
    (0..count)
        .map(|i| {
            generate_instance(cfg.n_requests, cfg.n_crowdsourcees, split_seed(cfg.seed, 100 + i as u64), &profile)
                .map_err(CliError::from)
        })
        .collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_log(report: &TrainReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, &dqn::LOG_HEADER.split(',').map(String::from).collect::<Vec<_>>())?;
    for r in &report.log {
        let row = vec![
            r.step.to_string(),
            r.episode.to_string(),
            format_sig6(r.avg_loss),
            format_sig6(r.avg_q),
            format_sig6(r.accum_reward),
            format_sig6(r.cum_penalty),
        ];
        write_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

fn write_checkpoints(report: &TrainReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, &["step".into(), "instance".into(), "tsc".into()])?;
    for c in &report.checkpoints {
        for (i, tsc) in c.tsc.iter().enumerate() {
            write_row(&mut w, path, &[c.step.to_string(), i.to_string(), format_sig6(*tsc)])?;
        }
    }
    finish(w, path)
}

fn run_training(
    cfg: &TrainConfig,
    opts: &TrainOptions,
    err: &mut dyn Write,
    progress: bool,
) -> Result<TrainReport, CliError> {
    let report = dqn::train(cfg, opts, |row| {
        if progress {
            let _ = writeln!(
                err,
                "episode {} step {} reward {:.3} loss {:.4} cum_penalty {:.3}",
                row.episode, row.step, row.accum_reward, row.avg_loss, row.cum_penalty
            );
        }
    })?;
    Ok(report)
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.setup.build()?;
    let opts = TrainOptions {
        eval_instances: eval_instances(&cfg, a.eval_instances)?,
        checkpoint_every: a.checkpoint_every,
        eval: SolveConfig::for_config(&cfg),
        trace: a.trace_actions,
    };
    let report = run_training(&cfg, &opts, err, a.progress)?;
    for t in &report.trace {
        writeln!(err, "step {} episode {} eps {:.4} {}", t.step, t.episode, t.epsilon, t.outcome).map_err(out_err)?;
    }
    dqn::save_model(&report.model, &a.out)?;
    let log = a.log.unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    write_log(&report, &log)?;
    writeln!(out, "model {}", a.out.display()).map_err(out_err)?;
    writeln!(out, "log {}", log.display()).map_err(out_err)?;
    if !report.checkpoints.is_empty() {
        let path = with_suffix(&a.out, ".checkpoints.csv");
        write_checkpoints(&report, &path)?;
        writeln!(out, "checkpoints {}", path.display()).map_err(out_err)?;
    }
    let stop = match report.stop {
        dqn::StopReason::Converged => "converged",
        dqn::StopReason::Budget => "budget",
    };
    writeln!(out, "stopped {stop} after {} steps in {} episodes", report.steps, report.episodes).map_err(out_err)?;
    if let Some(c) = report.penalty_relative_change(cfg.convergence_window) {
        writeln!(out, "cumulative penalty change over last {} steps {:.4}", cfg.convergence_window, c).map_err(out_err)?;
    }
    Ok(())
}

fn instance_for(model: &TrainedModel, path: Option<&Path>, seed: u64) -> Result<ProblemInstance, CliError> {
    match path {
        Some(p) => Ok(load_instance(p)?),
        None => Ok(generate_instance(
            model.n_requests,
            model.n_crowdsourcees,
            seed,
            &Profile::Custom(model.config.generator.clone()),
        )?),
    }
}

fn cmd_solve(a: SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = dqn::load_model(&a.model)?;
    let inst = instance_for(&model, a.instance.as_deref(), a.seed)?;
    let mut cfg = SolveConfig::for_model(&model);
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    if a.no_rules {
        cfg.rules = RuleConfig::disabled();
    }
    cfg.trace = a.trace_actions;
    let (plan, report) = dqn::solve(&inst, &model, &cfg)?;
    let mut w = |s: String| writeln!(out, "{s}").map_err(out_err);
    for (i, o) in report.trace.iter().enumerate() {
        w(format!("action {} {o}", i + 1))?;
    }
    w(format!("tsc {:.6}", report.tsc))?;
    w(format!("initial_tsc {:.6}", report.initial_tsc))?;
    w(format!(
        "feasible {} assigned {} backup {} active_routes {}",
        report.feasible,
        inst.n_requests() - plan.backup().len(),
        plan.backup().len(),
        plan.active_routes().count()
    ))?;
    w(format!("steps {}", report.steps))?;
    for t in ActionType::ALL {
        w(format!("action_type {} chosen {} applied {}", t.name(), report.chosen[t.index()], report.applied[t.index()]))?;
    }
    if let Some(path) = a.dump_plan {
        std::fs::write(&path, plan.to_dump()).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance_seed: u64,
    pub method: Method,
    pub tsc: f64,
    pub seconds: f64,
    pub iterations: usize,
}

/// Per-method aggregate over a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Instances where this method's TSC is strictly below every other method's.
    pub wins: usize,
    pub mean_tsc: f64,
    /// Mean of (tsc − best tsc on the instance) / best tsc.
    pub mean_gap: f64,
    pub mean_seconds: f64,
}

pub const BENCH_HEADER: [&str; 5] = ["instance_seed", "method", "tsc", "seconds", "iterations"];
pub const SUMMARY_HEADER: [&str; 5] = ["method", "wins", "mean_tsc", "mean_gap", "mean_seconds"];

/// Worker count for `jobs` independent runs, capped by the environment variable.
pub fn worker_count(jobs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.unwrap_or(available).min(jobs).max(1)
}

/// Runs `methods` on every instance, in parallel across instances.
pub fn run_benchmark(
    instances: &[(u64, ProblemInstance)],
    methods: &[Method],
    model: Option<&TrainedModel>,
    rts: &RtsParams,
) -> Result<Vec<BenchRow>, CliError> {
    if methods.contains(&Method::Drl) && model.is_none() {
        return Err(CliError::Usage("the drl method needs --model".into()));
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<BenchRow>, CliError>>>> =
        Mutex::new((0..instances.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..worker_count(instances.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((seed, inst)) = instances.get(i) else { break };
                let rows = bench_instance(*seed, inst, methods, model, rts);
                results.lock().unwrap()[i] = Some(rows);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results.into_inner().unwrap() {
        rows.extend(r.expect("every instance ran")?);
    }
    Ok(rows)
}

fn bench_instance(
    seed: u64,
    inst: &ProblemInstance,
    methods: &[Method],
    model: Option<&TrainedModel>,
    rts: &RtsParams,
) -> Result<Vec<BenchRow>, CliError> {
    methods
        .iter()
        .map(|&method| {
            let (tsc, seconds, iterations) = match method {
                Method::Drl => {
                    let model = model.expect("checked above");
                    let (_, r) = dqn::solve(inst, model, &SolveConfig::for_model(model))?;
                    (r.tsc, r.seconds, r.steps)
                }
                Method::Simple => {
                    let (_, r) = simple_heuristic(inst);
                    (r.tsc, r.seconds, r.iterations)
                }
                Method::Rts => {
                    let (_, r) = reactive_tabu_search(inst, rts);
                    (r.tsc, r.seconds, r.iterations)
                }
                Method::Sa => {
                    let params = SaParams { penalty: rts.penalty, seed, ..SaParams::default() };
                    let (_, r) = simulated_annealing(inst, &params);
                    (r.tsc, r.seconds, r.iterations)
                }
            };
            Ok(BenchRow { instance_seed: seed, method, tsc, seconds, iterations })
        })
        .collect()
}

/// Win counts, mean TSC, mean relative gap to the per-instance best, and mean time.
pub fn summarize(rows: &[BenchRow], methods: &[Method]) -> Vec<MethodSummary> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.instance_seed).collect();
    seeds.dedup();
    methods
        .iter()
        .map(|&m| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.method == m).collect();
            let n = mine.len().max(1) as f64;
            let mut wins = 0;
            let mut gap = 0.0;
            for r in &mine {
                let others = rows.iter().filter(|o| o.instance_seed == r.instance_seed && o.method != m);
                let best = rows
                    .iter()
                    .filter(|o| o.instance_seed == r.instance_seed)
                    .map(|o| o.tsc)
                    .fold(f64::INFINITY, f64::min);
                if others.clone().count() > 0 && others.into_iter().all(|o| r.tsc < o.tsc) {
                    wins += 1;
                }
                gap += (r.tsc - best) / best;
            }
            MethodSummary {
                method: m,
                wins,
                mean_tsc: mine.iter().map(|r| r.tsc).sum::<f64>() / n,
                mean_gap: gap / n,
                mean_seconds: mine.iter().map(|r| r.seconds).sum::<f64>() / n,
            }
        })
        .collect()
}

fn summary_rows(summary: &[MethodSummary]) -> Vec<Vec<String>> {
    summary
        .iter()
        .map(|s| {
            vec![
                s.method.name().to_string(),
                s.wins.to_string(),
                format_sig6(s.mean_tsc),
                format_sig6(s.mean_gap),
                format_sig6(s.mean_seconds),
            ]
        })
        .collect()
}

fn cmd_benchmark(a: BenchmarkArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = a.model.as_deref().map(dqn::load_model).transpose()?;
    let (generator, n0, m0) = match &model {
        Some(m) => (m.config.generator.clone(), m.n_requests, m.n_crowdsourcees),
        None => {
            let c = a.profile.train_config();
            (c.generator, c.n_requests, c.n_crowdsourcees)
        }
    };
    let n = a.requests.unwrap_or(n0);
    let m = a.crowdsourcees.unwrap_or(m0);
    if n == 0 || m == 0 || a.instances == 0 {
        return Err(CliError::Usage("request, crowdsourcee, and instance counts must be positive".into()));
    }
    let profile = Profile::Custom(generator);
    let instances = (0..a.instances as u64)
        .map(|i| Ok((a.seed + i, generate_instance(n, m, a.seed + i, &profile)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rts = RtsParams::default();
    if let Some(m) = &model {
        rts.penalty = m.config.penalty;
    }
    if let Some(it) = a.rts_max_iterations {
        rts.max_iterations = it;
    }
    let rows = run_benchmark(&instances, &a.methods, model.as_ref(), &rts)?;
    let mut w = csv_writer(&a.out)?;
    write_row(&mut w, &a.out, &BENCH_HEADER.map(String::from))?;
    for r in &rows {
        let row = [
            r.instance_seed.to_string(),
            r.method.name().to_string(),
            format_sig6(r.tsc),
            format_sig6(r.seconds),
            r.iterations.to_string(),
        ];
        write_row(&mut w, &a.out, &row)?;
    }
    finish(w, &a.out)?;
    let summary = summary_rows(&summarize(&rows, &a.methods));
    let mut sw = csv::Writer::from_writer(Vec::new());
    sw.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in &summary {
        sw.write_record(r).expect("in-memory write");
    }
    let text = sw.into_inner().expect("in-memory flush");
    out.write_all(&text).map_err(out_err)?;
    if let Some(path) = &a.summary {
        std::fs::write(path, &text).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Greedy TSC of `model` on each instance.
fn solve_all(model: &TrainedModel, instances: &[(u64, ProblemInstance)]) -> Result<Vec<f64>, CliError> {
    let cfg = SolveConfig::for_model(model);
    instances.iter().map(|(_, inst)| Ok(dqn::solve(inst, model, &cfg)?.1.tsc)).collect()
}

fn cmd_ablate(a: AblateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let full = a.setup.build()?;
    let mut reduced = full.clone();
    let (full_name, reduced_name) = match a.component {
        Component::Guided => {
            reduced.guided = false;
            ("guided", "random")
        }
        Component::Rules => {
            reduced.rules = RuleConfig::disabled();
            ("rules", "no_rules")
        }
    };
    let profile = Profile::Custom(full.generator.clone());
    let instances = (0..a.instances as u64)
        .map(|i| {
            let seed = a.eval_seed + i;
            Ok((seed, generate_instance(full.n_requests, full.n_crowdsourcees, seed, &profile)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut tscs = Vec::new();
    for (name, cfg) in [(full_name, &full), (reduced_name, &reduced)] {
        writeln!(err, "training {name}").map_err(out_err)?;
        let report = run_training(cfg, &TrainOptions::default(), err, false)?;
        if let Some(dir) = &a.model_dir {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            dqn::save_model(&report.model, dir.join(format!("{name}.json")))?;
        }
        tscs.push(solve_all(&report.model, &instances)?);
    }
    let mut w = csv_writer(&a.out)?;
    write_row(&mut w, &a.out, &["instance_seed".into(), "variant".into(), "tsc".into()])?;
    for ((seed, _), (x, y)) in instances.iter().zip(tscs[0].iter().zip(&tscs[1])) {
        write_row(&mut w, &a.out, &[seed.to_string(), full_name.into(), format_sig6(*x)])?;
        write_row(&mut w, &a.out, &[seed.to_string(), reduced_name.into(), format_sig6(*y)])?;
    }
    finish(w, &a.out)?;
    let n = instances.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (mf, mr) = (mean(&tscs[0]), mean(&tscs[1]));
    let wins = tscs[0].iter().zip(&tscs[1]).filter(|(x, y)| x < y).count();
    let ties = tscs[0].iter().zip(&tscs[1]).filter(|(x, y)| x == y).count();
    let mut w = |s: String| writeln!(out, "{s}").map_err(out_err);
    w(format!("mean_tsc {full_name} {mf:.6}"))?;
    w(format!("mean_tsc {reduced_name} {mr:.6}"))?;
    w(format!("reduction {:.4}", (mr - mf) / mr))?;
    w(format!("sign_test wins {wins} ties {ties} n {n} p {:.6}", sign_test_p(wins, n - ties)))?;
    Ok(())
}

/// The plan in `dump` re-evaluated against `instance`.
pub fn recompute_tsc(instance: &ProblemInstance, dump: &str) -> Result<f64, CliError> {
    let plan = PlanState::from_dump(instance, dump).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(total_shipping_cost(instance, &plan))
}
