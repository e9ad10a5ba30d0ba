//! Command-line front end.
//!
//! Subcommands: `opt run`, `rl run`, `compare`, `verify`,
//! `estimate-constants`. Config files provide the experiment plan; flags
//! override file values. Exit status: 0 success/converged, 1 invalid
//! config or usage, 2 a run diverged, 3 verification failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{
    estimate_constants, run_compare, run_experiment, run_suite, AlgoId, BuiltObjective, EnvSpec,
    ExperimentConfig, HarnessError, ObjectiveSpec, RunSpec, ScheduleParams, SCHEMA_VERSION,
};
use crate::policy_grad::{Baseline, GradKind, RlAbaConfig};
use crate::vr_optim::{AbaConfig, AbaSgdConfig, OutputMode, SfoMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Parser)]
#[command(
    name = "abaopt",
    version,
    about = "Variance-reduced optimization and policy gradient with history-gradient batch-size adaptation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conventional finite-sum optimization experiments.
    Opt {
        #[command(subcommand)]
        cmd: OptCommand,
    },
    /// Policy-gradient experiments on toy environments.
    Rl {
        #[command(subcommand)]
        cmd: RlCommand,
    },
    /// Run several algorithms and print cost-at-threshold, ascending.
    Compare(CompareArgs),
    /// Run an oracle suite; prints one JSON line per check.
    Verify(VerifyArgs),
    /// Print pilot estimates of sigma^2 and L for a dataset.
    EstimateConstants(EstimateArgs),
}

#[derive(Subcommand)]
enum OptCommand {
    Run(OptRunArgs),
}

#[derive(Subcommand)]
enum RlCommand {
    Run(RlRunArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// LIBSVM dataset path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic logistic instance as `n,d`.
    #[arg(long, value_name = "N,D")]
    synthetic: Option<String>,
    /// Synthetic gradient-dominated quadratic as `n,d`.
    #[arg(long, value_name = "N,D")]
    synthetic_pl: Option<String>,
    /// Generator seed for synthetic objectives.
    #[arg(long, default_value_t = 42)]
    obj_seed: u64,
    /// Regularizer weight for logistic objectives.
    #[arg(long, default_value_t = 0.1)]
    reg_alpha: f64,
    /// Min-max scale LIBSVM features into [-1, 1].
    #[arg(long, default_value_t = false)]
    scale_features: bool,
}

impl DataArgs {
    fn objective_spec(&self) -> Result<Option<ObjectiveSpec>, HarnessError> {
        if let Some(path) = &self.data {
            return Ok(Some(ObjectiveSpec::LogregLibsvm {
                path: path.clone(),
                reg_alpha: self.reg_alpha,
                scale_features: self.scale_features,
            }));
        }
        if let Some(nd) = &self.synthetic {
            let (n, d) = parse_nd(nd)?;
            return Ok(Some(ObjectiveSpec::LogregSynthetic {
                n,
                d,
                seed: self.obj_seed,
                reg_alpha: self.reg_alpha,
            }));
        }
        if let Some(nd) = &self.synthetic_pl {
            let (n, d) = parse_nd(nd)?;
            return Ok(Some(ObjectiveSpec::SyntheticPl { n, d, seed: self.obj_seed }));
        }
        Ok(None)
    }
}

fn parse_nd(s: &str) -> Result<(usize, usize), HarnessError> {
    let mut it = s.split(',');
    let parse = |tok: Option<&str>| {
        tok.and_then(|t| t.trim().parse::<usize>().ok())
            .ok_or_else(|| HarnessError::InvalidConfig(format!("expected `n,d`, got `{s}`")))
    };
    let n = parse(it.next())?;
    let d = parse(it.next())?;
    if it.next().is_some() {
        return Err(HarnessError::InvalidConfig(format!("expected `n,d`, got `{s}`")));
    }
    Ok((n, d))
}

#[derive(Args, Clone)]
struct OptRunArgs {
    /// Experiment config file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Inner mini-batch size B.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    c_beta: Option<f64>,
    #[arg(long)]
    c_eps: Option<f64>,
    /// Variance bound; estimated from a pilot sample when omitted.
    #[arg(long)]
    sigma_sq: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop when grad-norm^2 reaches this value.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// `samples` or `gradient-evals`.
    #[arg(long)]
    sfo_mode: Option<String>,
    /// `last` or `uniform-random-iterate`.
    #[arg(long)]
    output_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exponential schedule factor (spider-exp).
    #[arg(long)]
    mu: Option<f64>,
    /// Linear schedule factor (spider-lin).
    #[arg(long)]
    nu: Option<f64>,
    /// Linear batch slope (hsgd).
    #[arg(long)]
    c_b: Option<f64>,
    /// AbaSGD pre-history direction norm.
    #[arg(long)]
    alpha0: Option<f64>,
}

#[derive(Args, Clone)]
struct RlRunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    /// `chain<k>`, `push`, or a declarative MDP file path.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Chain slip probability.
    #[arg(long)]
    slip: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha_sigma_sq: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// `reinforce` or `gpomdp`.
    #[arg(long)]
    grad_kind: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated algorithm ids.
    #[arg(long, value_delimiter = ',', required = true)]
    algos: Vec<String>,
    /// Grad-norm^2 threshold for the cost table.
    #[arg(long)]
    target: f64,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    sigma_sq: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    c_b: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct VerifyArgs {
    /// `core`, `rl`, `pl`, or `all`.
    #[arg(long, default_value = "core")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also write the JSON lines to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` and executes; returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn run_command(cmd: Command) -> Result<i32, HarnessError> {
    match cmd {
        Command::Opt { cmd: OptCommand::Run(args) } => opt_run(args),
        Command::Rl { cmd: RlCommand::Run(args) } => rl_run(args),
        Command::Compare(args) => compare(args),
        Command::Verify(args) => verify(args),
        Command::EstimateConstants(args) => estimate(args),
    }
}

fn parse_sfo_mode(s: &str) -> Result<SfoMode, HarnessError> {
    match s {
        "samples" => Ok(SfoMode::Samples),
        "gradient-evals" => Ok(SfoMode::GradientEvals),
        other => Err(HarnessError::InvalidConfig(format!("unknown sfo mode `{other}`"))),
    }
}

fn parse_output_mode(s: &str) -> Result<OutputMode, HarnessError> {
    match s {
        "last" => Ok(OutputMode::Last),
        "uniform-random-iterate" => Ok(OutputMode::UniformRandomIterate),
        other => Err(HarnessError::InvalidConfig(format!("unknown output mode `{other}`"))),
    }
}

fn parse_grad_kind(s: &str) -> Result<GradKind, HarnessError> {
    match s {
        "reinforce" => Ok(GradKind::Reinforce),
        "gpomdp" => Ok(GradKind::Gpomdp),
        other => Err(HarnessError::InvalidConfig(format!("unknown gradient kind `{other}`"))),
    }
}

fn parse_env_spec(s: &str, horizon: usize, gamma: f64, slip: f64) -> Result<EnvSpec, HarnessError> {
    if s == "push" {
        return Ok(EnvSpec::Push { horizon, gamma });
    }
    if let Some(states) = s.strip_prefix("chain") {
        let states: usize = states
            .parse()
            .map_err(|_| HarnessError::InvalidConfig(format!("bad chain size in `{s}`")))?;
        return Ok(EnvSpec::Chain { states, slip, horizon, gamma });
    }
    let path = PathBuf::from(s);
    if path.exists() {
        Ok(EnvSpec::File { path })
    } else {
        Err(HarnessError::InvalidConfig(format!(
            "unknown environment `{s}` (expected chain<k>, push, or an existing .mdp file)"
        )))
    }
}

/// Pilot constants for defaulting `sigma_sq` and `eta` when the user gave
/// neither a config value nor a flag.
fn pilot(spec: &ObjectiveSpec) -> Result<(f64, f64), HarnessError> {
    let built = BuiltObjective::build(spec)?;
    let pc = estimate_constants(built.as_dyn(), 0x9107);
    let l = pc.lipschitz_hint.unwrap_or(pc.lipschitz).max(1e-12);
    Ok((pc.sigma_sq.max(1e-12), l))
}

fn opt_run(args: OptRunArgs) -> Result<i32, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            run: RunSpec {
                algo: AlgoId::Abasvrg,
                seeds: vec![1],
                out_dir: super::default_out_dir(),
                workers: 1,
            },
            objective: None,
            env: None,
            aba: None,
            abasgd: None,
            rl: None,
            schedule: None,
        },
    };

    if let Some(algo) = &args.algo {
        cfg.run.algo = AlgoId::parse(algo)?;
    }
    if let Some(spec) = args.data.objective_spec()? {
        cfg.objective = Some(spec);
    }
    let spec = cfg
        .objective
        .clone()
        .ok_or_else(|| HarnessError::InvalidConfig("no objective given (use --data or --synthetic)".into()))?;

    if cfg.run.algo == AlgoId::Abasgd {
        if cfg.abasgd.is_none() {
            let (sigma_sq, l) = pilot(&spec)?;
            let m = args.m.unwrap_or(10);
            cfg.abasgd = Some(AbaSgdConfig {
                eps: 1e-3,
                sigma_sq,
                window: m,
                alpha0: 0.0,
                eta: 1.0 / (2.0 * l),
                max_iters: 200 * m,
                output_mode: OutputMode::Last,
                sfo_mode: SfoMode::Samples,
                stop_grad_norm_sq: None,
            });
        }
        let c = cfg.abasgd.as_mut().expect("just set");
        if let Some(v) = args.eps {
            c.eps = v;
        }
        if let Some(v) = args.sigma_sq {
            c.sigma_sq = v;
        }
        if let Some(v) = args.m {
            c.window = v;
        }
        if let Some(v) = args.alpha0 {
            c.alpha0 = v;
        }
        if let Some(v) = args.eta {
            c.eta = v;
        }
        if let Some(v) = args.epochs {
            c.max_iters = v * c.window;
        }
        if let Some(v) = args.target {
            c.stop_grad_norm_sq = Some(v);
        }
        if let Some(v) = &args.sfo_mode {
            c.sfo_mode = parse_sfo_mode(v)?;
        }
        if let Some(v) = &args.output_mode {
            c.output_mode = parse_output_mode(v)?;
        }
    } else {
        if cfg.aba.is_none() {
            let (sigma_sq, l) = pilot(&spec)?;
            let m = args.m.unwrap_or(10);
            let epochs = args.epochs.unwrap_or(200);
            let eps = args.eps.unwrap_or(1e-3);
            cfg.aba = Some(AbaConfig {
                c_beta: 16.0,
                c_eps: 16.0,
                eps,
                sigma_sq,
                beta_init: AbaConfig::beta_init_general(eps, epochs),
                m,
                batch: 64,
                eta: 1.0 / (4.0 * l),
                max_epochs: epochs,
                output_mode: OutputMode::Last,
                sfo_mode: SfoMode::Samples,
                metric_every_iter: false,
                stop_grad_norm_sq: None,
            });
        }
        let c = cfg.aba.as_mut().expect("just set");
        if let Some(v) = args.eps {
            c.eps = v;
        }
        if let Some(v) = args.sigma_sq {
            c.sigma_sq = v;
        }
        if let Some(v) = args.c_beta {
            c.c_beta = v;
        }
        if let Some(v) = args.c_eps {
            c.c_eps = v;
        }
        if let Some(v) = args.m {
            c.m = v;
        }
        if let Some(v) = args.b {
            c.batch = v;
        }
        if let Some(v) = args.eta {
            c.eta = v;
        }
        if let Some(v) = args.epochs {
            c.max_epochs = v;
        }
        if let Some(v) = args.target {
            c.stop_grad_norm_sq = Some(v);
        }
        if let Some(v) = &args.sfo_mode {
            c.sfo_mode = parse_sfo_mode(v)?;
        }
        if let Some(v) = &args.output_mode {
            c.output_mode = parse_output_mode(v)?;
        }
    }

    if args.mu.is_some() || args.nu.is_some() || args.c_b.is_some() {
        let sched = cfg.schedule.get_or_insert_with(ScheduleParams::default);
        if args.mu.is_some() {
            sched.mu = args.mu;
        }
        if args.nu.is_some() {
            sched.nu = args.nu;
        }
        if args.c_b.is_some() {
            sched.c_b = args.c_b;
        }
    }
    if !args.seed.is_empty() {
        cfg.run.seeds = args.seed.clone();
    }
    if let Some(v) = args.workers {
        cfg.run.workers = v;
    }
    if let Some(v) = args.out {
        cfg.run.out_dir = v;
    }

    let outcome = run_experiment(&cfg)?;
    for s in &outcome.summaries {
        println!("{}", serde_json::to_string(s).expect("summary serializes"));
    }
    eprintln!(
        "wrote {} trace file(s) to {}",
        outcome.csv_paths.len(),
        cfg.run.out_dir.display()
    );
    Ok(if outcome.any_diverged() { EXIT_DIVERGED } else { EXIT_OK })
}

fn rl_run(args: RlRunArgs) -> Result<i32, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            run: RunSpec {
                algo: AlgoId::Abaspiderpg,
                seeds: vec![1],
                out_dir: super::default_out_dir(),
                workers: 1,
            },
            objective: None,
            env: None,
            aba: None,
            abasgd: None,
            rl: None,
            schedule: None,
        },
    };

    if let Some(algo) = &args.algo {
        cfg.run.algo = AlgoId::parse(algo)?;
    }
    let horizon = args.horizon.unwrap_or(5);
    let gamma = args.gamma.unwrap_or(0.99);
    let slip = args.slip.unwrap_or(0.1);
    if let Some(env) = &args.env {
        cfg.env = Some(parse_env_spec(env, horizon, gamma, slip)?);
    } else if let Some(EnvSpec::Chain { states, slip, .. }) = cfg.env.clone() {
        // flags still override horizon/gamma of a config-file env
        if args.horizon.is_some() || args.gamma.is_some() {
            cfg.env = Some(EnvSpec::Chain { states, slip, horizon, gamma });
        }
    }

    if cfg.rl.is_none() {
        cfg.rl = Some(RlAbaConfig {
            alpha_sigma_sq: 1.0,
            beta: 1000.0,
            eps: 0.01,
            m: 10,
            batch: 20,
            eta: 0.5,
            n_max: 100,
            grad_kind: GradKind::Gpomdp,
            baseline: Baseline::None,
            max_iters: 2000,
            metric_every: 1,
            stop_grad_norm_sq: None,
            output_mode: OutputMode::Last,
            smoothness: None,
        });
    }
    let c = cfg.rl.as_mut().expect("just set");
    if let Some(v) = args.eps {
        c.eps = v;
    }
    if let Some(v) = args.m {
        c.m = v;
    }
    if let Some(v) = args.b {
        c.batch = v;
    }
    if let Some(v) = args.eta {
        c.eta = v;
    }
    if let Some(v) = args.alpha_sigma_sq {
        c.alpha_sigma_sq = v;
    }
    if let Some(v) = args.beta {
        c.beta = v;
    }
    if let Some(v) = args.n_max {
        c.n_max = v;
    }
    if let Some(v) = &args.grad_kind {
        c.grad_kind = parse_grad_kind(v)?;
    }
    if let Some(v) = args.iters {
        c.max_iters = v;
    }
    if let Some(v) = args.target {
        c.stop_grad_norm_sq = Some(v);
    }
    if let Some(v) = &args.output_mode {
        c.output_mode = parse_output_mode(v)?;
    }
    if !args.seed.is_empty() {
        cfg.run.seeds = args.seed.clone();
    }
    if let Some(v) = args.workers {
        cfg.run.workers = v;
    }
    if let Some(v) = args.out {
        cfg.run.out_dir = v;
    }

    let outcome = run_experiment(&cfg)?;
    for s in &outcome.summaries {
        println!("{}", serde_json::to_string(s).expect("summary serializes"));
    }
    eprintln!(
        "wrote {} trace file(s) to {}",
        outcome.csv_paths.len(),
        cfg.run.out_dir.display()
    );
    Ok(if outcome.any_diverged() { EXIT_DIVERGED } else { EXIT_OK })
}

fn compare(args: CompareArgs) -> Result<i32, HarnessError> {
    let mut base = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            run: RunSpec {
                algo: AlgoId::Abasvrg,
                seeds: vec![1, 2, 3, 4, 5],
                out_dir: super::default_out_dir(),
                workers: 1,
            },
            objective: None,
            env: None,
            aba: None,
            abasgd: None,
            rl: None,
            schedule: None,
        },
    };
    if let Some(spec) = args.data.objective_spec()? {
        base.objective = Some(spec);
    }
    let spec = base
        .objective
        .clone()
        .ok_or_else(|| HarnessError::InvalidConfig("no objective given (use --data or --synthetic)".into()))?;
    if base.aba.is_none() {
        let (sigma_sq, l) = pilot(&spec)?;
        let m = args.m.unwrap_or(10);
        let epochs = args.epochs.unwrap_or(200);
        let eps = args.eps.unwrap_or(1e-3);
        base.aba = Some(AbaConfig {
            c_beta: 16.0,
            c_eps: 16.0,
            eps,
            sigma_sq,
            beta_init: AbaConfig::beta_init_general(eps, epochs),
            m,
            batch: args.b.unwrap_or(64),
            eta: args.eta.unwrap_or(1.0 / (4.0 * l)),
            max_epochs: epochs,
            output_mode: OutputMode::Last,
            sfo_mode: SfoMode::Samples,
            metric_every_iter: false,
            stop_grad_norm_sq: None,
        });
    }
    if base.abasgd.is_none() {
        let (sigma_sq, l) = pilot(&spec)?;
        let window = args.m.unwrap_or(10);
        base.abasgd = Some(AbaSgdConfig {
            eps: args.eps.unwrap_or(1e-3),
            sigma_sq: args.sigma_sq.unwrap_or(sigma_sq),
            window,
            alpha0: args.alpha0.unwrap_or(0.0),
            eta: args.eta.unwrap_or(1.0 / (2.0 * l)),
            max_iters: args.epochs.unwrap_or(200) * window,
            output_mode: OutputMode::Last,
            sfo_mode: SfoMode::Samples,
            stop_grad_norm_sq: None,
        });
    }
    if let Some(c) = base.aba.as_mut() {
        if let Some(v) = args.sigma_sq {
            c.sigma_sq = v;
        }
    }
    let sched = base.schedule.get_or_insert_with(ScheduleParams::default);
    sched.mu = args.mu.or(sched.mu).or(Some(2.0));
    sched.nu = args.nu.or(sched.nu).or(Some(50.0));
    sched.c_b = args.c_b.or(sched.c_b).or(Some(1.0));
    if !args.seed.is_empty() {
        base.run.seeds = args.seed.clone();
    }
    if let Some(v) = args.workers {
        base.run.workers = v;
    }
    if let Some(v) = &args.out {
        base.run.out_dir = v.clone();
    }

    let algos: Vec<AlgoId> = args
        .algos
        .iter()
        .map(|s| AlgoId::parse(s))
        .collect::<Result<_, _>>()?;
    let rows = run_compare(&base, &algos, args.target)?;
    println!("{:<20} {:>16} {:>10}", "algo", "mean_sfo", "reached");
    for row in &rows {
        println!(
            "{:<20} {:>16} {:>7}/{:<2}",
            row.algo,
            row.mean_sfo_at_target
                .map(|v| format!("{v:.1}"))
                .unwrap_or_else(|| "-".to_string()),
            row.reached_target_in,
            row.seeds
        );
    }
    let table_path = base.run.out_dir.join("compare.json");
    std::fs::create_dir_all(&base.run.out_dir).ok();
    std::fs::write(
        &table_path,
        serde_json::to_string_pretty(&rows).expect("rows serialize"),
    )
    .map_err(|source| HarnessError::Io {
        path: table_path.display().to_string(),
        source,
    })?;
    Ok(EXIT_OK)
}

fn verify(args: VerifyArgs) -> Result<i32, HarnessError> {
    let reports = run_suite(&args.suite, args.seed)?;
    let all_pass = super::emit_reports(&reports, std::io::stdout()).map_err(|source| {
        HarnessError::Io {
            path: "<stdout>".into(),
            source,
        }
    })?;
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        super::emit_reports(&reports, &mut buf).expect("in-memory write");
        std::fs::write(path, buf).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn estimate(args: EstimateArgs) -> Result<i32, HarnessError> {
    let spec = args
        .data
        .objective_spec()?
        .ok_or_else(|| HarnessError::InvalidConfig("no dataset given (use --data or --synthetic)".into()))?;
    let built = BuiltObjective::build(&spec)?;
    let constants = estimate_constants(built.as_dyn(), args.seed);
    println!(
        "{}",
        serde_json::to_string_pretty(&constants).expect("constants serialize")
    );
    Ok(EXIT_OK)
}
