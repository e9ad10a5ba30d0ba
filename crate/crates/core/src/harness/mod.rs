//! Experiment orchestration: typed configuration with TOML round-trip,
//! dataset ingestion, multi-seed execution, CSV/JSON result persistence,
//! cost-at-threshold comparison, and the oracle verification suites.

pub mod cli;
mod libsvm;
mod mdp_file;

pub use libsvm::{parse_libsvm, parse_libsvm_str, LibsvmData, LibsvmError};
pub use mdp_file::{parse_mdp_file, parse_mdp_str, MdpFileError};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{
    estimate_lipschitz, estimate_sigma_sq, FiniteSumObjective, NonconvexLogReg, SyntheticPl,
};
use crate::oracles::{
    self, finite_diff_check, omega_expectation_check, omega_variance_monotonicity_check,
    pl_rate_check, rl_unbiasedness_check, sample_mean_variance_check, variance_slope_check,
    CheckReport,
};
use crate::policy_grad::{
    exact_policy_eval, gpomdp_grad, run_abaspiderpg, run_abasvrpg, sample_trajectory, Baseline,
    Env, GaussianPolicy, GradKind, Mdp, Policy, PushEnv, RlAbaConfig, TabularSoftmaxPolicy,
};
use crate::sampling::SeededRng;
use crate::vr_optim::{
    run_abasgd, run_abaspider, run_abasvrg, run_baseline, AbaConfig, AbaSgdConfig, BaselineAlgo,
    EpochState, OutputMode, RunTrace, SfoMode,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "run_id,algo,seed,iter,epoch,sfo,loss,grad_norm_sq,batch_size";
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ABAOPT_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Libsvm(#[from] LibsvmError),
    #[error(transparent)]
    MdpFile(#[from] MdpFileError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Registered algorithm identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoId {
    Abasvrg,
    Abaspider,
    Abasgd,
    Sgd,
    Hsgd,
    SvrgFixed,
    SpiderboostFixed,
    SpiderExp,
    SpiderLin,
    Abasvrpg,
    Abaspiderpg,
    /// AbaSVRPG with the history term disabled (beta = 0).
    Svrpg,
    /// AbaSPIDER-PG with the history term disabled.
    Spiderpg,
}

impl AlgoId {
    pub fn is_rl(self) -> bool {
        matches!(
            self,
            AlgoId::Abasvrpg | AlgoId::Abaspiderpg | AlgoId::Svrpg | AlgoId::Spiderpg
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgoId::Abasvrg => "abasvrg",
            AlgoId::Abaspider => "abaspider",
            AlgoId::Abasgd => "abasgd",
            AlgoId::Sgd => "sgd",
            AlgoId::Hsgd => "hsgd",
            AlgoId::SvrgFixed => "svrg-fixed",
            AlgoId::SpiderboostFixed => "spiderboost-fixed",
            AlgoId::SpiderExp => "spider-exp",
            AlgoId::SpiderLin => "spider-lin",
            AlgoId::Abasvrpg => "abasvrpg",
            AlgoId::Abaspiderpg => "abaspiderpg",
            AlgoId::Svrpg => "svrpg",
            AlgoId::Spiderpg => "spiderpg",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| HarnessError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// What to optimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    LogregSynthetic {
        n: usize,
        d: usize,
        seed: u64,
        #[serde(default = "default_reg_alpha")]
        reg_alpha: f64,
    },
    LogregLibsvm {
        path: PathBuf,
        #[serde(default = "default_reg_alpha")]
        reg_alpha: f64,
        #[serde(default)]
        scale_features: bool,
    },
    SyntheticPl { n: usize, d: usize, seed: u64 },
}

fn default_reg_alpha() -> f64 {
    0.1
}

/// Which environment an RL run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Chain {
        states: usize,
        slip: f64,
        horizon: usize,
        gamma: f64,
    },
    Push { horizon: usize, gamma: f64 },
    File { path: PathBuf },
}

/// Prescribed-schedule parameters for the baselines that need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScheduleParams {
    /// Exponential growth factor (spider-exp).
    pub mu: Option<f64>,
    /// Linear growth factor (spider-lin).
    pub nu: Option<f64>,
    /// Per-iteration slope of the linearly growing SGD batch (hsgd).
    pub c_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algo: AlgoId,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn default_workers() -> usize {
    1
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Complete experiment plan; serializes to diff-friendly TOML and
/// round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aba: Option<AbaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abasgd: Option<AbaSgdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rl: Option<RlAbaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleParams>,
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_toml()).map_err(io_err(path))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.run.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("need at least one seed".into()));
        }
        if self.run.workers == 0 {
            return Err(HarnessError::InvalidConfig("workers must be >= 1".into()));
        }
        let algo = self.run.algo;
        if algo.is_rl() {
            if self.env.is_none() {
                return Err(HarnessError::InvalidConfig(
                    "RL algorithms need an [env] section".into(),
                ));
            }
            let rl = self
                .rl
                .as_ref()
                .ok_or_else(|| HarnessError::InvalidConfig("RL algorithms need an [rl] section".into()))?;
            rl.validate()
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        } else {
            if self.objective.is_none() {
                return Err(HarnessError::InvalidConfig(
                    "conventional algorithms need an [objective] section".into(),
                ));
            }
            match algo {
                AlgoId::Abasgd => {
                    let c = self.abasgd.as_ref().ok_or_else(|| {
                        HarnessError::InvalidConfig("abasgd needs an [abasgd] section".into())
                    })?;
                    c.validate()
                        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
                }
                _ => {
                    let c = self.aba.as_ref().ok_or_else(|| {
                        HarnessError::InvalidConfig("optimizer needs an [aba] section".into())
                    })?;
                    c.validate()
                        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
                }
            }
            match algo {
                AlgoId::SpiderExp => {
                    self.schedule.as_ref().and_then(|s| s.mu).ok_or_else(|| {
                        HarnessError::InvalidConfig("spider-exp needs schedule.mu".into())
                    })?;
                }
                AlgoId::SpiderLin => {
                    self.schedule.as_ref().and_then(|s| s.nu).ok_or_else(|| {
                        HarnessError::InvalidConfig("spider-lin needs schedule.nu".into())
                    })?;
                }
                AlgoId::Hsgd => {
                    self.schedule.as_ref().and_then(|s| s.c_b).ok_or_else(|| {
                        HarnessError::InvalidConfig("hsgd needs schedule.c_b".into())
                    })?;
                }
                _ => {}
            }
            if let Some(ObjectiveSpec::LogregLibsvm { path, .. }) = &self.objective {
                if !path.exists() {
                    return Err(HarnessError::InvalidConfig(format!(
                        "dataset path {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Objective instantiated from a spec; owns its data.
pub enum BuiltObjective {
    Logreg(NonconvexLogReg),
    Pl(SyntheticPl),
}

impl BuiltObjective {
    pub fn build(spec: &ObjectiveSpec) -> Result<Self, HarnessError> {
        Ok(match spec {
            ObjectiveSpec::LogregSynthetic { n, d, seed, reg_alpha } => {
                BuiltObjective::Logreg(NonconvexLogReg::synthetic(*n, *d, *reg_alpha, *seed))
            }
            ObjectiveSpec::LogregLibsvm {
                path,
                reg_alpha,
                scale_features,
            } => {
                let mut data = parse_libsvm(path)?;
                if *scale_features {
                    data.scale_features();
                }
                BuiltObjective::Logreg(data.into_objective(*reg_alpha))
            }
            ObjectiveSpec::SyntheticPl { n, d, seed } => {
                BuiltObjective::Pl(SyntheticPl::generate(*n, *d, *seed))
            }
        })
    }

    pub fn as_dyn(&self) -> &dyn FiniteSumObjective {
        match self {
            BuiltObjective::Logreg(o) => o,
            BuiltObjective::Pl(o) => o,
        }
    }
}

/// Environment instantiated from a spec.
pub enum BuiltEnv {
    Mdp(Mdp),
    Push(PushEnv),
}

impl BuiltEnv {
    pub fn build(spec: &EnvSpec) -> Result<Self, HarnessError> {
        Ok(match spec {
            EnvSpec::Chain {
                states,
                slip,
                horizon,
                gamma,
            } => BuiltEnv::Mdp(Mdp::chain(*states, *slip, *horizon, *gamma)),
            EnvSpec::Push { horizon, gamma } => BuiltEnv::Push(PushEnv {
                horizon: *horizon,
                gamma: *gamma,
                ..PushEnv::default()
            }),
            EnvSpec::File { path } => BuiltEnv::Mdp(parse_mdp_file(path)?),
        })
    }
}

/// Per-run summary serialized next to the trace CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub run_id: String,
    pub algo: String,
    pub seed: u64,
    pub records: usize,
    pub total_sfo: u64,
    pub final_loss: Option<f64>,
    pub final_grad_norm_sq: Option<f64>,
    pub diverged: bool,
    pub sfo_at_target: Option<u64>,
    pub target_grad_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateSummary {
    pub schema_version: u32,
    pub algo: String,
    pub seeds: Vec<u64>,
    pub mean_final_loss: Option<f64>,
    pub std_final_loss: Option<f64>,
    pub mean_final_grad_norm_sq: Option<f64>,
    pub std_final_grad_norm_sq: Option<f64>,
    pub mean_sfo_at_target: Option<f64>,
    pub runs: Vec<RunSummary>,
}

pub struct ExperimentOutcome {
    pub summaries: Vec<RunSummary>,
    pub aggregate: AggregateSummary,
    pub csv_paths: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn any_diverged(&self) -> bool {
        self.summaries.iter().any(|s| s.diverged)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders a trace as CSV rows under the stable header.
pub fn trace_to_csv(run_id: &str, algo: &str, seed: u64, trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{run_id},{algo},{seed},{},{},{},{},{},{}\n",
            r.iter,
            r.epoch,
            r.sfo,
            fmt_opt(r.loss),
            fmt_opt(r.grad_norm_sq),
            r.batch_size
        ));
    }
    out
}

fn summarize(
    run_id: String,
    algo: AlgoId,
    seed: u64,
    trace: &RunTrace,
    target: Option<f64>,
) -> RunSummary {
    let last_metrics = trace
        .records
        .iter()
        .rev()
        .find(|r| r.loss.is_some())
        .map(|r| (r.loss, r.grad_norm_sq));
    RunSummary {
        schema_version: SCHEMA_VERSION,
        run_id,
        algo: algo.name().to_string(),
        seed,
        records: trace.records.len(),
        total_sfo: trace.total_sfo(),
        final_loss: last_metrics.and_then(|m| m.0),
        final_grad_norm_sq: last_metrics.and_then(|m| m.1),
        diverged: trace.diverged,
        sfo_at_target: target.and_then(|t| trace.sfo_at_target(t)),
        target_grad_norm_sq: target,
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn aggregate(algo: AlgoId, summaries: &[RunSummary]) -> AggregateSummary {
    let losses: Vec<f64> = summaries.iter().filter_map(|s| s.final_loss).collect();
    let grads: Vec<f64> = summaries.iter().filter_map(|s| s.final_grad_norm_sq).collect();
    let sfos: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.sfo_at_target.map(|v| v as f64))
        .collect();
    let (mean_final_loss, std_final_loss) = mean_std(&losses);
    let (mean_final_grad_norm_sq, std_final_grad_norm_sq) = mean_std(&grads);
    let mean_sfo_at_target = if sfos.len() == summaries.len() && !sfos.is_empty() {
        Some(sfos.iter().sum::<f64>() / sfos.len() as f64)
    } else {
        None
    };
    AggregateSummary {
        schema_version: SCHEMA_VERSION,
        algo: algo.name().to_string(),
        seeds: summaries.iter().map(|s| s.seed).collect(),
        mean_final_loss,
        std_final_loss,
        mean_final_grad_norm_sq,
        std_final_grad_norm_sq,
        mean_sfo_at_target,
        runs: summaries.to_vec(),
    }
}

/// Runs one `(algorithm, seed)` cell of a conventional-optimization
/// experiment.
pub fn run_opt_cell(
    obj: &dyn FiniteSumObjective,
    algo: AlgoId,
    aba: Option<&AbaConfig>,
    abasgd: Option<&AbaSgdConfig>,
    schedule: Option<&ScheduleParams>,
    seed: u64,
) -> RunTrace {
    let x0 = vec![0.0; obj.dim()];
    let mut rng = SeededRng::new(seed);
    match algo {
        AlgoId::Abasvrg => run_abasvrg(obj, aba.expect("aba config"), &x0, &mut rng),
        AlgoId::Abaspider => run_abaspider(obj, aba.expect("aba config"), &x0, &mut rng),
        AlgoId::Abasgd => run_abasgd(obj, abasgd.expect("abasgd config"), &x0, &mut rng),
        AlgoId::Sgd => run_baseline(obj, BaselineAlgo::Sgd, aba.expect("aba config"), &x0, &mut rng),
        AlgoId::Hsgd => {
            let c_b = schedule.and_then(|s| s.c_b).expect("hsgd c_b");
            run_baseline(obj, BaselineAlgo::Hsgd { c_b }, aba.expect("aba config"), &x0, &mut rng)
        }
        AlgoId::SvrgFixed => {
            run_baseline(obj, BaselineAlgo::SvrgFixed, aba.expect("aba config"), &x0, &mut rng)
        }
        AlgoId::SpiderboostFixed => run_baseline(
            obj,
            BaselineAlgo::SpiderBoostFixed,
            aba.expect("aba config"),
            &x0,
            &mut rng,
        ),
        AlgoId::SpiderExp => {
            let mu = schedule.and_then(|s| s.mu).expect("spider-exp mu");
            run_baseline(obj, BaselineAlgo::SpiderExp { mu }, aba.expect("aba config"), &x0, &mut rng)
        }
        AlgoId::SpiderLin => {
            let nu = schedule.and_then(|s| s.nu).expect("spider-lin nu");
            run_baseline(obj, BaselineAlgo::SpiderLin { nu }, aba.expect("aba config"), &x0, &mut rng)
        }
        rl => panic!("{} is not a conventional-optimization algorithm", rl.name()),
    }
}

/// Runs one `(algorithm, seed)` cell of an RL experiment. Enumerable MDPs
/// get the exact metric oracle; the continuous environment falls back to a
/// fixed-size Monte-Carlo estimate.
pub fn run_rl_cell(env: &BuiltEnv, algo: AlgoId, rl: &RlAbaConfig, seed: u64) -> RunTrace {
    let mut cfg = rl.clone();
    if matches!(algo, AlgoId::Svrpg | AlgoId::Spiderpg) {
        cfg.beta = 0.0;
    }
    let rng = SeededRng::new(seed);
    match env {
        BuiltEnv::Mdp(mdp) => {
            let policy = TabularSoftmaxPolicy::one_hot(mdp.n_states(), mdp.n_actions());
            let theta0 = vec![0.0; policy.dim()];
            let exact_ok = exact_policy_eval(mdp, &policy, &theta0).is_ok();
            let metric = |theta: &[f64]| -> (f64, f64) {
                let eval = exact_policy_eval(mdp, &policy, theta).expect("enumerable MDP");
                (eval.value, eval.grad.iter().map(|g| g * g).sum())
            };
            let metric_opt: Option<&dyn Fn(&[f64]) -> (f64, f64)> =
                if exact_ok { Some(&metric) } else { None };
            match algo {
                AlgoId::Abasvrpg | AlgoId::Svrpg => {
                    run_abasvrpg(mdp, &policy, &cfg, &theta0, &rng, metric_opt)
                }
                AlgoId::Abaspiderpg | AlgoId::Spiderpg => {
                    run_abaspiderpg(mdp, &policy, &cfg, &theta0, &rng, metric_opt)
                }
                other => panic!("{} is not an RL algorithm", other.name()),
            }
        }
        BuiltEnv::Push(push) => {
            let policy = GaussianPolicy;
            let theta0 = vec![0.0; policy.dim()];
            let metric = |theta: &[f64]| mc_metric(push, &policy, theta);
            match algo {
                AlgoId::Abasvrpg | AlgoId::Svrpg => {
                    run_abasvrpg(push, &policy, &cfg, &theta0, &rng, Some(&metric))
                }
                AlgoId::Abaspiderpg | AlgoId::Spiderpg => {
                    run_abaspiderpg(push, &policy, &cfg, &theta0, &rng, Some(&metric))
                }
                other => panic!("{} is not an RL algorithm", other.name()),
            }
        }
    }
}

/// Monte-Carlo metric for environments without an exact oracle: mean return
/// and squared norm of the mean gradient over a fixed rollout budget.
fn mc_metric<E, P>(env: &E, policy: &P, theta: &[f64]) -> (f64, f64)
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    const ROLLOUTS: usize = 256;
    let rng = SeededRng::new(0xce7a11).substream(&[0x3e7]);
    let d = policy.dim();
    let mut j = 0.0;
    let mut mean = vec![0.0; d];
    for i in 0..ROLLOUTS {
        let mut traj_rng = rng.substream(&[i as u64]);
        let traj = sample_trajectory(env, policy, theta, &mut traj_rng);
        j += traj.total_discounted_reward(env.discount());
        let g = gpomdp_grad(&traj, policy, theta, &Baseline::None, env.discount());
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi;
        }
    }
    j /= ROLLOUTS as f64;
    let norm_sq = mean.iter().map(|m| (m / ROLLOUTS as f64).powi(2)).sum();
    (j, norm_sq)
}

/// Executes every seed of the configured experiment, writing one CSV and
/// one JSON summary per run plus an aggregate summary. Cells run
/// concurrently up to `run.workers`; outputs are deterministic per seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let out_dir = &cfg.run.out_dir;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let algo = cfg.run.algo;
    let target = target_of(cfg);

    let traces: Vec<(u64, RunTrace)> = if algo.is_rl() {
        let env = BuiltEnv::build(cfg.env.as_ref().expect("validated"))?;
        let rl = cfg.rl.as_ref().expect("validated");
        run_cells(cfg.run.workers, &cfg.run.seeds, |seed| {
            run_rl_cell(&env, algo, rl, seed)
        })
    } else {
        let obj = BuiltObjective::build(cfg.objective.as_ref().expect("validated"))?;
        let aba = cfg.aba.as_ref();
        let abasgd = cfg.abasgd.as_ref();
        let schedule = cfg.schedule.as_ref();
        run_cells(cfg.run.workers, &cfg.run.seeds, |seed| {
            run_opt_cell(obj.as_dyn(), algo, aba, abasgd, schedule, seed)
        })
    };

    let mut summaries = Vec::new();
    let mut csv_paths = Vec::new();
    for (seed, trace) in &traces {
        let run_id = format!("{}-s{}", algo.name(), seed);
        let csv_path = out_dir.join(format!("{run_id}.csv"));
        fs::write(&csv_path, trace_to_csv(&run_id, algo.name(), *seed, trace))
            .map_err(io_err(&csv_path))?;
        let summary = summarize(run_id.clone(), algo, *seed, trace, target);
        let sum_path = out_dir.join(format!("{run_id}.summary.json"));
        fs::write(
            &sum_path,
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        )
        .map_err(io_err(&sum_path))?;
        summaries.push(summary);
        csv_paths.push(csv_path);
    }

    let aggregate = aggregate(algo, &summaries);
    let agg_path = out_dir.join(format!("{}.aggregate.json", algo.name()));
    fs::write(
        &agg_path,
        serde_json::to_string_pretty(&aggregate).expect("aggregate serializes"),
    )
    .map_err(io_err(&agg_path))?;

    Ok(ExperimentOutcome {
        summaries,
        aggregate,
        csv_paths,
    })
}

fn target_of(cfg: &ExperimentConfig) -> Option<f64> {
    if cfg.run.algo.is_rl() {
        cfg.rl.as_ref().and_then(|c| c.stop_grad_norm_sq)
    } else if cfg.run.algo == AlgoId::Abasgd {
        cfg.abasgd.as_ref().and_then(|c| c.stop_grad_norm_sq)
    } else {
        cfg.aba.as_ref().and_then(|c| c.stop_grad_norm_sq)
    }
}

fn run_cells<F>(workers: usize, seeds: &[u64], cell: F) -> Vec<(u64, RunTrace)>
where
    F: Fn(u64) -> RunTrace + Sync,
{
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| (s, cell(s))).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(seeds.len()))
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| (s, cell(s))).collect()
    })
}

/// One line of the `compare` table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub algo: String,
    pub mean_sfo_at_target: Option<f64>,
    pub reached_target_in: usize,
    pub seeds: usize,
}

/// Runs several algorithms over the same seeds and reports mean
/// cost-at-threshold, ascending; algorithms that never reach the target
/// sort last.
pub fn run_compare(
    base: &ExperimentConfig,
    algos: &[AlgoId],
    target: f64,
) -> Result<Vec<CompareRow>, HarnessError> {
    let mut rows = Vec::new();
    for &algo in algos {
        let mut cfg = base.clone();
        cfg.run.algo = algo;
        set_target(&mut cfg, target);
        cfg.validate()?;
        let traces: Vec<(u64, RunTrace)> = if algo.is_rl() {
            let env = BuiltEnv::build(cfg.env.as_ref().expect("validated"))?;
            let rl = cfg.rl.as_ref().expect("validated");
            run_cells(cfg.run.workers, &cfg.run.seeds, |seed| {
                run_rl_cell(&env, algo, rl, seed)
            })
        } else {
            let obj = BuiltObjective::build(cfg.objective.as_ref().expect("validated"))?;
            run_cells(cfg.run.workers, &cfg.run.seeds, |seed| {
                run_opt_cell(
                    obj.as_dyn(),
                    algo,
                    cfg.aba.as_ref(),
                    cfg.abasgd.as_ref(),
                    cfg.schedule.as_ref(),
                    seed,
                )
            })
        };
        let costs: Vec<u64> = traces
            .iter()
            .filter_map(|(_, t)| t.sfo_at_target(target))
            .collect();
        rows.push(CompareRow {
            algo: algo.name().to_string(),
            mean_sfo_at_target: if costs.len() == traces.len() {
                Some(costs.iter().sum::<u64>() as f64 / costs.len() as f64)
            } else {
                None
            },
            reached_target_in: costs.len(),
            seeds: traces.len(),
        });
    }
    rows.sort_by(|a, b| match (a.mean_sfo_at_target, b.mean_sfo_at_target) {
        (Some(x), Some(y)) => x.partial_cmp(&y).expect("finite costs"),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

fn set_target(cfg: &mut ExperimentConfig, target: f64) {
    if let Some(aba) = cfg.aba.as_mut() {
        aba.stop_grad_norm_sq = Some(target);
    }
    if let Some(sgd) = cfg.abasgd.as_mut() {
        sgd.stop_grad_norm_sq = Some(target);
    }
    if let Some(rl) = cfg.rl.as_mut() {
        rl.stop_grad_norm_sq = Some(target);
    }
}

/// Pilot constants `sigma_hat^2` and `L_hat` for a dataset at the zero
/// start point.
#[derive(Debug, Clone, Serialize)]
pub struct PilotConstants {
    pub sigma_sq: f64,
    pub lipschitz: f64,
    pub lipschitz_hint: Option<f64>,
    pub n: usize,
    pub d: usize,
}

pub fn estimate_constants(obj: &dyn FiniteSumObjective, seed: u64) -> PilotConstants {
    let x0 = vec![0.0; obj.dim()];
    let mut rng = SeededRng::new(seed).substream(&[0xc0557]);
    PilotConstants {
        sigma_sq: estimate_sigma_sq(obj, &x0, &mut rng),
        lipschitz: estimate_lipschitz(obj, &x0, 200, &mut rng),
        lipschitz_hint: obj.lipschitz_hint(),
        n: obj.num_components(),
        d: obj.dim(),
    }
}

/// Theorem-preset configuration for gradient-dominated runs.
///
/// Given the certified `L` and `tau` of a [`SyntheticPl`] instance, picks
/// `eta = 1/(c_eta L)`, an epoch length in `[8 L tau / (c_eta - 2), 4 L tau)`,
/// `B = m^2` (snapshot variant) or `B = m` (recursive variant), matching
/// history weights, and the gradient-dominated first-epoch statistic.
pub fn pl_preset(obj: &SyntheticPl, c_eta: f64, spider: bool, eps: f64) -> (AbaConfig, f64) {
    assert!(c_eta > 4.0, "presets need c_eta > 4");
    let l = obj.lipschitz_hint().expect("certified L");
    let tau = obj.tau();
    let l_tau = l * tau;
    let gamma_hat = 1.0 - 1.0 / (8.0 * l_tau);
    let m = ((8.0 * l_tau / (c_eta - 2.0)).ceil() as usize).max(1);
    assert!(
        (m as f64) < 4.0 * l_tau,
        "epoch-length window is empty: L*tau = {l_tau}"
    );
    let batch = if spider { m } else { m * m };
    let eta = 1.0 / (c_eta * l);
    let exp_term = 1.0 - (-4.0 / (c_eta * (c_eta - 2.0))).exp();
    let c_coef = (2.0 * tau + 2.0 * tau / exp_term).max(16.0 * c_eta * l_tau / m as f64);

    // epochs to bring gamma^K * gap0 under eps/2 at K = S m
    let x0 = vec![0.0; obj.dim()];
    let gap0 = (obj.value(&x0) - obj.min_value()).max(1e-12);
    let k_needed = (2.0 * gap0 / eps).ln() / (1.0 / gamma_hat).ln();
    let max_epochs = ((k_needed / m as f64).ceil() as usize + 2).max(4);

    let cfg = AbaConfig {
        c_beta: c_coef,
        c_eps: c_coef,
        eps,
        sigma_sq: 1.0, // caller overwrites with the pilot estimate
        beta_init: AbaConfig::beta_init_pl(eps, gamma_hat, m, max_epochs),
        m,
        batch,
        eta,
        max_epochs,
        output_mode: OutputMode::Last,
        sfo_mode: SfoMode::Samples,
        metric_every_iter: false,
        stop_grad_norm_sq: None,
    };
    (cfg, gamma_hat)
}

/// Named oracle suites behind `verify`.
pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<CheckReport>, HarnessError> {
    match suite {
        "core" => Ok(core_suite(seed)),
        "rl" => Ok(rl_suite(seed)),
        "pl" => Ok(pl_suite(seed)),
        "all" => {
            let mut all = core_suite(seed);
            all.extend(rl_suite(seed));
            all.extend(pl_suite(seed));
            Ok(all)
        }
        other => Err(HarnessError::InvalidConfig(format!("unknown suite `{other}`"))),
    }
}

fn core_suite(seed: u64) -> Vec<CheckReport> {
    use rand::Rng;
    let mut reports = Vec::new();
    let logreg = NonconvexLogReg::synthetic(60, 6, 0.1, seed ^ 0x10);
    let pl = SyntheticPl::generate(50, 5, seed ^ 0x20);
    let mut rng = SeededRng::new(seed).substream(&[0xc02e]);

    for trial in 0..5 {
        let x: Vec<f64> = (0..6).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect();
        reports.push(finite_diff_check(
            &format!("fd-logreg-{trial}"),
            |x| logreg.value(x),
            |x| logreg.full_grad(x),
            &x,
            oracles::fd_step(&x),
            1e-5,
        ));
        let y: Vec<f64> = (0..5).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect();
        reports.push(finite_diff_check(
            &format!("fd-synthetic-pl-{trial}"),
            |y| pl.value(y),
            |y| pl.full_grad(y),
            &y,
            oracles::fd_step(&y),
            1e-5,
        ));
    }

    let policy = TabularSoftmaxPolicy::one_hot(3, 2);
    for trial in 0..3 {
        let theta: Vec<f64> = (0..6).map(|_| 2.0 * (rng.random::<f64>() - 0.5)).collect();
        let (s, a) = (trial % 3, trial % 2);
        reports.push(finite_diff_check(
            &format!("fd-softmax-logprob-{trial}"),
            |t| policy.log_prob(t, s, a),
            |t| policy.grad_log_prob(t, s, a),
            &theta,
            oracles::fd_step(&theta),
            1e-5,
        ));
    }
    let gauss = GaussianPolicy;
    for trial in 0..3 {
        let theta: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let (s, a) = (0.8 * trial as f64 - 0.5, 0.3 * trial as f64);
        reports.push(finite_diff_check(
            &format!("fd-gaussian-logprob-{trial}"),
            |t| gauss.log_prob(t, s, a),
            |t| gauss.grad_log_prob(t, s, a),
            &theta,
            oracles::fd_step(&theta),
            1e-5,
        ));
    }

    let x = vec![0.2, -0.4, 0.3, 0.0, 0.5, -0.1];
    for n_batch in [2usize, 8, 32] {
        reports.push(sample_mean_variance_check(&logreg, &x, n_batch, 10_000, seed ^ 0x30));
    }
    reports.push(variance_slope_check(&logreg, &x, &[2, 8, 32], 10_000, seed ^ 0x31));

    // estimator fixed points, checked bitwise
    let snap = vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.2];
    let anchor = logreg.full_grad(&snap);
    let state = EpochState::new(snap.clone(), anchor.clone(), 1);
    let v = crate::vr_optim::svrg_inner_direction(&logreg, &snap, &state, &[1, 5, 5, 9]);
    reports.push(CheckReport {
        name: "svrg-direction-identity".into(),
        pass: v == anchor,
        measured: v
            .iter()
            .zip(&anchor)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        tolerance: 0.0,
        sample_size: 1,
        seed,
    });
    let v_prev = vec![0.3, 0.1, -0.2, 0.4, 0.0, 0.25];
    let v = crate::vr_optim::spider_inner_direction(&logreg, &snap, &snap, &v_prev, &[2, 7]);
    reports.push(CheckReport {
        name: "spider-direction-identity".into(),
        pass: v == v_prev,
        measured: v
            .iter()
            .zip(&v_prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        tolerance: 0.0,
        sample_size: 1,
        seed,
    });
    reports
}

fn rl_suite(seed: u64) -> Vec<CheckReport> {
    let mut reports = Vec::new();
    let mdp = Mdp::chain(5, 0.1, 5, 0.99);
    let policy = TabularSoftmaxPolicy::one_hot(5, 2);
    let theta = vec![0.1; 10];
    for kind in [GradKind::Reinforce, GradKind::Gpomdp] {
        reports.push(rl_unbiasedness_check(&mdp, &policy, &theta, kind, 20_000, seed ^ 0x40));
    }
    // Softmax policies are invariant to constant logit shifts; the offset
    // direction must vary per coordinate to move the distribution at all.
    let direction: Vec<f64> = (0..10).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let target: Vec<f64> = theta
        .iter()
        .zip(&direction)
        .map(|(t, u)| t + 0.1 * u)
        .collect();
    reports.push(omega_expectation_check(&mdp, &policy, &theta, &target, 10_000, seed ^ 0x41));
    reports.push(omega_variance_monotonicity_check(
        &mdp,
        &policy,
        &theta,
        &direction,
        &[0.0, 0.1, 0.5],
        10_000,
        seed ^ 0x42,
    ));
    reports
}

fn pl_suite(seed: u64) -> Vec<CheckReport> {
    let mut reports = Vec::new();
    let obj = SyntheticPl::generate(200, 6, seed ^ 0x50);
    let eps = 1e-3;
    for spider in [false, true] {
        let (mut cfg, gamma_hat) = pl_preset(&obj, 6.0, spider, eps);
        let mut rng = SeededRng::new(seed ^ 0x51).substream(&[0x9a]);
        cfg.sigma_sq = estimate_sigma_sq(&obj, &vec![0.0; 6], &mut rng);
        let x0 = vec![0.0; 6];
        let mut run_rng = SeededRng::new(seed ^ 0x52);
        let trace = if spider {
            run_abaspider(&obj, &cfg, &x0, &mut run_rng)
        } else {
            run_abasvrg(&obj, &cfg, &x0, &mut run_rng)
        };
        let mut report = pl_rate_check(&trace, obj.min_value(), gamma_hat, cfg.m, eps)
            .expect("boundary metrics exist");
        report.name = format!(
            "{} {}",
            if spider { "pl-abaspider" } else { "pl-abasvrg" },
            report.name
        );
        reports.push(report);
    }

    // negative control: eta = 2/L must fail. The quadratic's full gradient
    // is exactly lambda_max-smooth, so 2/lambda_max sits on the stability
    // boundary of gradient descent.
    let (mut cfg, gamma_hat) = pl_preset(&obj, 6.0, false, eps);
    cfg.eta = 2.0 / obj.lambda_max();
    let mut run_rng = SeededRng::new(seed ^ 0x53);
    let trace = run_abasvrg(&obj, &cfg, &vec![0.0; 6], &mut run_rng);
    let inner = pl_rate_check(&trace, obj.min_value(), gamma_hat, cfg.m, eps)
        .expect("boundary metrics exist");
    reports.push(CheckReport {
        name: "pl-negative-control eta=2/L".into(),
        pass: !inner.pass,
        measured: inner.measured,
        tolerance: inner.tolerance,
        sample_size: inner.sample_size,
        seed,
    });
    reports
}

/// Writes reports as JSON lines to `w`; returns true when all passed.
pub fn emit_reports<W: Write>(reports: &[CheckReport], mut w: W) -> std::io::Result<bool> {
    let mut all_pass = true;
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
        all_pass &= r.pass;
    }
    Ok(all_pass)
}
