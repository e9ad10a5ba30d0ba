//! Variance-reduced policy gradient at desk scale: trajectory gradients,
//! importance weights, and the adaptive-batch epoch loop over enumerable
//! toy environments.
//!
//! The anchor batch size follows the trajectory-gradient history:
//! `N = alpha sigma^2 / ((beta/m) * sum of last-m ||v||^2 + eps)`, so early
//! iterations (large gradients) sample few trajectories and later ones
//! approach the fixed vanilla batch `alpha sigma^2 / eps`.

mod continuous;
mod exact;
mod runners;
mod tabular;

pub use continuous::{GaussianPolicy, PushEnv};
pub use exact::{exact_policy_eval, exact_policy_gradient, EnumerationError, ExactPolicyEval};
pub use runners::{run_abaspiderpg, run_abasvrpg, RlMetricFn};
pub use tabular::{Mdp, MdpError, TabularSoftmaxPolicy};

use serde::{Deserialize, Serialize};

use crate::sampling::SeededRng;
use crate::vr_optim::{ConfigError, OutputMode};

/// Finite-horizon environment: initial state, one-step dynamics, discount.
pub trait Env {
    type State: Copy + std::fmt::Debug;
    type Action: Copy + std::fmt::Debug;

    fn horizon(&self) -> usize;
    fn discount(&self) -> f64;
    fn initial_state(&self, rng: &mut SeededRng) -> Self::State;
    /// Returns the next state and the reward of the *current* state-action
    /// pair.
    fn step(&self, s: Self::State, a: Self::Action, rng: &mut SeededRng) -> (Self::State, f64);
}

/// Differentiable stochastic policy over parameter vector `theta`.
///
/// The `_into` methods accumulate into `out`; callers zero the buffer when
/// they want the bare quantity.
pub trait Policy<S: Copy, A: Copy> {
    fn dim(&self) -> usize;
    fn sample_action(&self, theta: &[f64], s: S, rng: &mut SeededRng) -> A;
    fn log_prob(&self, theta: &[f64], s: S, a: A) -> f64;
    fn grad_log_prob_into(&self, theta: &[f64], s: S, a: A, out: &mut [f64]);
    /// Feature map used by linear baselines.
    fn features_into(&self, s: S, a: A, out: &mut [f64]);

    fn grad_log_prob(&self, theta: &[f64], s: S, a: A) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_log_prob_into(theta, s, a, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajStep<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    /// Log-probability of `action` under the sampling parameters.
    pub log_prob: f64,
}

/// State/action/reward sequence with per-step log-probabilities under the
/// policy that generated it. Transition probabilities are never needed:
/// they cancel in every importance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    pub steps: Vec<TrajStep<S, A>>,
}

impl<S: Copy, A: Copy> Trajectory<S, A> {
    pub fn total_discounted_reward(&self, gamma: f64) -> f64 {
        let mut disc = 1.0;
        let mut total = 0.0;
        for step in &self.steps {
            total += disc * step.reward;
            disc *= gamma;
        }
        total
    }
}

/// Rolls out exactly `horizon` steps of `policy` in `env`.
pub fn sample_trajectory<E: Env, P: Policy<E::State, E::Action>>(
    env: &E,
    policy: &P,
    theta: &[f64],
    rng: &mut SeededRng,
) -> Trajectory<E::State, E::Action> {
    let mut steps = Vec::with_capacity(env.horizon());
    let mut s = env.initial_state(rng);
    for _ in 0..env.horizon() {
        let a = policy.sample_action(theta, s, rng);
        let log_prob = policy.log_prob(theta, s, a);
        let (next, reward) = env.step(s, a, rng);
        steps.push(TrajStep {
            state: s,
            action: a,
            reward,
            log_prob,
        });
        s = next;
    }
    Trajectory { steps }
}

/// Two unbiased trajectory-gradient constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradKind {
    Reinforce,
    #[default]
    Gpomdp,
}

/// Optional control variate `b(s, a)` subtracted from per-step rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    None,
    Constant(f64),
    /// Weights dotted with the policy's feature map at `(s, a)`.
    LinearFeatures(Vec<f64>),
}

impl Baseline {
    fn eval<S: Copy, A: Copy, P: Policy<S, A>>(
        &self,
        policy: &P,
        s: S,
        a: A,
        scratch: &mut [f64],
    ) -> f64 {
        match self {
            Baseline::None => 0.0,
            Baseline::Constant(c) => *c,
            Baseline::LinearFeatures(w) => {
                scratch.fill(0.0);
                policy.features_into(s, a, scratch);
                w.iter().zip(scratch.iter()).map(|(wi, fi)| wi * fi).sum()
            }
        }
    }
}

/// REINFORCE trajectory gradient:
/// `(sum_t gamma^t r_t - b(s_t, a_t)) * sum_t grad log pi_theta(a_t | s_t)`.
///
/// Score terms are evaluated at the argument `theta`, which may differ from
/// the parameters the trajectory was sampled under.
pub fn reinforce_grad<S: Copy, A: Copy, P: Policy<S, A>>(
    traj: &Trajectory<S, A>,
    policy: &P,
    theta: &[f64],
    baseline: &Baseline,
    gamma: f64,
) -> Vec<f64> {
    let d = policy.dim();
    let mut score = vec![0.0; d];
    let mut feat = vec![0.0; d];
    let mut scalar = 0.0;
    let mut disc = 1.0;
    for step in &traj.steps {
        scalar += disc * step.reward - baseline.eval(policy, step.state, step.action, &mut feat);
        policy.grad_log_prob_into(theta, step.state, step.action, &mut score);
        disc *= gamma;
    }
    for v in score.iter_mut() {
        *v *= scalar;
    }
    score
}

/// G(PO)MDP trajectory gradient:
/// `sum_t (gamma^t r_t - b(s_t, a_t)) * sum_{i<=t} grad log pi_theta(a_i | s_i)`.
///
/// The reward at time `t` multiplies only the scores of actions taken up to
/// `t`, which drops the zero-mean future-score terms of REINFORCE and
/// lowers variance.
pub fn gpomdp_grad<S: Copy, A: Copy, P: Policy<S, A>>(
    traj: &Trajectory<S, A>,
    policy: &P,
    theta: &[f64],
    baseline: &Baseline,
    gamma: f64,
) -> Vec<f64> {
    let d = policy.dim();
    let mut prefix_score = vec![0.0; d];
    let mut feat = vec![0.0; d];
    let mut out = vec![0.0; d];
    let mut disc = 1.0;
    for step in &traj.steps {
        policy.grad_log_prob_into(theta, step.state, step.action, &mut prefix_score);
        let coeff =
            disc * step.reward - baseline.eval(policy, step.state, step.action, &mut feat);
        for (o, sc) in out.iter_mut().zip(&prefix_score) {
            *o += coeff * sc;
        }
        disc *= gamma;
    }
    out
}

/// Dispatches on the configured trajectory-gradient construction.
pub fn trajectory_grad<S: Copy, A: Copy, P: Policy<S, A>>(
    kind: GradKind,
    traj: &Trajectory<S, A>,
    policy: &P,
    theta: &[f64],
    baseline: &Baseline,
    gamma: f64,
) -> Vec<f64> {
    match kind {
        GradKind::Reinforce => reinforce_grad(traj, policy, theta, baseline, gamma),
        GradKind::Gpomdp => gpomdp_grad(traj, policy, theta, baseline, gamma),
    }
}

/// Trajectory probability ratio `p(tau | theta_target) / p(tau | theta_sample)`
/// for `tau` sampled under `theta_sample`.
///
/// Initial-state and transition factors cancel algebraically, leaving only
/// policy log-probability differences, so the MDP itself never enters.
pub fn importance_weight<S: Copy, A: Copy, P: Policy<S, A>>(
    traj: &Trajectory<S, A>,
    policy: &P,
    theta_sample: &[f64],
    theta_target: &[f64],
) -> f64 {
    let mut log_ratio = 0.0;
    for step in &traj.steps {
        log_ratio += policy.log_prob(theta_target, step.state, step.action)
            - policy.log_prob(theta_sample, step.state, step.action);
    }
    log_ratio.exp()
}

/// Optional smoothness constants from the analysis; carried as metadata for
/// preset computations, never consumed by the algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlSmoothness {
    pub score_bound: Option<f64>,
    pub score_hessian_bound: Option<f64>,
    pub score_norm_sq_bound: Option<f64>,
    pub traj_grad_norm_sq_bound: Option<f64>,
    pub traj_grad_lipschitz: Option<f64>,
    pub correction_variance_coeff: Option<f64>,
    pub weight_variance_coeff: Option<f64>,
}

/// Tunables of the adaptive-batch policy gradient loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlAbaConfig {
    /// The product `alpha * sigma^2`; tuned as a single knob.
    pub alpha_sigma_sq: f64,
    /// History weight `beta`; zero recovers the vanilla fixed batch.
    pub beta: f64,
    pub eps: f64,
    /// Epoch length (iterations between anchors).
    pub m: usize,
    /// Inner trajectory batch B.
    pub batch: usize,
    pub eta: f64,
    /// Cap on the adaptive anchor batch.
    pub n_max: usize,
    pub grad_kind: GradKind,
    #[serde(default)]
    pub baseline: Baseline,
    /// Total iterations K (anchors included).
    pub max_iters: usize,
    /// Attach metrics to every record whose iteration index is a multiple
    /// of this cadence (1 = every iteration).
    #[serde(default = "default_metric_every")]
    pub metric_every: usize,
    #[serde(default)]
    pub stop_grad_norm_sq: Option<f64>,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub smoothness: Option<RlSmoothness>,
}

fn default_metric_every() -> usize {
    1
}

impl RlAbaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha_sigma_sq.is_finite() && self.alpha_sigma_sq > 0.0) {
            return Err(ConfigError::NotPositive {
                name: "alpha_sigma_sq",
                value: self.alpha_sigma_sq,
            });
        }
        if !(self.beta >= 0.0) {
            return Err(ConfigError::Negative {
                name: "beta",
                value: self.beta,
            });
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(ConfigError::NotPositive {
                name: "eps",
                value: self.eps,
            });
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(ConfigError::NotPositive {
                name: "eta",
                value: self.eta,
            });
        }
        for (name, v) in [
            ("m", self.m),
            ("batch", self.batch),
            ("n_max", self.n_max),
            ("max_iters", self.max_iters),
            ("metric_every", self.metric_every),
        ] {
            if v == 0 {
                return Err(ConfigError::ZeroSize { name, value: v });
            }
        }
        Ok(())
    }
}

/// Anchor batch from the last `m` squared direction norms (zero-padded
/// before the run starts):
/// `N = ceil(alpha sigma^2 / ((beta/m) sum(history) + eps))`, clamped to
/// `[1, n_max]`.
pub fn rl_adaptive_batch_size(history: &[f64], cfg: &RlAbaConfig) -> usize {
    assert_eq!(
        history.len(),
        cfg.m,
        "rl batch rule: history must hold exactly m entries"
    );
    let sum: f64 = history.iter().sum();
    let denom = (cfg.beta / cfg.m as f64) * sum + cfg.eps;
    let raw = cfg.alpha_sigma_sq / denom;
    if !raw.is_finite() {
        return cfg.n_max;
    }
    let c = raw.ceil();
    if c <= 1.0 {
        1
    } else if c >= cfg.n_max as f64 {
        cfg.n_max
    } else {
        c as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha_sigma_sq: f64, beta: f64, m: usize, eps: f64, n_max: usize) -> RlAbaConfig {
        RlAbaConfig {
            alpha_sigma_sq,
            beta,
            eps,
            m,
            batch: 4,
            eta: 0.1,
            n_max,
            grad_kind: GradKind::Gpomdp,
            baseline: Baseline::None,
            max_iters: 10,
            metric_every: 1,
            stop_grad_norm_sq: None,
            output_mode: OutputMode::Last,
            smoothness: None,
        }
    }

    #[test]
    fn first_epoch_uses_the_cap() {
        // all-zero history, alpha sigma^2 = 1, eps = 0.01, cap 100 -> 100
        let c = cfg(1.0, 1000.0, 10, 0.01, 100);
        assert_eq!(rl_adaptive_batch_size(&[0.0; 10], &c), 100);
    }

    #[test]
    fn rule_direct_formula() {
        // 48 / ((6/2)*2 + 0.01) = 48/6.01 -> ceil = 8
        let c = cfg(48.0, 6.0, 2, 0.01, 1000);
        assert_eq!(rl_adaptive_batch_size(&[1.0, 1.0], &c), 8);
    }

    #[test]
    fn beta_zero_recovers_vanilla_batch() {
        let c = cfg(1.0, 0.0, 3, 0.01, 1000);
        assert_eq!(rl_adaptive_batch_size(&[5.0, 9.0, 2.0], &c), 100);
    }

    #[test]
    fn rule_clamps_to_bounds() {
        let c = cfg(1.0, 1.0, 2, 0.01, 50);
        assert_eq!(rl_adaptive_batch_size(&[0.0, 0.0], &c), 50);
        assert_eq!(rl_adaptive_batch_size(&[1e12, 1e12], &c), 1);
    }

    #[test]
    #[should_panic(expected = "exactly m entries")]
    fn short_history_is_rejected() {
        let c = cfg(1.0, 1.0, 4, 0.01, 10);
        rl_adaptive_batch_size(&[0.0; 3], &c);
    }

    #[test]
    fn discounted_reward_of_zero_rewards_is_zero() {
        let traj: Trajectory<usize, usize> = Trajectory {
            steps: (0..5)
                .map(|t| TrajStep {
                    state: t,
                    action: 0,
                    reward: 0.0,
                    log_prob: -0.5,
                })
                .collect(),
        };
        assert_eq!(traj.total_discounted_reward(0.9), 0.0);
    }
}
