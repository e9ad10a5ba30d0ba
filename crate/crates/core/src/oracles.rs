//! Independent verification machinery: finite differences, Monte-Carlo
//! statistics, enumeration cross-checks, and convergence-envelope checkers.
//!
//! Every check consumes an explicit seed, emits a serializable
//! [`CheckReport`], and is deterministic given that seed. Each statistical
//! check has a negative control exercised in the tests: a configuration
//! that violates the property must fail the check.

use serde::Serialize;
use thiserror::Error;

use crate::objectives::{batch_grad_into, norm_sq, FiniteSumObjective};
use crate::policy_grad::{
    exact_policy_gradient, importance_weight, sample_trajectory, trajectory_grad, Baseline, Env,
    GradKind, Mdp, Policy, TabularSoftmaxPolicy,
};
use crate::sampling::{sample_with_replacement, SeededRng};
use crate::vr_optim::RunTrace;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("trace lacks epoch-boundary metrics")]
    NoBoundaryMetrics,
    #[error("trace `{which}` never reached grad-norm^2 target {target}")]
    TargetNotReached { which: String, target: f64 },
}

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub sample_size: u64,
    pub seed: u64,
}

impl CheckReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("check report serializes")
    }
}

/// Central-difference gradient validation.
///
/// Reports the maximum over coordinates of
/// `|analytic_i - central_i| / (1 + |analytic_i|)`; passes when it stays
/// below `tol`.
pub fn finite_diff_check<V, G>(
    name: &str,
    value_fn: V,
    grad_fn: G,
    x: &[f64],
    step: f64,
    tol: f64,
) -> CheckReport
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(step > 0.0, "finite differences need a positive step");
    let analytic = grad_fn(x);
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        let mut plus = x.to_vec();
        plus[j] += step;
        let mut minus = x.to_vec();
        minus[j] -= step;
        let central = (value_fn(&plus) - value_fn(&minus)) / (2.0 * step);
        let rel = (analytic[j] - central).abs() / (1.0 + analytic[j].abs());
        worst = worst.max(rel);
    }
    CheckReport {
        name: name.to_string(),
        pass: worst < tol,
        measured: worst,
        tolerance: tol,
        sample_size: x.len() as u64,
        seed: 0,
    }
}

/// Conventional step for central differences around `x`.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-6 * (1.0 + norm_sq(x).sqrt())
}

/// Sample-mean variance identity: for i.i.d. with-replacement draws the
/// variance of a size-`n_batch` gradient mean is `sigma^2 / n_batch`, with
/// `sigma^2` the exhaustive component-gradient variance at `x`. Passes when
/// the empirical/expected ratio lies in `[0.8, 1.2]`.
pub fn sample_mean_variance_check<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    n_batch: usize,
    reps: usize,
    seed: u64,
) -> CheckReport {
    assert!(reps >= 1000, "variance estimate needs at least 1e3 redraws");
    let ratio = batch_mean_variance_ratio(obj, x, n_batch, reps, seed, true);
    CheckReport {
        name: format!("sample-mean-variance N={n_batch}"),
        pass: (0.8..=1.2).contains(&ratio),
        measured: ratio,
        tolerance: 0.2,
        sample_size: reps as u64,
        seed,
    }
}

/// Ratio of the empirical batch-mean variance to `sigma_hat^2 / N`.
/// `with_replacement = false` is the deliberate negative control: subset
/// draws violate the i.i.d. identity (exhausting the population drives the
/// variance to zero).
pub fn batch_mean_variance_ratio<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    n_batch: usize,
    reps: usize,
    seed: u64,
    with_replacement: bool,
) -> f64 {
    let n = obj.num_components();
    let d = obj.dim();
    let full = obj.full_grad(x);
    let mut sigma_sq = 0.0;
    let mut g = vec![0.0; d];
    for i in 0..n {
        g.fill(0.0);
        obj.component_grad_into(x, i, &mut g);
        sigma_sq += g
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    sigma_sq /= n as f64;

    let mut rng = SeededRng::new(seed).substream(&[0xa11ce]);
    let mut scratch = vec![0.0; d];
    let mut mean = vec![0.0; d];
    let mut emp = 0.0;
    for _ in 0..reps {
        let idx = if with_replacement {
            sample_with_replacement(n, n_batch, &mut rng)
        } else {
            crate::sampling::sample_without_replacement(n, n_batch.min(n), &mut rng)
        };
        batch_grad_into(obj, x, &idx, &mut mean, &mut scratch);
        emp += mean
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    emp /= reps as f64;
    emp / (sigma_sq / n_batch as f64)
}

/// Log-log regression slope of the empirical batch-mean variance against
/// the batch size; the i.i.d. identity predicts slope -1.
pub fn variance_slope_check<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    batch_sizes: &[usize],
    reps: usize,
    seed: u64,
) -> CheckReport {
    assert!(batch_sizes.len() >= 2);
    let pts: Vec<(f64, f64)> = batch_sizes
        .iter()
        .map(|&nb| {
            let ratio = batch_mean_variance_ratio(obj, x, nb, reps, seed ^ nb as u64, true);
            // ratio * sigma^2 / N; sigma^2 is a common constant so the slope
            // of log(ratio / N) equals the slope of the raw variance.
            ((nb as f64).ln(), (ratio / nb as f64).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    CheckReport {
        name: "variance-vs-batch log-log slope".to_string(),
        pass: (slope + 1.0).abs() <= 0.1,
        measured: slope,
        tolerance: 0.1,
        sample_size: (reps * batch_sizes.len()) as u64,
        seed,
    }
}

/// Linear-rate envelope under gradient dominance.
///
/// Requires every epoch boundary `s` of the trace to satisfy
/// `f(x_s) - f* <= gamma_hat^(s m) (f(x_0) - f*) + eps` (the theorem's
/// `eps/2` slack doubled for single-run noise), and fails diverged runs
/// outright. `measured` is the worst epoch's `(gap - eps) / envelope`.
pub fn pl_rate_check(
    trace: &RunTrace,
    f_star: f64,
    gamma_hat: f64,
    m: usize,
    eps: f64,
) -> Result<CheckReport, OracleError> {
    let metrics = trace.epoch_metrics();
    if metrics.is_empty() {
        return Err(OracleError::NoBoundaryMetrics);
    }
    let gap0 = (trace.initial_value - f_star).max(1e-300);
    let mut worst = f64::NEG_INFINITY;
    for &(epoch, loss, _) in &metrics {
        let gap = loss - f_star;
        let envelope = gamma_hat.powf((epoch * m as u64) as f64) * gap0;
        let score = (gap - eps) / envelope;
        worst = worst.max(score);
    }
    Ok(CheckReport {
        name: format!("pl-linear-rate gamma_hat={gamma_hat:.6}"),
        pass: !trace.diverged && worst <= 1.0,
        measured: worst,
        tolerance: 1.0,
        sample_size: metrics.len() as u64,
        seed: 0,
    })
}

/// Cost-at-accuracy ordering between an adaptive run and its fixed-batch
/// counterpart: passes when the adaptive variant spends at most 0.9x the
/// oracle calls to first reach the grad-norm^2 target.
pub fn sfo_ordering_check(
    name: &str,
    adaptive: &RunTrace,
    fixed: &RunTrace,
    target: f64,
) -> Result<CheckReport, OracleError> {
    let a = adaptive
        .sfo_at_target(target)
        .ok_or_else(|| OracleError::TargetNotReached {
            which: format!("{name}/adaptive"),
            target,
        })?;
    let f = fixed
        .sfo_at_target(target)
        .ok_or_else(|| OracleError::TargetNotReached {
            which: format!("{name}/fixed"),
            target,
        })?;
    let ratio = a as f64 / f as f64;
    Ok(CheckReport {
        name: format!("sfo-ordering {name}"),
        pass: ratio <= 0.9,
        measured: ratio,
        tolerance: 0.9,
        sample_size: 2,
        seed: 0,
    })
}

/// Monte-Carlo unbiasedness of a trajectory-gradient construction against
/// the enumeration oracle.
///
/// The sample mean over `n` rollouts must sit within three standard errors
/// of the exact gradient; at `n >= 1e5` the relative error must also stay
/// below 1%. If the exact gradient is negligible at `theta`, the check
/// re-seeds `theta` with small perturbations until it is informative.
pub fn rl_unbiasedness_check(
    mdp: &Mdp,
    policy: &TabularSoftmaxPolicy,
    theta: &[f64],
    kind: GradKind,
    n: usize,
    seed: u64,
) -> CheckReport {
    use rand::Rng;
    let mut theta = theta.to_vec();
    let mut reseed = SeededRng::new(seed).substream(&[0x7e5eed]);
    let mut exact = exact_policy_gradient(mdp, policy, &theta).expect("enumerable MDP");
    while norm_sq(&exact).sqrt() < 1e-10 {
        for t in theta.iter_mut() {
            *t += 0.3 * (reseed.random::<f64>() - 0.5);
        }
        exact = exact_policy_gradient(mdp, policy, &theta).expect("enumerable MDP");
    }
    let exact_norm = norm_sq(&exact).sqrt();

    let d = policy.dim();
    let gamma = Env::discount(mdp);
    let rng = SeededRng::new(seed);
    let mut mean = vec![0.0; d];
    let mut second_moment = 0.0;
    for j in 0..n {
        let mut traj_rng = rng.substream(&[0x913b, j as u64]);
        let traj = sample_trajectory(mdp, policy, &theta, &mut traj_rng);
        let g = trajectory_grad(kind, &traj, policy, &theta, &Baseline::None, gamma);
        second_moment += norm_sq(&g);
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    second_moment /= n as f64;
    let single_var = (second_moment - norm_sq(&mean)).max(0.0);
    let std_error = (single_var / n as f64).sqrt();

    let err: f64 = mean
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let rel = err / exact_norm;
    let mc_tol = 3.0 * std_error / exact_norm;
    let pass = rel <= mc_tol && (n < 100_000 || rel <= 0.01);
    CheckReport {
        name: format!("rl-unbiasedness {kind:?} N={n}"),
        pass,
        measured: rel,
        tolerance: if n >= 100_000 { mc_tol.min(0.01) } else { mc_tol },
        sample_size: n as u64,
        seed,
    }
}

/// Empirical `E[omega] = 1` within three standard errors.
pub fn omega_expectation_check<E, P>(
    env: &E,
    policy: &P,
    theta_sample: &[f64],
    theta_target: &[f64],
    n: usize,
    seed: u64,
) -> CheckReport
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    let rng = SeededRng::new(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for j in 0..n {
        let mut traj_rng = rng.substream(&[0x03e6a, j as u64]);
        let traj = sample_trajectory(env, policy, theta_sample, &mut traj_rng);
        let w = importance_weight(&traj, policy, theta_sample, theta_target);
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let std_error = (var / n as f64).sqrt();
    let tol = 3.0 * std_error + 1e-12;
    CheckReport {
        name: "omega-expectation".to_string(),
        pass: (mean - 1.0).abs() <= tol,
        measured: mean,
        tolerance: tol,
        sample_size: n as u64,
        seed,
    }
}

/// Empirical `Var(omega)` at parameter offsets of increasing norm; passes
/// when the variance is zero at offset zero and strictly increases.
pub fn omega_variance_monotonicity_check<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    direction: &[f64],
    magnitudes: &[f64],
    n: usize,
    seed: u64,
) -> CheckReport
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    assert!(magnitudes.len() >= 2);
    let dir_norm = norm_sq(direction).sqrt();
    let rng = SeededRng::new(seed);
    let mut variances = Vec::with_capacity(magnitudes.len());
    for (mi, &mag) in magnitudes.iter().enumerate() {
        let target: Vec<f64> = theta
            .iter()
            .zip(direction)
            .map(|(t, u)| t + mag * u / dir_norm)
            .collect();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for j in 0..n {
            let mut traj_rng = rng.substream(&[0x1f0a, mi as u64, j as u64]);
            let traj = sample_trajectory(env, policy, theta, &mut traj_rng);
            let w = importance_weight(&traj, policy, theta, &target);
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / n as f64;
        variances.push((sum_sq / n as f64 - mean * mean).max(0.0));
    }
    let zero_at_zero = magnitudes
        .iter()
        .zip(&variances)
        .filter(|(m, _)| **m == 0.0)
        .all(|(_, v)| *v == 0.0);
    let monotone = variances.windows(2).all(|w| w[0] < w[1]);
    CheckReport {
        name: "omega-variance-monotonicity".to_string(),
        pass: zero_at_zero && monotone,
        measured: *variances.last().unwrap(),
        tolerance: 0.0,
        sample_size: (n * magnitudes.len()) as u64,
        seed,
    }
}
