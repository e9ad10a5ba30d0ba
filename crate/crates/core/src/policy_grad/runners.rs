//! Epoch loops for adaptive-batch variance-reduced policy gradient.
//!
//! Anchor iterations draw `N` fresh trajectories (with `N` from the
//! history rule) and average their gradients; inner iterations draw `B`
//! trajectories and correct the running direction with importance-weighted
//! gradients at the reference parameters. Rollouts use per-trajectory
//! sub-streams keyed by `(run seed, iteration, rollout index)`, so results
//! are independent of rollout execution order.

use std::time::Instant;

use super::{
    importance_weight, rl_adaptive_batch_size, sample_trajectory, trajectory_grad, Env, Policy,
    RlAbaConfig,
};
use crate::sampling::SeededRng;
use crate::vr_optim::{RunTrace, SfoCounter, SfoMode, TraceRecord, UniformReservoir};

/// Metric callback evaluated at `theta`, returning `(J, ||grad J||^2)`.
/// For enumerable MDPs this is the exact oracle; metric work is never
/// charged to the trajectory counter.
pub type RlMetricFn<'a> = &'a dyn Fn(&[f64]) -> (f64, f64);

const TAG_ROLLOUT: u64 = 0x7261;

#[derive(Clone, Copy, PartialEq)]
enum VrKind {
    /// Correction against the epoch snapshot.
    Svrpg,
    /// Recursive correction against the immediately preceding iterate.
    SpiderPg,
}

/// Adaptive-batch SVRPG (gradient ascent on `J`).
pub fn run_abasvrpg<E, P>(
    env: &E,
    policy: &P,
    cfg: &RlAbaConfig,
    theta0: &[f64],
    rng: &SeededRng,
    metric: Option<RlMetricFn>,
) -> RunTrace
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    run_rl(env, policy, cfg, VrKind::Svrpg, theta0, rng, metric)
}

/// Adaptive-batch SPIDER policy gradient.
pub fn run_abaspiderpg<E, P>(
    env: &E,
    policy: &P,
    cfg: &RlAbaConfig,
    theta0: &[f64],
    rng: &SeededRng,
    metric: Option<RlMetricFn>,
) -> RunTrace
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    run_rl(env, policy, cfg, VrKind::SpiderPg, theta0, rng, metric)
}

fn run_rl<E, P>(
    env: &E,
    policy: &P,
    cfg: &RlAbaConfig,
    kind: VrKind,
    theta0: &[f64],
    rng: &SeededRng,
    metric: Option<RlMetricFn>,
) -> RunTrace
where
    E: Env,
    P: Policy<E::State, E::Action>,
{
    cfg.validate().expect("invalid RlAbaConfig");
    assert_eq!(theta0.len(), policy.dim(), "theta0 dimension mismatch");
    let t0 = Instant::now();
    let d = policy.dim();
    let gamma = env.discount();

    let mut theta = theta0.to_vec();
    let mut history = vec![0.0; cfg.m];
    let mut counter = SfoCounter::new(SfoMode::Samples);
    let mut reservoir = UniformReservoir::new(rng);
    let mut records: Vec<TraceRecord> = Vec::new();
    let initial_value = metric.map_or(f64::NAN, |f| f(theta0).0);

    let mut ref_theta = theta0.to_vec();
    let mut ref_v = vec![0.0; d];
    let mut diverged = false;

    for k in 0..cfg.max_iters {
        let anchor = k % cfg.m == 0;
        let (v, batch_size) = if anchor {
            let n = rl_adaptive_batch_size(&history, cfg);
            let mut acc = vec![0.0; d];
            for j in 0..n {
                let mut traj_rng = rng.substream(&[TAG_ROLLOUT, k as u64, j as u64]);
                let traj = sample_trajectory(env, policy, &theta, &mut traj_rng);
                let g = trajectory_grad(cfg.grad_kind, &traj, policy, &theta, &cfg.baseline, gamma);
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += gi;
                }
            }
            let inv = 1.0 / n as f64;
            for a in acc.iter_mut() {
                *a *= inv;
            }
            counter.anchor(n);
            if kind == VrKind::Svrpg {
                ref_theta.copy_from_slice(&theta);
                ref_v.copy_from_slice(&acc);
            }
            (acc, n)
        } else {
            let mut acc = vec![0.0; d];
            for j in 0..cfg.batch {
                let mut traj_rng = rng.substream(&[TAG_ROLLOUT, k as u64, j as u64]);
                let traj = sample_trajectory(env, policy, &theta, &mut traj_rng);
                let g_cur =
                    trajectory_grad(cfg.grad_kind, &traj, policy, &theta, &cfg.baseline, gamma);
                let g_ref =
                    trajectory_grad(cfg.grad_kind, &traj, policy, &ref_theta, &cfg.baseline, gamma);
                let w = importance_weight(&traj, policy, &theta, &ref_theta);
                for ((a, gc), gr) in acc.iter_mut().zip(&g_cur).zip(&g_ref) {
                    *a += gc - w * gr;
                }
            }
            let inv = 1.0 / cfg.batch as f64;
            for (a, r) in acc.iter_mut().zip(&ref_v) {
                *a = *a * inv + r;
            }
            counter.single_eval(cfg.batch);
            (acc, cfg.batch)
        };

        reservoir.observe(&theta);
        if kind == VrKind::SpiderPg {
            ref_theta.copy_from_slice(&theta);
            ref_v.copy_from_slice(&v);
        }
        for (ti, vi) in theta.iter_mut().zip(&v) {
            *ti += cfg.eta * vi;
        }
        history.remove(0);
        history.push(v.iter().map(|x| x * x).sum());

        let iter = (k + 1) as u64;
        let want_metrics = metric.is_some()
            && (iter % cfg.metric_every as u64 == 0 || k + 1 == cfg.max_iters);
        let metrics = want_metrics.then(|| metric.unwrap()(&theta));
        records.push(TraceRecord {
            iter,
            epoch: (k / cfg.m + 1) as u64,
            sfo: counter.total(),
            loss: metrics.map(|m| m.0),
            grad_norm_sq: metrics.map(|m| m.1),
            batch_size,
            boundary: anchor,
        });

        if theta.iter().any(|t| !t.is_finite()) {
            diverged = true;
            break;
        }
        if let (Some(tgt), Some((_, g2))) = (cfg.stop_grad_norm_sq, metrics) {
            if g2 <= tgt {
                break;
            }
        }
    }

    let uniform = reservoir.into_candidate(&theta);
    RunTrace {
        records,
        initial_value,
        final_iterate: theta,
        uniform_iterate: uniform,
        output_mode: cfg.output_mode,
        diverged,
        wall_time_s: t0.elapsed().as_secs_f64(),
    }
}
