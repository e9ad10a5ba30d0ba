//! Run loops for the epoch-structured variance-reduced algorithms, the
//! adaptive SGD, and the baseline family.
//!
//! Every run is single-threaded and fully determined by
//! `(seed, config, objective, x0)`. Metric evaluations (objective value and
//! full gradient norm at epoch boundaries) are excluded from oracle counts.

use std::time::Instant;

use super::trace::{RunTrace, SfoCounter, TraceRecord, UniformReservoir};
use super::{
    abasgd_batch_size, fixed_anchor_size, AbaConfig, AbaSgdConfig, BatchSchedule, EpochState,
};
use crate::objectives::{batch_grad_into, FiniteSumObjective};
use crate::sampling::{sample_with_replacement, sample_without_replacement, SeededRng};

/// Baselines sharing the trace schema with the adaptive runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineAlgo {
    /// Mini-batch SGD with a fixed batch.
    Sgd,
    /// SGD with linearly increasing batch `c_b * (t + 1)`.
    Hsgd { c_b: f64 },
    /// SVRG with the fixed anchor `min(n, ceil(c_eps sigma^2 / eps))`.
    SvrgFixed,
    /// SpiderBoost with the same fixed anchor.
    SpiderBoostFixed,
    /// SpiderBoost with anchor schedule `N_s = mu^s`.
    SpiderExp { mu: f64 },
    /// SpiderBoost with anchor schedule `N_s = nu (s + 1)`.
    SpiderLin { nu: f64 },
}

/// SVRG direction `grad_B(x) - grad_B(snapshot) + anchor`.
///
/// With `x` equal to the snapshot the batch terms cancel bitwise and the
/// anchor is returned exactly.
pub fn svrg_inner_direction<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    state: &EpochState,
    batch: &[usize],
) -> Vec<f64> {
    assert!(!batch.is_empty(), "svrg direction: empty batch");
    let d = obj.dim();
    let mut scratch = vec![0.0; d];
    let mut at_x = vec![0.0; d];
    batch_grad_into(obj, x, batch, &mut at_x, &mut scratch);
    let mut at_snap = vec![0.0; d];
    batch_grad_into(obj, &state.snapshot, batch, &mut at_snap, &mut scratch);
    for ((v, s), a) in at_x.iter_mut().zip(&at_snap).zip(&state.anchor) {
        *v = *v - s + a;
    }
    at_x
}

/// SPIDER recursion `grad_B(x_t) - grad_B(x_prev) + v_prev`.
pub fn spider_inner_direction<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x_t: &[f64],
    x_prev: &[f64],
    v_prev: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    assert!(!batch.is_empty(), "spider direction: empty batch");
    let d = obj.dim();
    let mut scratch = vec![0.0; d];
    let mut at_x = vec![0.0; d];
    batch_grad_into(obj, x_t, batch, &mut at_x, &mut scratch);
    let mut at_prev = vec![0.0; d];
    batch_grad_into(obj, x_prev, batch, &mut at_prev, &mut scratch);
    for ((v, p), w) in at_x.iter_mut().zip(&at_prev).zip(v_prev) {
        *v = *v - p + w;
    }
    at_x
}

/// Adaptive-batch SVRG.
pub fn run_abasvrg<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    run_svrg_schedule(obj, cfg, BatchSchedule::Adaptive, x0, rng)
}

/// Adaptive-batch SpiderBoost.
pub fn run_abaspider<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    run_spider_schedule(obj, cfg, BatchSchedule::Adaptive, x0, rng)
}

/// Baseline dispatcher; traces are schema-identical to the adaptive runs so
/// cost-versus-loss curves compare directly.
pub fn run_baseline<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    algo: BaselineAlgo,
    cfg: &AbaConfig,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    let n = obj.num_components();
    match algo {
        BaselineAlgo::Sgd => run_sgd_family(obj, cfg, SgdFlavor::Fixed(cfg.batch), x0, rng),
        BaselineAlgo::Hsgd { c_b } => run_sgd_family(obj, cfg, SgdFlavor::Hsgd { c_b }, x0, rng),
        BaselineAlgo::SvrgFixed => {
            let size = fixed_anchor_size(cfg, n);
            run_svrg_schedule(obj, cfg, BatchSchedule::Fixed { size }, x0, rng)
        }
        BaselineAlgo::SpiderBoostFixed => {
            let size = fixed_anchor_size(cfg, n);
            run_spider_schedule(obj, cfg, BatchSchedule::Fixed { size }, x0, rng)
        }
        BaselineAlgo::SpiderExp { mu } => {
            run_spider_schedule(obj, cfg, BatchSchedule::Exponential { mu }, x0, rng)
        }
        BaselineAlgo::SpiderLin { nu } => {
            run_spider_schedule(obj, cfg, BatchSchedule::Linear { nu }, x0, rng)
        }
    }
}

struct RunCtx<'a, O: FiniteSumObjective + ?Sized> {
    obj: &'a O,
    records: Vec<TraceRecord>,
    counter: SfoCounter,
    reservoir: UniformReservoir,
    iter: u64,
    guard: f64,
    diverged: bool,
}

impl<'a, O: FiniteSumObjective + ?Sized> RunCtx<'a, O> {
    fn new(obj: &'a O, cfg_sfo: super::SfoMode, x0: &[f64], rng: &SeededRng) -> (Self, f64) {
        let initial_value = obj.value(x0);
        let ctx = Self {
            obj,
            records: Vec::new(),
            counter: SfoCounter::new(cfg_sfo),
            reservoir: UniformReservoir::new(rng),
            iter: 0,
            guard: 1e3 * (1.0 + initial_value.abs()),
            diverged: false,
        };
        (ctx, initial_value)
    }

    fn metrics(&self, x: &[f64]) -> (f64, f64) {
        let loss = self.obj.value(x);
        let g = self.obj.full_grad(x);
        (loss, g.iter().map(|v| v * v).sum())
    }

    fn push(
        &mut self,
        epoch: u64,
        batch_size: usize,
        metrics: Option<(f64, f64)>,
        boundary: bool,
    ) {
        self.records.push(TraceRecord {
            iter: self.iter,
            epoch,
            sfo: self.counter.total(),
            loss: metrics.map(|m| m.0),
            grad_norm_sq: metrics.map(|m| m.1),
            batch_size,
            boundary,
        });
    }

    /// Divergence guard: non-finite value or growth by 1000x aborts the run.
    fn check_divergence(&mut self, loss: f64) -> bool {
        if !loss.is_finite() || loss > self.guard {
            self.diverged = true;
        }
        self.diverged
    }

    fn finish(self, x: Vec<f64>, initial_value: f64, cfg_out: super::OutputMode, t0: Instant) -> RunTrace {
        let uniform = self.reservoir.into_candidate(&x);
        RunTrace {
            records: self.records,
            initial_value,
            final_iterate: x,
            uniform_iterate: uniform,
            output_mode: cfg_out,
            diverged: self.diverged,
            wall_time_s: t0.elapsed().as_secs_f64(),
        }
    }
}

fn anchor_indices(n: usize, size: usize, rng: &mut SeededRng) -> Vec<usize> {
    if size >= n {
        (0..n).collect()
    } else {
        sample_without_replacement(n, size, rng)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn run_svrg_schedule<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    schedule: BatchSchedule,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    cfg.validate().expect("invalid AbaConfig");
    assert_eq!(x0.len(), obj.dim(), "x0 dimension mismatch");
    let t0 = Instant::now();
    let n = obj.num_components();
    let (mut ctx, initial_value) = RunCtx::new(obj, cfg.sfo_mode, x0, rng);

    let mut x = x0.to_vec();
    let mut snapshot = x0.to_vec();
    let mut beta_s = cfg.beta_init;

    'epochs: for s in 1..=cfg.max_epochs {
        let anchor_size = schedule.anchor_size(s, beta_s, cfg, n);
        let idx = anchor_indices(n, anchor_size, rng);
        let mut anchor = vec![0.0; obj.dim()];
        let mut scratch = vec![0.0; obj.dim()];
        batch_grad_into(obj, &snapshot, &idx, &mut anchor, &mut scratch);
        ctx.counter.anchor(anchor_size);

        let mut state = EpochState::new(snapshot.clone(), anchor, s);
        for _t in 1..=cfg.m {
            ctx.reservoir.observe(&x);
            let batch = sample_with_replacement(n, cfg.batch, rng);
            let v = svrg_inner_direction(obj, &x, &state, &batch);
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi -= cfg.eta * vi;
            }
            state.accumulate(norm_sq(&v), cfg.m);
            ctx.counter.inner(cfg.batch);
            ctx.iter += 1;
            let metrics = cfg.metric_every_iter.then(|| ctx.metrics(&x));
            ctx.push(s as u64, cfg.batch, metrics, false);
        }

        snapshot.copy_from_slice(&x);
        beta_s = state.beta_next_accum;

        let (loss, grad_sq) = ctx.metrics(&snapshot);
        ctx.push(s as u64, anchor_size, Some((loss, grad_sq)), true);
        if ctx.check_divergence(loss) {
            break 'epochs;
        }
        if cfg.stop_grad_norm_sq.is_some_and(|tgt| grad_sq <= tgt) {
            break 'epochs;
        }
    }

    ctx.finish(x, initial_value, cfg.output_mode, t0)
}

fn run_spider_schedule<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    schedule: BatchSchedule,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    cfg.validate().expect("invalid AbaConfig");
    assert_eq!(x0.len(), obj.dim(), "x0 dimension mismatch");
    let t0 = Instant::now();
    let n = obj.num_components();
    let (mut ctx, initial_value) = RunCtx::new(obj, cfg.sfo_mode, x0, rng);

    let mut x = x0.to_vec();
    let mut snapshot = x0.to_vec();
    let mut beta_s = cfg.beta_init;

    'epochs: for s in 1..=cfg.max_epochs {
        let anchor_size = schedule.anchor_size(s, beta_s, cfg, n);
        let idx = anchor_indices(n, anchor_size, rng);
        let mut v = vec![0.0; obj.dim()];
        let mut scratch = vec![0.0; obj.dim()];
        batch_grad_into(obj, &snapshot, &idx, &mut v, &mut scratch);
        ctx.counter.anchor(anchor_size);

        // The anchor direction immediately takes a step; its norm seeds the
        // next epoch's history statistic.
        let mut accum = EpochState::new(snapshot.clone(), v.clone(), s);
        accum.accumulate(norm_sq(&v), cfg.m);
        ctx.reservoir.observe(&x);
        let mut x_prev = x.clone();
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi -= cfg.eta * vi;
        }
        ctx.iter += 1;
        let metrics = cfg.metric_every_iter.then(|| ctx.metrics(&x));
        ctx.push(s as u64, anchor_size, metrics, false);

        for _t in 1..cfg.m {
            ctx.reservoir.observe(&x);
            let batch = sample_with_replacement(n, cfg.batch, rng);
            let v_next = spider_inner_direction(obj, &x, &x_prev, &v, &batch);
            x_prev.copy_from_slice(&x);
            for (xi, vi) in x.iter_mut().zip(&v_next) {
                *xi -= cfg.eta * vi;
            }
            v = v_next;
            accum.accumulate(norm_sq(&v), cfg.m);
            ctx.counter.inner(cfg.batch);
            ctx.iter += 1;
            let metrics = cfg.metric_every_iter.then(|| ctx.metrics(&x));
            ctx.push(s as u64, cfg.batch, metrics, false);
        }

        snapshot.copy_from_slice(&x);
        beta_s = accum.beta_next_accum;

        let (loss, grad_sq) = ctx.metrics(&snapshot);
        ctx.push(s as u64, anchor_size, Some((loss, grad_sq)), true);
        if ctx.check_divergence(loss) {
            break 'epochs;
        }
        if cfg.stop_grad_norm_sq.is_some_and(|tgt| grad_sq <= tgt) {
            break 'epochs;
        }
    }

    ctx.finish(x, initial_value, cfg.output_mode, t0)
}

enum SgdFlavor {
    Fixed(usize),
    Hsgd { c_b: f64 },
    Adaptive { window: Vec<f64> },
}

/// Adaptive-batch SGD: per-iteration batch from the preceding window of
/// direction norms; an exact gradient whenever the rule saturates at `n`.
pub fn run_abasgd<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaSgdConfig,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    cfg.validate().expect("invalid AbaSgdConfig");
    let proxy = AbaConfig {
        c_beta: 2.0,
        c_eps: 24.0,
        eps: cfg.eps,
        sigma_sq: cfg.sigma_sq,
        beta_init: 0.0,
        m: cfg.window,
        batch: 1,
        eta: cfg.eta,
        max_epochs: cfg.max_iters.div_ceil(cfg.window),
        output_mode: cfg.output_mode,
        sfo_mode: cfg.sfo_mode,
        metric_every_iter: false,
        stop_grad_norm_sq: cfg.stop_grad_norm_sq,
    };
    let window = vec![cfg.alpha0 * cfg.alpha0; cfg.window];
    run_sgd_family_iters(obj, &proxy, SgdFlavor::Adaptive { window }, cfg.max_iters, x0, rng)
}

fn run_sgd_family<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    flavor: SgdFlavor,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    let iters = cfg.max_epochs * cfg.m;
    run_sgd_family_iters(obj, cfg, flavor, iters, x0, rng)
}

fn run_sgd_family_iters<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    cfg: &AbaConfig,
    mut flavor: SgdFlavor,
    iters: usize,
    x0: &[f64],
    rng: &mut SeededRng,
) -> RunTrace {
    cfg.validate().expect("invalid AbaConfig");
    assert_eq!(x0.len(), obj.dim(), "x0 dimension mismatch");
    let t0 = Instant::now();
    let n = obj.num_components();
    let (mut ctx, initial_value) = RunCtx::new(obj, cfg.sfo_mode, x0, rng);
    let cadence = cfg.m;

    let mut x = x0.to_vec();
    let mut grad = vec![0.0; obj.dim()];
    let mut scratch = vec![0.0; obj.dim()];

    for t in 0..iters {
        let b_t = match &flavor {
            SgdFlavor::Fixed(b) => (*b).clamp(1, n),
            SgdFlavor::Hsgd { c_b } => {
                let raw = (c_b * (t as f64 + 1.0)).ceil();
                (raw.max(1.0) as usize).min(n)
            }
            SgdFlavor::Adaptive { window } => {
                abasgd_batch_size(window, cfg.sigma_sq, cfg.eps, n)
            }
        };
        ctx.reservoir.observe(&x);
        if b_t >= n {
            obj.full_grad_into(&x, &mut grad);
            ctx.counter.anchor(n);
        } else {
            let idx = sample_with_replacement(n, b_t, rng);
            batch_grad_into(obj, &x, &idx, &mut grad, &mut scratch);
            ctx.counter.single_eval(b_t);
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= cfg.eta * gi;
        }
        if let SgdFlavor::Adaptive { window } = &mut flavor {
            window.remove(0);
            window.push(norm_sq(&grad));
        }
        ctx.iter += 1;

        let at_boundary = (t + 1) % cadence == 0 || t + 1 == iters;
        let epoch = (t / cadence + 1) as u64;
        if at_boundary {
            let (loss, grad_sq) = ctx.metrics(&x);
            ctx.push(epoch, b_t, Some((loss, grad_sq)), true);
            if ctx.check_divergence(loss) {
                break;
            }
            if cfg.stop_grad_norm_sq.is_some_and(|tgt| grad_sq <= tgt) {
                break;
            }
        } else {
            let metrics = cfg.metric_every_iter.then(|| ctx.metrics(&x));
            ctx.push(epoch, b_t, metrics, false);
        }
    }

    ctx.finish(x, initial_value, cfg.output_mode, t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{batch_grad, NonconvexLogReg, SyntheticPl};
    use crate::vr_optim::{OutputMode, SfoMode};

    fn small_cfg() -> AbaConfig {
        AbaConfig {
            c_beta: 16.0,
            c_eps: 16.0,
            eps: 1e-3,
            sigma_sq: 1.0,
            beta_init: AbaConfig::beta_init_general(1e-3, 8),
            m: 5,
            batch: 4,
            eta: 0.05,
            max_epochs: 8,
            output_mode: OutputMode::Last,
            sfo_mode: SfoMode::Samples,
            metric_every_iter: false,
            stop_grad_norm_sq: None,
        }
    }

    #[test]
    fn svrg_direction_at_snapshot_is_anchor_bitwise() {
        let obj = NonconvexLogReg::synthetic(30, 6, 0.1, 2);
        let snap = vec![0.1, -0.2, 0.3, 0.0, 0.05, -0.4];
        let anchor = obj.full_grad(&snap);
        let state = EpochState::new(snap.clone(), anchor.clone(), 1);
        let v = svrg_inner_direction(&obj, &snap, &state, &[1, 4, 4, 9]);
        assert_eq!(v, anchor);
    }

    #[test]
    fn svrg_direction_full_population() {
        let obj = NonconvexLogReg::synthetic(20, 4, 0.1, 3);
        let snap = vec![0.0; 4];
        let x = vec![0.2, -0.1, 0.05, 0.3];
        let anchor = obj.full_grad(&snap);
        let state = EpochState::new(snap.clone(), anchor.clone(), 1);
        let all: Vec<usize> = (0..20).collect();
        let v = svrg_inner_direction(&obj, &x, &state, &all);
        let fx = obj.full_grad(&x);
        let fs = obj.full_grad(&snap);
        for i in 0..4 {
            let want = batch_grad(&obj, &x, &all)[i] - batch_grad(&obj, &snap, &all)[i] + anchor[i];
            assert!((v[i] - want).abs() < 1e-15);
            // and numerically the telescoped value
            assert!((v[i] - (fx[i] - fs[i] + anchor[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn svrg_direction_is_unbiased_when_anchor_is_exact() {
        // Monte-Carlo mean over batch redraws approaches grad f(x) when the
        // anchor equals grad f(snapshot).
        let obj = NonconvexLogReg::synthetic(15, 3, 0.1, 4);
        let snap = vec![0.05, 0.2, -0.1];
        let x = vec![-0.3, 0.12, 0.4];
        let state = EpochState::new(snap.clone(), obj.full_grad(&snap), 1);
        let mut rng = SeededRng::new(10);
        let reps = 100_000;
        let mut mean = vec![0.0; 3];
        let mut second = vec![0.0; 3];
        for _ in 0..reps {
            let batch = sample_with_replacement(15, 3, &mut rng);
            let v = svrg_inner_direction(&obj, &x, &state, &batch);
            for i in 0..3 {
                mean[i] += v[i];
                second[i] += v[i] * v[i];
            }
        }
        let want = obj.full_grad(&x);
        for i in 0..3 {
            let m = mean[i] / reps as f64;
            let var = (second[i] / reps as f64 - m * m).max(0.0);
            let sigma_mean = (var / reps as f64).sqrt();
            assert!(
                (m - want[i]).abs() <= 3.0 * sigma_mean + 1e-12,
                "coord {i}: {m} vs {}",
                want[i]
            );
        }
    }

    #[test]
    fn spider_direction_identities() {
        let obj = NonconvexLogReg::synthetic(12, 3, 0.1, 5);
        let x_prev = vec![0.3, -0.2, 0.1];
        let v_prev = vec![0.7, 0.1, -0.4];
        // same point: direction unchanged, bitwise
        let v = spider_inner_direction(&obj, &x_prev, &x_prev, &v_prev, &[2, 2, 5]);
        assert_eq!(v, v_prev);
        // full population with exact v_prev telescopes to the full gradient
        let x_t = vec![0.1, 0.0, -0.3];
        let all: Vec<usize> = (0..12).collect();
        let v = spider_inner_direction(&obj, &x_t, &x_prev, &obj.full_grad(&x_prev), &all);
        let want = obj.full_grad(&x_t);
        for i in 0..3 {
            assert!((v[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spider_singleton_expectation_is_exhaustive_mean() {
        let obj = NonconvexLogReg::synthetic(9, 2, 0.1, 6);
        let x_t = vec![0.2, -0.5];
        let x_prev = vec![-0.1, 0.3];
        let v_prev = vec![0.4, 0.9];
        let mut mean = vec![0.0; 2];
        for i in 0..9 {
            let v = spider_inner_direction(&obj, &x_t, &x_prev, &v_prev, &[i]);
            mean[0] += v[0];
            mean[1] += v[1];
        }
        for m in mean.iter_mut() {
            *m /= 9.0;
        }
        let fx = obj.full_grad(&x_t);
        let fp = obj.full_grad(&x_prev);
        for i in 0..2 {
            let want = fx[i] - fp[i] + v_prev[i];
            assert!((mean[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_full_batch_is_gradient_descent() {
        // n identical components 0.5||x||^2 via a_i = e_i rows is awkward;
        // instead check on the generated quadratic that a full-batch SVRG
        // epoch with m = 1, B = n reproduces exact gradient steps.
        let obj = SyntheticPl::generate(16, 3, 11);
        let mut cfg = small_cfg();
        cfg.m = 1;
        cfg.batch = 16;
        cfg.c_beta = f64::INFINITY; // kill the history term -> N_s from cap
        cfg.c_eps = 1e12; // cap at n
        cfg.eta = 0.01;
        cfg.max_epochs = 3;
        let x0 = vec![1.0, -2.0, 0.5];
        let mut rng = SeededRng::new(1);
        let trace = run_abasvrg(&obj, &cfg, &x0, &mut rng);

        // replicate by hand
        let mut x = x0.clone();
        for _ in 0..3 {
            let g = obj.full_grad(&x);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= cfg.eta * gi;
            }
        }
        for (a, b) in trace.final_iterate.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spider_m1_is_large_batch_gradient_descent() {
        let obj = SyntheticPl::generate(16, 3, 12);
        let mut cfg = small_cfg();
        cfg.m = 1;
        cfg.batch = 16;
        cfg.c_beta = f64::INFINITY;
        cfg.c_eps = 1e12;
        cfg.eta = 0.01;
        cfg.max_epochs = 4;
        let x0 = vec![0.5, 0.5, -0.5];
        let mut rng = SeededRng::new(2);
        let trace = run_abaspider(&obj, &cfg, &x0, &mut rng);
        let mut x = x0.clone();
        for _ in 0..4 {
            let g = obj.full_grad(&x);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= cfg.eta * gi;
            }
        }
        for (a, b) in trace.final_iterate.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sfo_accounting_samples_and_gradient_evals() {
        // one epoch, N=100, m=10, B=4: samples 140, gradient-evals 180.
        let mut c = SfoCounter::new(SfoMode::Samples);
        c.anchor(100);
        for _ in 0..10 {
            c.inner(4);
        }
        assert_eq!(c.total(), 140);
        let mut c = SfoCounter::new(SfoMode::GradientEvals);
        c.anchor(100);
        for _ in 0..10 {
            c.inner(4);
        }
        assert_eq!(c.total(), 180);
    }

    #[test]
    fn closed_form_sfo_for_fixed_schedule() {
        // S epochs fixed N in samples mode: S*N + S*m*B.
        let obj = NonconvexLogReg::synthetic(50, 4, 0.1, 7);
        let mut cfg = small_cfg();
        cfg.c_eps = 1e12; // fixed anchor = n
        let mut rng = SeededRng::new(3);
        let trace = run_baseline(&obj, BaselineAlgo::SvrgFixed, &cfg, &vec![0.0; 4], &mut rng);
        let s = cfg.max_epochs as u64;
        assert_eq!(
            trace.total_sfo(),
            s * 50 + s * (cfg.m as u64) * (cfg.batch as u64)
        );
    }

    #[test]
    fn trace_has_m_plus_one_records_per_epoch() {
        let obj = NonconvexLogReg::synthetic(40, 4, 0.1, 8);
        let cfg = small_cfg();
        let rng = SeededRng::new(4);
        for trace in [
            run_abasvrg(&obj, &cfg, &vec![0.0; 4], &mut rng.substream(&[1])),
            run_abaspider(&obj, &cfg, &vec![0.0; 4], &mut rng.substream(&[2])),
        ] {
            assert_eq!(
                trace.records.len(),
                cfg.max_epochs * (cfg.m + 1),
                "S*m inner + S boundary records"
            );
            let mut last_sfo = 0;
            for r in &trace.records {
                assert!(r.sfo >= last_sfo, "sfo must be nondecreasing");
                last_sfo = r.sfo;
            }
        }
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let obj = NonconvexLogReg::synthetic(60, 5, 0.1, 9);
        let cfg = small_cfg();
        let x0 = vec![0.0; 5];
        let a = run_abasvrg(&obj, &cfg, &x0, &mut SeededRng::new(77));
        let b = run_abasvrg(&obj, &cfg, &x0, &mut SeededRng::new(77));
        assert!(a.same_run(&b));
        let a = run_abaspider(&obj, &cfg, &x0, &mut SeededRng::new(78));
        let b = run_abaspider(&obj, &cfg, &x0, &mut SeededRng::new(78));
        assert!(a.same_run(&b));
    }

    #[test]
    fn adaptive_with_dead_history_term_equals_fixed_baseline() {
        // c_beta = +inf makes the history term vacuous, so the adaptive run
        // must be iterate-identical to the fixed-batch counterpart.
        let obj = NonconvexLogReg::synthetic(60, 5, 0.1, 10);
        let mut cfg = small_cfg();
        cfg.c_beta = f64::INFINITY;
        let x0 = vec![0.0; 5];
        let a = run_abasvrg(&obj, &cfg, &x0, &mut SeededRng::new(5));
        let b = run_baseline(&obj, BaselineAlgo::SvrgFixed, &cfg, &x0, &mut SeededRng::new(5));
        assert!(a.same_run(&b));
        let a = run_abaspider(&obj, &cfg, &x0, &mut SeededRng::new(6));
        let b = run_baseline(
            &obj,
            BaselineAlgo::SpiderBoostFixed,
            &cfg,
            &x0,
            &mut SeededRng::new(6),
        );
        assert!(a.same_run(&b));
    }

    #[test]
    fn abasgd_window_saturation_uses_exact_gradient() {
        // a large variance bound keeps |B_t| pinned at n; the driver then
        // takes exact gradient steps, so two runs with different seeds
        // coincide.
        let obj = SyntheticPl::generate(20, 3, 13);
        let cfg = AbaSgdConfig {
            eps: 1e-3,
            sigma_sq: 1e6,
            window: 3,
            alpha0: 0.0,
            eta: 0.001,
            max_iters: 12,
            output_mode: OutputMode::Last,
            sfo_mode: SfoMode::Samples,
            stop_grad_norm_sq: None,
        };
        let x0 = vec![0.4, 0.4, 0.4];
        let a = run_abasgd(&obj, &cfg, &x0, &mut SeededRng::new(1));
        let b = run_abasgd(&obj, &cfg, &x0, &mut SeededRng::new(999));
        assert_eq!(a.final_iterate, b.final_iterate);
        // every iteration consumed n samples
        assert_eq!(a.total_sfo(), 12 * 20);
    }

    #[test]
    fn divergence_guard_aborts() {
        let obj = SyntheticPl::generate(30, 4, 14);
        let mut cfg = small_cfg();
        cfg.eta = 10.0 / obj.lipschitz_hint().unwrap().max(1.0) * 1e3; // absurd step
        cfg.max_epochs = 50;
        let mut rng = SeededRng::new(15);
        let trace = run_abasvrg(&obj, &cfg, &vec![2.0; 4], &mut rng);
        assert!(trace.diverged);
        assert!(trace.records.len() < 50 * (cfg.m + 1));
    }

    #[test]
    fn uniform_output_mode_picks_an_observed_iterate() {
        let obj = NonconvexLogReg::synthetic(30, 4, 0.1, 16);
        let mut cfg = small_cfg();
        cfg.output_mode = OutputMode::UniformRandomIterate;
        let mut rng = SeededRng::new(17);
        let trace = run_abasvrg(&obj, &cfg, &vec![0.0; 4], &mut rng);
        assert_eq!(trace.output_iterate().len(), 4);
        // selection must not disturb the run itself
        cfg.output_mode = OutputMode::Last;
        let trace2 = run_abasvrg(&obj, &cfg, &vec![0.0; 4], &mut SeededRng::new(17));
        assert_eq!(trace.final_iterate, trace2.final_iterate);
    }

    #[test]
    fn hsgd_batch_grows_linearly() {
        let obj = NonconvexLogReg::synthetic(200, 4, 0.1, 18);
        let mut cfg = small_cfg();
        cfg.max_epochs = 4;
        let mut rng = SeededRng::new(19);
        let trace = run_baseline(&obj, BaselineAlgo::Hsgd { c_b: 3.0 }, &cfg, &vec![0.0; 4], &mut rng);
        for (t, r) in trace.records.iter().enumerate() {
            assert_eq!(r.batch_size, (3 * (t + 1)).min(200));
        }
    }
}
