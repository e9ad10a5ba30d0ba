//! Variance-reduced optimizers with history-gradient batch-size adaptation,
//! their fixed-batch and prescribed-schedule baselines, and an adaptive SGD.
//!
//! The shared idea: each epoch's anchor batch size is
//! `N_s = min(c_beta * sigma^2 / beta_s, c_eps * sigma^2 / eps, n)` where
//! `beta_s` is the mean squared norm of the stochastic directions taken in
//! the *preceding* epoch. Early epochs (large gradients) get cheap anchors,
//! late epochs get accurate ones.

mod runners;
mod trace;

pub use runners::{
    run_abasgd, run_abaspider, run_abasvrg, run_baseline, spider_inner_direction,
    svrg_inner_direction, BaselineAlgo,
};
pub(crate) use trace::UniformReservoir;
pub use trace::{OutputMode, RunTrace, SfoCounter, SfoMode, TraceRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be finite and > 0 (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite and >= 0 (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be >= 1 (got {value})")]
    ZeroSize { name: &'static str, value: usize },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NotPositive { name, value })
    }
}

fn require_nonnegative(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Negative { name, value })
    }
}

fn require_size(name: &'static str, value: usize) -> Result<(), ConfigError> {
    if value >= 1 {
        Ok(())
    } else {
        Err(ConfigError::ZeroSize { name, value })
    }
}

/// Tunables of the epoch-structured adaptive algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbaConfig {
    /// Weight of the history term in the anchor batch rule.
    pub c_beta: f64,
    /// Weight of the accuracy term in the anchor batch rule.
    pub c_eps: f64,
    /// Target accuracy for `||grad f||^2`.
    pub eps: f64,
    /// Variance bound on component gradients (config value; see
    /// `objectives::estimate_sigma_sq` for the pilot estimator).
    pub sigma_sq: f64,
    /// beta_1, the history statistic assumed before the first epoch.
    pub beta_init: f64,
    /// Epoch length (inner steps per epoch).
    pub m: usize,
    /// Inner mini-batch size B.
    pub batch: usize,
    /// Step size eta.
    pub eta: f64,
    /// Number of epochs S.
    pub max_epochs: usize,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub sfo_mode: SfoMode,
    /// Attach loss / grad-norm metrics to every inner record rather than
    /// only epoch boundaries. Metric work is never charged to the counter.
    #[serde(default)]
    pub metric_every_iter: bool,
    /// Stop at the first epoch boundary whose grad-norm^2 falls at or
    /// below this value.
    #[serde(default)]
    pub stop_grad_norm_sq: Option<f64>,
}

impl AbaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_nonnegative("c_beta", self.c_beta)?;
        require_nonnegative("c_eps", self.c_eps)?;
        require_positive("eps", self.eps)?;
        require_positive("sigma_sq", self.sigma_sq)?;
        require_nonnegative("beta_init", self.beta_init)?;
        require_positive("eta", self.eta)?;
        require_size("m", self.m)?;
        require_size("batch", self.batch)?;
        require_size("max_epochs", self.max_epochs)?;
        Ok(())
    }

    /// Default first-epoch history statistic `beta_1 = eps * S`.
    pub fn beta_init_general(eps: f64, max_epochs: usize) -> f64 {
        eps * max_epochs as f64
    }

    /// First-epoch history statistic for gradient-dominated runs:
    /// `beta_1 = eps * (1/gamma)^(m (S-1))`, computed in log space and
    /// capped to stay finite.
    pub fn beta_init_pl(eps: f64, gamma: f64, m: usize, max_epochs: usize) -> f64 {
        let exponent = (m as f64) * (max_epochs.saturating_sub(1)) as f64;
        let log_beta = eps.ln() - exponent * gamma.ln();
        log_beta.min(600.0).exp()
    }
}

/// Anchor batch size `N_s` from the previous epoch's history statistic.
///
/// The history term is inactive (`+inf`) when `beta_s == 0`; the result is
/// the ceiling of the three-way minimum clamped to `[1, n]`.
pub fn adaptive_batch_size(beta_s: f64, cfg: &AbaConfig, n: usize) -> usize {
    let history_term = if beta_s > 0.0 {
        cfg.c_beta * cfg.sigma_sq / beta_s
    } else {
        f64::INFINITY
    };
    let accuracy_term = cfg.c_eps * cfg.sigma_sq / cfg.eps;
    ceil_clamp(history_term.min(accuracy_term).min(n as f64), 1, n)
}

/// Per-iteration batch size of adaptive SGD:
/// `|B_t| = min(2 sigma^2 / mean(window), 24 sigma^2 / eps, n)`, where
/// `window` holds the squared direction norms of the preceding `m` steps.
pub fn abasgd_batch_size(window_norms_sq: &[f64], sigma_sq: f64, eps: f64, n: usize) -> usize {
    assert!(!window_norms_sq.is_empty(), "abasgd: empty history window");
    let mean: f64 = window_norms_sq.iter().sum::<f64>() / window_norms_sq.len() as f64;
    let history_term = if mean > 0.0 {
        2.0 * sigma_sq / mean
    } else {
        f64::INFINITY
    };
    let accuracy_term = 24.0 * sigma_sq / eps;
    ceil_clamp(history_term.min(accuracy_term).min(n as f64), 1, n)
}

fn ceil_clamp(x: f64, lo: usize, hi: usize) -> usize {
    if !x.is_finite() {
        return hi;
    }
    let c = x.ceil();
    if c <= lo as f64 {
        lo
    } else if c >= hi as f64 {
        hi
    } else {
        c as usize
    }
}

/// How the anchor batch size evolves across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BatchSchedule {
    Fixed { size: usize },
    /// `N_s = mu^s`, capped at `n`.
    Exponential { mu: f64 },
    /// `N_s = nu * (s + 1)`, capped at `n`.
    Linear { nu: f64 },
    /// History-gradient rule.
    Adaptive,
}

impl BatchSchedule {
    /// Anchor size for 1-based epoch index `s`; always in `[1, n]`.
    pub fn anchor_size(&self, s: usize, beta_s: f64, cfg: &AbaConfig, n: usize) -> usize {
        match *self {
            BatchSchedule::Fixed { size } => size.clamp(1, n),
            BatchSchedule::Exponential { mu } => ceil_clamp(mu.powi(s as i32), 1, n),
            BatchSchedule::Linear { nu } => ceil_clamp(nu * (s as f64 + 1.0), 1, n),
            BatchSchedule::Adaptive => adaptive_batch_size(beta_s, cfg, n),
        }
    }
}

/// Fixed anchor `min(n, ceil(c_eps sigma^2 / eps))`, the vanilla-counterpart
/// batch size.
pub fn fixed_anchor_size(cfg: &AbaConfig, n: usize) -> usize {
    ceil_clamp(cfg.c_eps * cfg.sigma_sq / cfg.eps, 1, n)
}

/// Per-epoch state of an epoch-structured run: the snapshot point, the
/// anchor direction, and the accumulator building next epoch's `beta`.
#[derive(Debug, Clone)]
pub struct EpochState {
    pub snapshot: Vec<f64>,
    pub anchor: Vec<f64>,
    pub beta_next_accum: f64,
    pub epoch_index: usize,
}

impl EpochState {
    /// Fresh state at the start of an epoch; the accumulator resets to zero.
    pub fn new(snapshot: Vec<f64>, anchor: Vec<f64>, epoch_index: usize) -> Self {
        Self {
            snapshot,
            anchor,
            beta_next_accum: 0.0,
            epoch_index,
        }
    }

    /// Adds one direction's `||v||^2 / m` to the running statistic.
    pub fn accumulate(&mut self, v_norm_sq: f64, m: usize) {
        self.beta_next_accum += v_norm_sq / m as f64;
    }
}

/// Configuration for adaptive-batch SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbaSgdConfig {
    pub eps: f64,
    pub sigma_sq: f64,
    /// History window length m.
    pub window: usize,
    /// Pre-history direction norm: `||v_{-1}|| = ... = ||v_{-m}|| = alpha_0`.
    pub alpha0: f64,
    pub eta: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub sfo_mode: SfoMode,
    #[serde(default)]
    pub stop_grad_norm_sq: Option<f64>,
}

impl AbaSgdConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("eps", self.eps)?;
        require_positive("sigma_sq", self.sigma_sq)?;
        require_size("window", self.window)?;
        require_nonnegative("alpha0", self.alpha0)?;
        require_positive("eta", self.eta)?;
        require_size("max_iters", self.max_iters)?;
        Ok(())
    }
}
