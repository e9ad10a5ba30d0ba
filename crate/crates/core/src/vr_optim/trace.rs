//! Per-run bookkeeping: iteration records, oracle-cost accounting, and the
//! uniformly selected output iterate.

use serde::{Deserialize, Serialize};

use crate::sampling::SeededRng;

/// How stochastic-oracle work is counted.
///
/// `Samples` reproduces the paper-style accounting (one unit per sample in
/// an anchor or inner batch). `GradientEvals` charges inner variance-reduced
/// steps twice per sample, since each sample's gradient is evaluated at two
/// points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SfoMode {
    #[default]
    Samples,
    GradientEvals,
}

/// Which iterate a run reports as its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    /// Final iterate; the practical default for benchmarking.
    #[default]
    Last,
    /// Uniformly random iterate over the whole run, as the algorithms state.
    UniformRandomIterate,
}

/// Running oracle-cost counter.
#[derive(Debug, Clone)]
pub struct SfoCounter {
    mode: SfoMode,
    total: u64,
}

impl SfoCounter {
    pub fn new(mode: SfoMode) -> Self {
        Self { mode, total: 0 }
    }

    /// Anchor batch of `n` samples: one evaluation each in either mode.
    pub fn anchor(&mut self, n: usize) -> u64 {
        self.total += n as u64;
        self.total
    }

    /// Inner variance-reduced mini-batch of `b` samples: each sample's
    /// gradient is taken at the iterate and at the reference point.
    pub fn inner(&mut self, b: usize) -> u64 {
        self.total += match self.mode {
            SfoMode::Samples => b as u64,
            SfoMode::GradientEvals => 2 * b as u64,
        };
        self.total
    }

    /// Plain stochastic-gradient batch: one evaluation per sample.
    pub fn single_eval(&mut self, b: usize) -> u64 {
        self.total += b as u64;
        self.total
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// One row of a run trace. Metrics are present only where the metric
/// cadence computed them; metric evaluations never contribute to `sfo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub epoch: u64,
    pub sfo: u64,
    pub loss: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub batch_size: usize,
    /// True for the end-of-epoch snapshot row (`batch_size` there reports
    /// the epoch's anchor batch).
    pub boundary: bool,
}

/// Complete record of a single optimization run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub initial_value: f64,
    pub final_iterate: Vec<f64>,
    pub uniform_iterate: Vec<f64>,
    pub output_mode: OutputMode,
    pub diverged: bool,
    /// Wall-clock seconds for the run; informational only and excluded from
    /// determinism comparisons and serialized rows.
    pub wall_time_s: f64,
}

impl RunTrace {
    /// Iterate selected by the run's output mode.
    pub fn output_iterate(&self) -> &[f64] {
        match self.output_mode {
            OutputMode::Last => &self.final_iterate,
            OutputMode::UniformRandomIterate => &self.uniform_iterate,
        }
    }

    /// Cumulative oracle cost at the first record whose measured
    /// grad-norm^2 is at or below `target`.
    pub fn sfo_at_target(&self, target: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.grad_norm_sq.is_some_and(|g| g <= target))
            .map(|r| r.sfo)
    }

    /// `(epoch, loss, grad_norm_sq)` at each epoch boundary.
    pub fn epoch_metrics(&self) -> Vec<(u64, f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| match (r.boundary, r.loss, r.grad_norm_sq) {
                (true, Some(l), Some(g)) => Some((r.epoch, l, g)),
                _ => None,
            })
            .collect()
    }

    pub fn total_sfo(&self) -> u64 {
        self.records.last().map_or(0, |r| r.sfo)
    }

    /// Equality up to wall time; the determinism contract for repeated runs.
    /// Initial values are NaN for metric-free runs and compare equal there.
    pub fn same_run(&self, other: &RunTrace) -> bool {
        let init_eq = self.initial_value == other.initial_value
            || (self.initial_value.is_nan() && other.initial_value.is_nan());
        self.records == other.records
            && init_eq
            && self.final_iterate == other.final_iterate
            && self.uniform_iterate == other.uniform_iterate
            && self.diverged == other.diverged
    }
}

/// Reservoir holding one uniformly random element of a growing stream.
///
/// Draws come from a dedicated sub-stream so that enabling or disabling
/// uniform-output selection never perturbs the sampling randomness of the
/// run itself.
pub(crate) struct UniformReservoir {
    rng: SeededRng,
    seen: u64,
    candidate: Vec<f64>,
}

impl UniformReservoir {
    const STREAM_TAG: u64 = 0x5e1ec7;

    pub(crate) fn new(run_rng: &SeededRng) -> Self {
        Self {
            rng: run_rng.substream(&[Self::STREAM_TAG]),
            seen: 0,
            candidate: Vec::new(),
        }
    }

    pub(crate) fn observe(&mut self, x: &[f64]) {
        use rand::Rng;
        self.seen += 1;
        if self.seen == 1 || self.rng.random_range(0..self.seen) == 0 {
            self.candidate.clear();
            self.candidate.extend_from_slice(x);
        }
    }

    pub(crate) fn into_candidate(self, fallback: &[f64]) -> Vec<f64> {
        if self.candidate.is_empty() {
            fallback.to_vec()
        } else {
            self.candidate
        }
    }
}
