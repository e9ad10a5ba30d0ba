//! Finite-sum objective contracts and the two concrete problems every
//! experiment and oracle check runs against.
//!
//! An objective is `f(x) = (1/n) * sum_i f_i(x)`. Optimizers only ever touch
//! component gradients and batch means of them; the full gradient exists for
//! metrics and anchors with batch size `n`.

mod logreg;
mod quadratic;

pub use logreg::NonconvexLogReg;
pub use quadratic::SyntheticPl;

use crate::sampling::{sample_with_replacement, SeededRng};

/// Contract for `f(x) = (1/n) * sum_i f_i(x)`.
///
/// Implementations must keep `component_grad` a pure function of `(x, i)`
/// (repeated calls agree bitwise) and `full_grad` equal to the arithmetic
/// mean of the component gradients up to summation order.
///
/// Dimension mismatches and out-of-range component indices are programming
/// errors and panic.
pub trait FiniteSumObjective: Sync {
    /// Component count `n`.
    fn num_components(&self) -> usize;

    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Objective value `f(x)`.
    fn value(&self, x: &[f64]) -> f64;

    /// Gradient of component `f_i` at `x`, accumulated into `out`.
    fn component_grad_into(&self, x: &[f64], i: usize, out: &mut [f64]);

    /// Known or estimated smoothness constant, when available.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    fn component_grad(&self, x: &[f64], i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.component_grad_into(x, i, &mut out);
        out
    }

    /// Exact mean of all component gradients, in index order.
    fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.dim(), "gradient buffer dimension mismatch");
        out.fill(0.0);
        let mut tmp = vec![0.0; self.dim()];
        for i in 0..self.num_components() {
            tmp.fill(0.0);
            self.component_grad_into(x, i, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += t;
            }
        }
        let inv = 1.0 / self.num_components() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }

    fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.full_grad_into(x, &mut out);
        out
    }
}

/// Mean of component gradients over an index multiset; duplicates count
/// with multiplicity. Panics on an empty multiset.
pub fn batch_grad_into<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    indices: &[usize],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    assert!(!indices.is_empty(), "batch_grad: empty index multiset");
    assert_eq!(out.len(), obj.dim(), "gradient buffer dimension mismatch");
    out.fill(0.0);
    for &i in indices {
        scratch.fill(0.0);
        obj.component_grad_into(x, i, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }
    let inv = 1.0 / indices.len() as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

pub fn batch_grad<O: FiniteSumObjective + ?Sized>(obj: &O, x: &[f64], indices: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; obj.dim()];
    let mut scratch = vec![0.0; obj.dim()];
    batch_grad_into(obj, x, indices, &mut out, &mut scratch);
    out
}

/// Pilot estimate of the component-gradient variance bound at `x`:
/// `(1/p) * sum ||grad f_i(x) - mean||^2` over a sample of
/// `p = min(n, 1000)` components (exhaustive when `n <= 1000`).
pub fn estimate_sigma_sq<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    rng: &mut SeededRng,
) -> f64 {
    let n = obj.num_components();
    let pilot: Vec<usize> = if n <= 1000 {
        (0..n).collect()
    } else {
        sample_with_replacement(n, 1000, rng)
    };
    let d = obj.dim();
    let mut grads = Vec::with_capacity(pilot.len());
    let mut mean = vec![0.0; d];
    for &i in &pilot {
        let g = obj.component_grad(x, i);
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi;
        }
        grads.push(g);
    }
    let inv = 1.0 / pilot.len() as f64;
    for m in mean.iter_mut() {
        *m *= inv;
    }
    let mut var = 0.0;
    for g in &grads {
        var += g
            .iter()
            .zip(&mean)
            .map(|(gi, m)| (gi - m) * (gi - m))
            .sum::<f64>();
    }
    var * inv
}

/// Pilot estimate of a component smoothness constant: the largest observed
/// `||grad f_i(x) - grad f_i(y)|| / ||x - y||` over random pairs near `x0`.
pub fn estimate_lipschitz<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x0: &[f64],
    trials: usize,
    rng: &mut SeededRng,
) -> f64 {
    use rand::Rng;
    let d = obj.dim();
    let n = obj.num_components();
    let mut best = 0.0f64;
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for _ in 0..trials {
        let i = rng.random_range(0..n);
        let x: Vec<f64> = x0
            .iter()
            .map(|&v| v + 2.0 * (rng.random::<f64>() - 0.5))
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| v + 0.2 * (rng.random::<f64>() - 0.5))
            .collect();
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist2 < 1e-24 {
            continue;
        }
        gx.fill(0.0);
        gy.fill(0.0);
        obj.component_grad_into(&x, i, &mut gx);
        obj.component_grad_into(&y, i, &mut gy);
        let diff2: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum();
        best = best.max((diff2 / dist2).sqrt());
    }
    best
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_over_full_population_is_full_grad() {
        let obj = NonconvexLogReg::synthetic(40, 6, 0.1, 5);
        let x: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
        let all: Vec<usize> = (0..40).collect();
        let bg = batch_grad(&obj, &x, &all);
        let fg = obj.full_grad(&x);
        for (a, b) in bg.iter().zip(&fg) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn singleton_batch_is_component_grad() {
        let obj = NonconvexLogReg::synthetic(10, 4, 0.1, 9);
        let x = vec![0.3, -0.1, 0.0, 0.7];
        assert_eq!(batch_grad(&obj, &x, &[3]), obj.component_grad(&x, 3));
    }

    #[test]
    fn random_multiset_matches_naive_resummation() {
        let obj = NonconvexLogReg::synthetic(25, 5, 0.1, 13);
        let x = vec![0.2, -0.4, 0.1, 0.0, 0.5];
        let idx = vec![3, 3, 7, 0, 24, 11, 3];
        let got = batch_grad(&obj, &x, &idx);
        // independent naive loop
        let mut want = vec![0.0; 5];
        for &i in &idx {
            let g = obj.component_grad(&x, i);
            for (w, gi) in want.iter_mut().zip(&g) {
                *w += gi;
            }
        }
        for w in want.iter_mut() {
            *w /= idx.len() as f64;
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn mean_decomposition_holds() {
        let obj = SyntheticPl::generate(30, 4, 77);
        let x = vec![0.4, -0.2, 1.0, 0.3];
        let fg = obj.full_grad(&x);
        let mut mean = vec![0.0; 4];
        for i in 0..30 {
            let g = obj.component_grad(&x, i);
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi;
            }
        }
        for m in mean.iter_mut() {
            *m /= 30.0;
        }
        let diff: f64 = fg
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = 1.0 + norm_sq(&fg).sqrt();
        assert!(diff <= 1e-12 * scale);
    }

    #[test]
    #[should_panic(expected = "empty index multiset")]
    fn empty_batch_is_rejected() {
        let obj = SyntheticPl::generate(5, 2, 1);
        batch_grad(&obj, &[0.0, 0.0], &[]);
    }

    #[test]
    fn component_grad_is_bitwise_pure() {
        let obj = NonconvexLogReg::synthetic(12, 3, 0.1, 21);
        let x = vec![0.5, -1.2, 0.25];
        for i in 0..12 {
            let a = obj.component_grad(&x, i);
            let b = obj.component_grad(&x, i);
            assert_eq!(a, b);
        }
    }
}
