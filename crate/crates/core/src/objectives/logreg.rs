//! Nonconvex logistic regression: binary cross-entropy data terms plus a
//! smooth nonconvex regularizer `alpha * sum_j w_j^2 / (1 + w_j^2)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FiniteSumObjective;
use crate::sampling::SeededRng;

/// Two-class logistic loss with the bounded nonconvex regularizer.
///
/// Features are stored row-compressed so LIBSVM data loads without
/// densification. Each component is
/// `f_i(w) = ln(1 + exp(-y_i * w.x_i)) + alpha * sum_j w_j^2/(1+w_j^2)`,
/// so the mean over components reproduces the regularized objective and the
/// value is bounded below by zero.
#[derive(Debug, Clone)]
pub struct NonconvexLogReg {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
    reg_alpha: f64,
    lipschitz: f64,
}

impl NonconvexLogReg {
    /// Builds from sparse rows of `(column, value)` pairs and labels in
    /// `{-1, +1}`. Panics on an empty dataset, a label outside `{-1, +1}`,
    /// or a column index at or above `dim`.
    pub fn from_sparse_rows(
        rows: &[Vec<(usize, f64)>],
        labels: &[f64],
        dim: usize,
        reg_alpha: f64,
    ) -> Self {
        assert!(!rows.is_empty(), "logreg: empty dataset");
        assert_eq!(rows.len(), labels.len(), "logreg: rows/labels length mismatch");
        assert!(dim >= 1, "logreg: dimension must be >= 1");
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut max_row_norm_sq = 0.0f64;
        for row in rows {
            let mut row_norm_sq = 0.0;
            for &(c, v) in row {
                assert!(c < dim, "logreg: column {c} out of range for dim {dim}");
                col_idx.push(c as u32);
                vals.push(v);
                row_norm_sq += v * v;
            }
            max_row_norm_sq = max_row_norm_sq.max(row_norm_sq);
            row_ptr.push(col_idx.len());
        }
        for &y in labels {
            assert!(y == 1.0 || y == -1.0, "logreg: label {y} not in {{-1,+1}}");
        }
        // Data curvature is at most ||x_i||^2 / 4; the regularizer's second
        // derivative is bounded by 2 * alpha.
        let lipschitz = 0.25 * max_row_norm_sq + 2.0 * reg_alpha;
        Self {
            row_ptr,
            col_idx,
            vals,
            labels: labels.to_vec(),
            dim,
            reg_alpha,
            lipschitz,
        }
    }

    /// Random dense two-class instance for desk experiments: standard
    /// normal rows, labels from a planted separator with 10% flips.
    pub fn synthetic(n: usize, d: usize, reg_alpha: f64, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed).substream(&[0x10c9]);
        let mut w_true = vec![0.0; d];
        for w in w_true.iter_mut() {
            *w = StandardNormal.sample(&mut rng);
        }
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<(usize, f64)> = (0..d)
                .map(|j| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    (j, v)
                })
                .collect();
            let score: f64 = row.iter().map(|&(j, v)| v * w_true[j]).sum();
            let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < 0.1 {
                y = -y;
            }
            rows.push(row);
            labels.push(y);
        }
        Self::from_sparse_rows(&rows, &labels, d, reg_alpha)
    }

    pub fn reg_alpha(&self) -> f64 {
        self.reg_alpha
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    fn score(&self, x: &[f64], i: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&c, &v)| v * x[c as usize])
            .sum()
    }

    fn regularizer(&self, x: &[f64]) -> f64 {
        self.reg_alpha * x.iter().map(|&w| w * w / (1.0 + w * w)).sum::<f64>()
    }
}

/// `ln(1 + exp(-z))` without overflow for large `|z|`.
fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `sigmoid(-z) = 1 / (1 + exp(z))`, the magnitude of d/dz ln(1+e^{-z}).
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl FiniteSumObjective for NonconvexLogReg {
    fn num_components(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "logreg: dimension mismatch");
        let n = self.labels.len();
        let mut data = 0.0;
        for i in 0..n {
            data += logistic_loss(self.labels[i] * self.score(x, i));
        }
        data / n as f64 + self.regularizer(x)
    }

    fn component_grad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "logreg: dimension mismatch");
        assert!(i < self.labels.len(), "logreg: component index out of range");
        let y = self.labels[i];
        let coeff = -y * sigmoid_neg(y * self.score(x, i));
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        for (&c, &v) in self.col_idx[lo..hi].iter().zip(&self.vals[lo..hi]) {
            out[c as usize] += coeff * v;
        }
        for (o, &w) in out.iter_mut().zip(x) {
            let denom = 1.0 + w * w;
            *o += 2.0 * self.reg_alpha * w / (denom * denom);
        }
    }

    fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "gradient buffer dimension mismatch");
        out.fill(0.0);
        let n = self.labels.len();
        for i in 0..n {
            let y = self.labels[i];
            let coeff = -y * sigmoid_neg(y * self.score(x, i));
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for (&c, &v) in self.col_idx[lo..hi].iter().zip(&self.vals[lo..hi]) {
                out[c as usize] += coeff * v;
            }
        }
        let inv = 1.0 / n as f64;
        for (o, &w) in out.iter_mut().zip(x) {
            let denom = 1.0 + w * w;
            *o = *o * inv + 2.0 * self.reg_alpha * w / (denom * denom);
        }
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_instance() -> NonconvexLogReg {
        let rows = vec![
            vec![(0, 1.0)],
            vec![(0, -1.0), (1, 2.0)],
            vec![(0, 0.5), (1, 0.5)],
        ];
        NonconvexLogReg::from_sparse_rows(&rows, &[1.0, -1.0, 1.0], 2, 0.1)
    }

    #[test]
    fn value_at_zero_is_ln2() {
        let obj = desk_instance();
        let v = obj.value(&[0.0, 0.0]);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn desk_value_matches_per_sample_summation() {
        // Independent oracle: hand-summed per-sample stable losses.
        let obj = desk_instance();
        let w = [0.2, -0.3];
        let scores: [f64; 3] = [0.2, -0.2 - 0.6, 0.1 - 0.15];
        let ys: [f64; 3] = [1.0, -1.0, 1.0];
        let mut want = 0.0;
        for (z, y) in scores.iter().zip(&ys) {
            want += (1.0 + (-(y * z)).exp()).ln();
        }
        want /= 3.0;
        want += 0.1 * (0.04 / 1.04 + 0.09 / 1.09);
        assert!((obj.value(&w) - want).abs() < 1e-12);
    }

    #[test]
    fn regularizer_gradient_at_unit_weight() {
        // 2 * 0.1 * 1 / (1+1)^2 = 0.05 on the active coordinate.
        let rows = vec![vec![]];
        let obj = NonconvexLogReg::from_sparse_rows(&rows, &[1.0], 2, 0.1);
        let g = obj.component_grad(&[1.0, 0.0], 0);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn data_term_at_zero_is_half_label_times_features() {
        let obj = desk_instance();
        // alpha = 0 equivalent: subtract the (zero) regularizer gradient at w = 0.
        let g = obj.component_grad(&[0.0, 0.0], 1);
        // sample 1: y = -1, x = (-1, 2)  =>  -0.5 * y * x = (-0.5, 1.0)
        assert!((g[0] - (-0.5)).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn value_is_bounded_below_by_zero() {
        let obj = NonconvexLogReg::synthetic(50, 4, 0.1, 3);
        let mut rng = SeededRng::new(8);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| 6.0 * (rng.random::<f64>() - 0.5)).collect();
            assert!(obj.value(&x) >= 0.0);
        }
    }

    #[test]
    fn stable_loss_handles_extreme_scores() {
        assert!(logistic_loss(800.0).is_finite());
        assert!(logistic_loss(-800.0).is_finite());
        assert!((logistic_loss(-800.0) - 800.0).abs() < 1e-9);
        assert!(logistic_loss(800.0) >= 0.0);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn wrong_dimension_is_rejected() {
        desk_instance().value(&[0.0, 0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "component index out of range")]
    fn out_of_range_component_is_rejected() {
        desk_instance().component_grad(&[0.0, 0.0], 3);
    }
}
