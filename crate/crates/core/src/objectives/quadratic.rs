//! Synthetic gradient-dominated problem: per-component quadratics
//! `f_i(x) = (a_i.x - b_i)^2 / 2` with `b_i = a_i.x*`, so the minimizer,
//! the optimal value (zero), the smoothness constant, and the dominance
//! constant `tau` are all known at construction time.

use rand_distr::{Distribution, StandardNormal};

use super::{dot, FiniteSumObjective};
use crate::sampling::SeededRng;

/// Strongly convex finite-sum quadratic with a certified PL constant.
///
/// `f(x) - f(x*) <= tau * ||grad f(x)||^2` holds with
/// `tau = 1 / (2 * lambda_min)` where `lambda_min` is the smallest
/// eigenvalue of the Gram matrix `A^T A / n`.
#[derive(Debug, Clone)]
pub struct SyntheticPl {
    rows: Vec<f64>,
    targets: Vec<f64>,
    minimizer: Vec<f64>,
    n: usize,
    d: usize,
    lipschitz: f64,
    tau: f64,
    lambda_min: f64,
    lambda_max: f64,
}

impl SyntheticPl {
    /// Generates `n` standard-normal rows and a random minimizer, then
    /// certifies `L` and `tau` from the realized data.
    pub fn generate(n: usize, d: usize, seed: u64) -> Self {
        assert!(n >= d, "synthetic PL requires n >= d for a full-rank Gram");
        let mut rng = SeededRng::new(seed).substream(&[0x91]);
        let mut rows = vec![0.0; n * d];
        for v in rows.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut minimizer = vec![0.0; d];
        for v in minimizer.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let targets: Vec<f64> = (0..n)
            .map(|i| dot(&rows[i * d..(i + 1) * d], &minimizer))
            .collect();

        // Gram matrix G = A^T A / n, kept dense: d stays desk-sized.
        let mut gram = vec![0.0; d * d];
        for i in 0..n {
            let row = &rows[i * d..(i + 1) * d];
            for j in 0..d {
                for k in 0..d {
                    gram[j * d + k] += row[j] * row[k];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for g in gram.iter_mut() {
            *g *= inv_n;
        }
        let lambda_max = extreme_eigenvalue(&gram, d, None, &mut rng);
        let lambda_min = lambda_max - extreme_eigenvalue(&gram, d, Some(lambda_max), &mut rng);
        assert!(lambda_min > 0.0, "degenerate Gram matrix");

        // Each grad f_i has Lipschitz constant ||a_i||^2; the max over rows
        // also dominates the full gradient's constant lambda_max.
        let lipschitz = (0..n)
            .map(|i| dot(&rows[i * d..(i + 1) * d], &rows[i * d..(i + 1) * d]))
            .fold(0.0f64, f64::max);

        Self {
            rows,
            targets,
            minimizer,
            n,
            d,
            lipschitz,
            tau: 1.0 / (2.0 * lambda_min),
            lambda_min,
            lambda_max,
        }
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// Optimal value; the linear system is consistent by construction.
    pub fn min_value(&self) -> f64 {
        0.0
    }

    /// Gradient-dominance constant `tau`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn residual(&self, x: &[f64], i: usize) -> f64 {
        dot(&self.rows[i * self.d..(i + 1) * self.d], x) - self.targets[i]
    }
}

/// Largest eigenvalue of the symmetric matrix `m` (or of `shift*I - m`
/// when `shift` is given) via seeded power iteration.
fn extreme_eigenvalue(m: &[f64], d: usize, shift: Option<f64>, rng: &mut SeededRng) -> f64 {
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..4000 {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += m[j * d + k] * v[k];
            }
            w[j] = match shift {
                Some(s) => s * v[j] - acc,
                None => acc,
            };
        }
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / norm;
        }
        lambda = norm;
    }
    lambda
}

impl FiniteSumObjective for SyntheticPl {
    fn num_components(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "synthetic PL: dimension mismatch");
        let mut acc = 0.0;
        for i in 0..self.n {
            let r = self.residual(x, i);
            acc += 0.5 * r * r;
        }
        acc / self.n as f64
    }

    fn component_grad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        assert_eq!(x.len(), self.d, "synthetic PL: dimension mismatch");
        assert!(i < self.n, "synthetic PL: component index out of range");
        let r = self.residual(x, i);
        for (o, a) in out.iter_mut().zip(&self.rows[i * self.d..(i + 1) * self.d]) {
            *o += r * a;
        }
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::norm_sq;
    use rand::Rng;

    #[test]
    fn value_at_minimizer_is_zero() {
        let obj = SyntheticPl::generate(60, 5, 31);
        let x = obj.minimizer().to_vec();
        assert!(obj.value(&x).abs() < 1e-20);
    }

    #[test]
    fn gradient_dominance_certificate() {
        // 1000 random points: f(x) - f* <= tau * ||grad f(x)||^2.
        let obj = SyntheticPl::generate(80, 6, 17);
        let mut rng = SeededRng::new(99);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| 8.0 * (rng.random::<f64>() - 0.5)).collect();
            let gap = obj.value(&x) - obj.min_value();
            let g2 = norm_sq(&obj.full_grad(&x));
            assert!(gap <= obj.tau() * g2 * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn eigenvalue_estimates_bracket_rayleigh_quotients() {
        let obj = SyntheticPl::generate(100, 4, 5);
        let mut rng = SeededRng::new(12);
        for _ in 0..50 {
            let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
            let gv = obj.full_grad(
                &v.iter()
                    .zip(obj.minimizer())
                    .map(|(a, b)| a + b)
                    .collect::<Vec<_>>(),
            );
            // grad f(x* + v) = G v, so the Rayleigh quotient of G is
            // v.Gv / v.v and must sit inside [lambda_min, lambda_max].
            let quotient = dot(&gv, &v) / norm_sq(&v);
            assert!(quotient <= obj.lambda_max() * (1.0 + 1e-6));
            assert!(quotient >= obj.lambda_min() * (1.0 - 1e-6));
        }
    }

    #[test]
    fn lipschitz_hint_dominates_row_curvature() {
        let obj = SyntheticPl::generate(40, 3, 8);
        let l = obj.lipschitz_hint().unwrap();
        assert!(l >= obj.lambda_max());
    }
}
