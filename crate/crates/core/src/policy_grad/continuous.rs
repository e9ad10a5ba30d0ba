//! One-dimensional continuous-control environment and a Gaussian linear
//! policy with a learned standard deviation. Exercises the
//! continuous-action code path that the tabular chain cannot.

use rand_distr::{Distribution, StandardNormal};

use super::{Env, Policy};
use crate::sampling::SeededRng;

/// Point mass on a line, pushed toward the origin.
///
/// Dynamics `x' = x + force_scale * a + noise`, reward `1 / (1 + x^2)`
/// (bounded in `(0, 1]`).
#[derive(Debug, Clone)]
pub struct PushEnv {
    pub horizon: usize,
    pub gamma: f64,
    pub start_mean: f64,
    pub start_std: f64,
    pub force_scale: f64,
    pub noise_std: f64,
}

impl Default for PushEnv {
    fn default() -> Self {
        Self {
            horizon: 10,
            gamma: 0.95,
            start_mean: 1.5,
            start_std: 0.3,
            force_scale: 0.3,
            noise_std: 0.05,
        }
    }
}

impl Env for PushEnv {
    type State = f64;
    type Action = f64;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn initial_state(&self, rng: &mut SeededRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.start_mean + self.start_std * z
    }

    fn step(&self, s: f64, a: f64, rng: &mut SeededRng) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        let next = s + self.force_scale * a + self.noise_std * z;
        (next, 1.0 / (1.0 + s * s))
    }
}

/// Gaussian policy `a ~ N(w0 * s + w1, sigma^2)` with
/// `sigma = 1e-3 + exp(theta[2])`.
///
/// The floor keeps importance weights finite; the exponential keeps the
/// standard deviation a smooth, adaptable parameter.
#[derive(Debug, Clone, Default)]
pub struct GaussianPolicy;

const SIGMA_FLOOR: f64 = 1e-3;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl GaussianPolicy {
    fn mean_and_sigma(theta: &[f64], s: f64) -> (f64, f64, f64) {
        assert_eq!(theta.len(), 3, "gaussian policy: theta is [w0, w1, rho]");
        let mean = theta[0] * s + theta[1];
        let exp_rho = theta[2].exp();
        (mean, SIGMA_FLOOR + exp_rho, exp_rho)
    }
}

impl Policy<f64, f64> for GaussianPolicy {
    fn dim(&self) -> usize {
        3
    }

    fn sample_action(&self, theta: &[f64], s: f64, rng: &mut SeededRng) -> f64 {
        let (mean, sigma, _) = Self::mean_and_sigma(theta, s);
        let z: f64 = StandardNormal.sample(rng);
        mean + sigma * z
    }

    fn log_prob(&self, theta: &[f64], s: f64, a: f64) -> f64 {
        let (mean, sigma, _) = Self::mean_and_sigma(theta, s);
        let z = (a - mean) / sigma;
        -0.5 * z * z - sigma.ln() - HALF_LN_2PI
    }

    fn grad_log_prob_into(&self, theta: &[f64], s: f64, a: f64, out: &mut [f64]) {
        let (mean, sigma, exp_rho) = Self::mean_and_sigma(theta, s);
        let z = (a - mean) / sigma;
        let dmean = z / sigma;
        out[0] += dmean * s;
        out[1] += dmean;
        out[2] += (z * z - 1.0) / sigma * exp_rho;
    }

    fn features_into(&self, s: f64, _a: f64, out: &mut [f64]) {
        out[0] += s;
        out[1] += 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_grad::{importance_weight, sample_trajectory};
    use rand::Rng;

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let policy = GaussianPolicy;
        let mut rng = SeededRng::new(21);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..3).map(|_| 2.0 * (rng.random::<f64>() - 0.5)).collect();
            let s = 3.0 * (rng.random::<f64>() - 0.5);
            let a = 3.0 * (rng.random::<f64>() - 0.5);
            let grad = policy.grad_log_prob(&theta, s, a);
            let h = 1e-6;
            for j in 0..3 {
                let mut plus = theta.clone();
                plus[j] += h;
                let mut minus = theta.clone();
                minus[j] -= h;
                let fd = (policy.log_prob(&plus, s, a) - policy.log_prob(&minus, s, a)) / (2.0 * h);
                assert!(
                    (grad[j] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "coord {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn importance_weight_expectation_is_one() {
        let env = PushEnv::default();
        let policy = GaussianPolicy;
        let theta1 = vec![-0.4, 0.1, -0.5];
        let theta2 = vec![-0.35, 0.05, -0.45];
        let mut rng = SeededRng::new(33);
        let reps = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let traj = sample_trajectory(&env, &policy, &theta1, &mut rng);
            let w = importance_weight(&traj, &policy, &theta1, &theta2);
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / reps as f64;
        let var = (sum_sq / reps as f64 - mean * mean).max(0.0);
        let sigma_mean = (var / reps as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma_mean + 1e-3, "E[w] = {mean}");
    }

    #[test]
    fn identical_parameters_give_unit_weight() {
        let env = PushEnv::default();
        let policy = GaussianPolicy;
        let theta = vec![0.2, -0.1, 0.0];
        let mut rng = SeededRng::new(7);
        let traj = sample_trajectory(&env, &policy, &theta, &mut rng);
        let w = importance_weight(&traj, &policy, &theta, &theta);
        assert_eq!(w, 1.0);
    }

    #[test]
    fn sigma_floor_keeps_log_prob_finite() {
        let policy = GaussianPolicy;
        // rho -> -inf collapses exp(rho); the floor keeps everything finite
        let theta = vec![0.0, 0.0, -800.0];
        let lp = policy.log_prob(&theta, 0.5, 10.0);
        assert!(lp.is_finite());
        let g = policy.grad_log_prob(&theta, 0.5, 10.0);
        for v in &g {
            assert!(v.is_finite());
        }
    }
}
