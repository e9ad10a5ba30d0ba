//! Exhaustive-enumeration oracle for tabular MDPs: exact expected return
//! `J(theta)` and exact policy gradient
//! `grad J = E[R(tau) grad log p(tau | theta)]`, summed over every
//! positive-probability trajectory. Metric and test machinery only.

use thiserror::Error;

use super::tabular::{Mdp, TabularSoftmaxPolicy};
use super::Policy;

#[derive(Debug, Error, PartialEq)]
pub enum EnumerationError {
    #[error("state space too large to enumerate: (|S| * |A|)^H = {bound:.3e} exceeds {limit:.1e}")]
    TooLarge { bound: f64, limit: f64 },
}

const ENUMERATION_LIMIT: f64 = 2e7;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPolicyEval {
    /// Expected discounted return `J(theta)`.
    pub value: f64,
    /// Exact gradient of `J` at `theta`.
    pub grad: Vec<f64>,
}

/// Exact `J(theta)` and `grad J(theta)` by trajectory enumeration.
pub fn exact_policy_eval(
    mdp: &Mdp,
    policy: &TabularSoftmaxPolicy,
    theta: &[f64],
) -> Result<ExactPolicyEval, EnumerationError> {
    let bound =
        ((mdp.n_states() * mdp.n_actions()) as f64).powi(super::Env::horizon(mdp) as i32);
    if bound > ENUMERATION_LIMIT {
        return Err(EnumerationError::TooLarge {
            bound,
            limit: ENUMERATION_LIMIT,
        });
    }

    let d = policy.dim();
    let mut eval = ExactPolicyEval {
        value: 0.0,
        grad: vec![0.0; d],
    };
    let mut score = vec![0.0; d];
    let gamma = super::Env::discount(mdp);
    let horizon = super::Env::horizon(mdp);

    // Cache per-state action probabilities and score gradients at theta.
    let probs: Vec<Vec<f64>> = (0..mdp.n_states())
        .map(|s| policy.action_probs(theta, s))
        .collect();
    let scores: Vec<Vec<Vec<f64>>> = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| policy.grad_log_prob(theta, s, a))
                .collect()
        })
        .collect();

    for (s0, &rho) in mdp.initial_distribution().iter().enumerate() {
        if rho > 0.0 {
            recurse(
                mdp, &probs, &scores, s0, 0, horizon, gamma, rho, 1.0, 0.0, &mut score, &mut eval,
            );
        }
    }
    Ok(eval)
}

/// Exact gradient only; see [`exact_policy_eval`].
pub fn exact_policy_gradient(
    mdp: &Mdp,
    policy: &TabularSoftmaxPolicy,
    theta: &[f64],
) -> Result<Vec<f64>, EnumerationError> {
    exact_policy_eval(mdp, policy, theta).map(|e| e.grad)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    mdp: &Mdp,
    probs: &[Vec<f64>],
    scores: &[Vec<Vec<f64>>],
    s: usize,
    t: usize,
    horizon: usize,
    gamma: f64,
    prob: f64,
    disc: f64,
    reward_acc: f64,
    score: &mut [f64],
    eval: &mut ExactPolicyEval,
) {
    if t == horizon {
        eval.value += prob * reward_acc;
        for (g, sc) in eval.grad.iter_mut().zip(score.iter()) {
            *g += prob * reward_acc * sc;
        }
        return;
    }
    for a in 0..mdp.n_actions() {
        let pa = probs[s][a];
        if pa == 0.0 {
            continue;
        }
        let reward_here = reward_acc + disc * mdp.reward(s, a);
        for (sc, g) in score.iter_mut().zip(&scores[s][a]) {
            *sc += g;
        }
        let row = mdp.transition_row(s, a);
        for (sp, &p) in row.iter().enumerate() {
            if p > 0.0 {
                recurse(
                    mdp,
                    probs,
                    scores,
                    sp,
                    t + 1,
                    horizon,
                    gamma,
                    prob * pa * p,
                    disc * gamma,
                    reward_here,
                    score,
                    eval,
                );
            }
        }
        for (sc, g) in score.iter_mut().zip(&scores[s][a]) {
            *sc -= g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_reward_mdp_has_zero_gradient() {
        // score identity: rewards independent of the trajectory cancel
        let mdp = Mdp::bandit(&[0.7, 0.7], 0.9);
        let policy = TabularSoftmaxPolicy::one_hot(1, 2);
        let eval = exact_policy_eval(&mdp, &policy, &[0.3, -0.6]).unwrap();
        assert!((eval.value - 0.7).abs() < 1e-12);
        for g in &eval.grad {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn bandit_gradient_matches_closed_form() {
        // J = p0 r0 + p1 r1; grad J = (r0 - r1) p0 p1 (phi0 - phi1)
        let mdp = Mdp::bandit(&[1.0, 0.0], 0.9);
        let policy = TabularSoftmaxPolicy::one_hot(1, 2);
        let theta = [0.4, -0.2];
        let probs = policy.action_probs(&theta, 0);
        let eval = exact_policy_eval(&mdp, &policy, &theta).unwrap();
        assert!((eval.value - probs[0]).abs() < 1e-12);
        let coeff = probs[0] * probs[1];
        assert!((eval.grad[0] - coeff).abs() < 1e-12);
        assert!((eval.grad[1] + coeff).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_of_exact_value() {
        let mdp = Mdp::chain(4, 0.15, 4, 0.9);
        let policy = TabularSoftmaxPolicy::one_hot(4, 2);
        let theta: Vec<f64> = (0..8).map(|i| 0.2 * (i as f64 * 0.9).cos()).collect();
        let eval = exact_policy_eval(&mdp, &policy, &theta).unwrap();
        let h = 1e-6;
        for j in 0..8 {
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            let fd = (exact_policy_eval(&mdp, &policy, &plus).unwrap().value
                - exact_policy_eval(&mdp, &policy, &minus).unwrap().value)
                / (2.0 * h);
            assert!(
                (eval.grad[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "coord {j}: {} vs {fd}",
                eval.grad[j]
            );
        }
    }

    #[test]
    fn oversized_spaces_are_rejected() {
        let mdp = Mdp::chain(10, 0.1, 12, 0.99);
        let policy = TabularSoftmaxPolicy::one_hot(10, 2);
        let err = exact_policy_eval(&mdp, &policy, &vec![0.0; 20]).unwrap_err();
        assert!(matches!(err, EnumerationError::TooLarge { .. }));
    }
}
