//! Finite, enumerable MDPs and the linear softmax policy over them.

use rand::Rng;
use thiserror::Error;

use super::{Env, Policy};
use crate::sampling::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("transition row (s={state}, a={action}) sums to {sum}, not 1")]
    BadTransitionRow { state: usize, action: usize, sum: f64 },
    #[error("initial distribution sums to {sum}, not 1")]
    BadInitialDistribution { sum: f64 },
    #[error("reward at (s={state}, a={action}) is {value}, outside [-{r_max}, {r_max}]")]
    RewardOutOfRange { state: usize, action: usize, value: f64, r_max: f64 },
    #[error("discount {gamma} must lie in [0, 1)")]
    BadDiscount { gamma: f64 },
    #[error("empty state or action space")]
    EmptySpace,
}

/// Tabular MDP: transition tensor `P(s' | s, a)`, reward table `R(s, a)`
/// bounded by `r_max`, finite horizon, discount, initial distribution.
#[derive(Debug, Clone)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']`.
    transition: Vec<f64>,
    /// Row-major `[s][a]`.
    reward: Vec<f64>,
    horizon: usize,
    gamma: f64,
    initial: Vec<f64>,
    r_max: f64,
}

const DIST_TOL: f64 = 1e-12;

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        horizon: usize,
        gamma: f64,
        initial: Vec<f64>,
        r_max: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(MdpError::EmptySpace);
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::BadDiscount { gamma });
        }
        assert_eq!(transition.len(), n_states * n_actions * n_states);
        assert_eq!(reward.len(), n_states * n_actions);
        assert_eq!(initial.len(), n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > DIST_TOL {
                    return Err(MdpError::BadTransitionRow { state: s, action: a, sum });
                }
                let r = reward[s * n_actions + a];
                if r.abs() > r_max {
                    return Err(MdpError::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r,
                        r_max,
                    });
                }
            }
        }
        let init_sum: f64 = initial.iter().sum();
        if (init_sum - 1.0).abs() > DIST_TOL {
            return Err(MdpError::BadInitialDistribution { sum: init_sum });
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            horizon,
            gamma,
            initial,
            r_max,
        })
    }

    /// Stochastic chain: action 1 moves right with probability `1 - slip`,
    /// action 0 mirrors it leftward; ends are absorbing in their direction.
    /// Reward grows linearly with the state index (1 at the far end), so
    /// the optimal policy walks right and every step carries signal.
    pub fn chain(n_states: usize, slip: f64, horizon: usize, gamma: f64) -> Self {
        assert!(n_states >= 2);
        assert!((0.0..0.5).contains(&slip));
        let n_actions = 2;
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut reward = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n_states - 1);
            {
                let row = &mut transition[(s * n_actions) * n_states..][..n_states];
                row[left] += 1.0 - slip;
                row[right] += slip;
            }
            {
                let row = &mut transition[(s * n_actions + 1) * n_states..][..n_states];
                row[right] += 1.0 - slip;
                row[left] += slip;
            }
            let r = s as f64 / (n_states - 1) as f64;
            reward[s * n_actions] = r;
            reward[s * n_actions + 1] = r;
        }
        let mut initial = vec![0.0; n_states];
        initial[0] = 1.0;
        Self::new(n_states, n_actions, transition, reward, horizon, gamma, initial, 1.0)
            .expect("chain construction is valid")
    }

    /// Single-state bandit: one state, `rewards.len()` actions, horizon 1.
    pub fn bandit(rewards: &[f64], gamma: f64) -> Self {
        let n_actions = rewards.len();
        let r_max = rewards.iter().fold(1.0f64, |m, r| m.max(r.abs()));
        Self::new(
            1,
            n_actions,
            vec![1.0; n_actions],
            rewards.to_vec(),
            1,
            gamma,
            vec![1.0],
            r_max,
        )
        .expect("bandit construction is valid")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    fn sample_categorical(probs: &[f64], rng: &mut SeededRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

impl Env for Mdp {
    type State = usize;
    type Action = usize;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn initial_state(&self, rng: &mut SeededRng) -> usize {
        Self::sample_categorical(&self.initial, rng)
    }

    fn step(&self, s: usize, a: usize, rng: &mut SeededRng) -> (usize, f64) {
        let next = Self::sample_categorical(self.transition_row(s, a), rng);
        (next, self.reward(s, a))
    }
}

/// Linear softmax policy `pi(a | s) proportional to exp(theta . phi(s, a))`.
#[derive(Debug, Clone)]
pub struct TabularSoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][feature]`.
    features: Vec<f64>,
    feat_dim: usize,
}

impl TabularSoftmaxPolicy {
    /// Indicator features: one coordinate per `(s, a)` pair.
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let feat_dim = n_states * n_actions;
        let mut features = vec![0.0; n_states * n_actions * feat_dim];
        for s in 0..n_states {
            for a in 0..n_actions {
                let idx = s * n_actions + a;
                features[idx * feat_dim + idx] = 1.0;
            }
        }
        Self {
            n_states,
            n_actions,
            features,
            feat_dim,
        }
    }

    /// Arbitrary feature table, row-major `[s][a][feature]`.
    pub fn with_features(
        n_states: usize,
        n_actions: usize,
        feat_dim: usize,
        features: Vec<f64>,
    ) -> Self {
        assert_eq!(features.len(), n_states * n_actions * feat_dim);
        Self {
            n_states,
            n_actions,
            features,
            feat_dim,
        }
    }

    fn feature_row(&self, s: usize, a: usize) -> &[f64] {
        let idx = s * self.n_actions + a;
        &self.features[idx * self.feat_dim..][..self.feat_dim]
    }

    /// Softmax action distribution at state `s`, computed stably.
    pub fn action_probs(&self, theta: &[f64], s: usize) -> Vec<f64> {
        assert_eq!(theta.len(), self.feat_dim, "policy: theta dimension mismatch");
        assert!(s < self.n_states, "policy: state out of range");
        let logits: Vec<f64> = (0..self.n_actions)
            .map(|a| {
                self.feature_row(s, a)
                    .iter()
                    .zip(theta)
                    .map(|(f, t)| f * t)
                    .sum()
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= z;
        }
        probs
    }
}

impl Policy<usize, usize> for TabularSoftmaxPolicy {
    fn dim(&self) -> usize {
        self.feat_dim
    }

    fn sample_action(&self, theta: &[f64], s: usize, rng: &mut SeededRng) -> usize {
        Mdp::sample_categorical(&self.action_probs(theta, s), rng)
    }

    fn log_prob(&self, theta: &[f64], s: usize, a: usize) -> f64 {
        assert!(a < self.n_actions, "policy: action out of range");
        self.action_probs(theta, s)[a].ln()
    }

    fn grad_log_prob_into(&self, theta: &[f64], s: usize, a: usize, out: &mut [f64]) {
        // grad log pi(a|s) = phi(s,a) - sum_b pi(b|s) phi(s,b)
        let probs = self.action_probs(theta, s);
        for (o, f) in out.iter_mut().zip(self.feature_row(s, a)) {
            *o += f;
        }
        for (b, &p) in probs.iter().enumerate() {
            for (o, f) in out.iter_mut().zip(self.feature_row(s, b)) {
                *o -= p * f;
            }
        }
    }

    fn features_into(&self, s: usize, a: usize, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(self.feature_row(s, a)) {
            *o += f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_grad::sample_trajectory;

    #[test]
    fn transition_rows_are_distributions() {
        let mdp = Mdp::chain(5, 0.1, 5, 0.99);
        for s in 0..5 {
            for a in 0..2 {
                let sum: f64 = mdp.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let err = Mdp::new(
            1,
            1,
            vec![0.7],
            vec![0.0],
            3,
            0.9,
            vec![1.0],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, MdpError::BadTransitionRow { .. }));
        let err = Mdp::new(1, 1, vec![1.0], vec![5.0], 3, 0.9, vec![1.0], 1.0).unwrap_err();
        assert!(matches!(err, MdpError::RewardOutOfRange { .. }));
        let err = Mdp::new(1, 1, vec![1.0], vec![0.5], 3, 1.0, vec![1.0], 1.0).unwrap_err();
        assert!(matches!(err, MdpError::BadDiscount { .. }));
    }

    #[test]
    fn softmax_probabilities_normalize() {
        let policy = TabularSoftmaxPolicy::one_hot(3, 2);
        let theta: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        for s in 0..3 {
            let probs = policy.action_probs(&theta, s);
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn score_identity_holds() {
        // sum_a pi(a|s) grad log pi(a|s) = 0
        let policy = TabularSoftmaxPolicy::one_hot(4, 3);
        let theta: Vec<f64> = (0..12).map(|i| (i as f64 * 0.17).sin()).collect();
        for s in 0..4 {
            let probs = policy.action_probs(&theta, s);
            let mut acc = vec![0.0; 12];
            for a in 0..3 {
                let g = policy.grad_log_prob(&theta, s, a);
                for (ac, gi) in acc.iter_mut().zip(&g) {
                    *ac += probs[a] * gi;
                }
            }
            for v in &acc {
                assert!(v.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn deterministic_mdp_and_policy_give_unique_trajectory() {
        // slip 0 chain with an overwhelming right preference
        let mdp = Mdp::chain(4, 0.0, 4, 0.9);
        let policy = TabularSoftmaxPolicy::one_hot(4, 2);
        let mut theta = vec![0.0; 8];
        for s in 0..4 {
            theta[s * 2 + 1] = 60.0; // softmax saturates at action 1
        }
        let t1 = sample_trajectory(&mdp, &policy, &theta, &mut SeededRng::new(1));
        let t2 = sample_trajectory(&mdp, &policy, &theta, &mut SeededRng::new(999));
        let states1: Vec<usize> = t1.steps.iter().map(|s| s.state).collect();
        let states2: Vec<usize> = t2.steps.iter().map(|s| s.state).collect();
        assert_eq!(states1, vec![0, 1, 2, 3]);
        assert_eq!(states1, states2);
    }

    #[test]
    fn zero_reward_trajectories_have_zero_return() {
        let mdp = Mdp::chain(3, 0.1, 6, 0.95);
        // zero out rewards via a custom MDP
        let mdp = Mdp::new(
            3,
            2,
            mdp.transition.clone(),
            vec![0.0; 6],
            6,
            0.95,
            mdp.initial.clone(),
            1.0,
        )
        .unwrap();
        let policy = TabularSoftmaxPolicy::one_hot(3, 2);
        let theta = vec![0.1; 6];
        let mut rng = SeededRng::new(5);
        let traj = sample_trajectory(&mdp, &policy, &theta, &mut rng);
        assert_eq!(traj.total_discounted_reward(0.95), 0.0);
        assert_eq!(traj.steps.len(), 6);
    }

    #[test]
    fn empirical_state_visits_match_markov_marginals() {
        // 2-state chain: empirical visit frequencies at each step versus the
        // matrix-power marginals of the policy-induced chain, within 3 sigma.
        let mdp = Mdp::chain(2, 0.2, 4, 0.9);
        let policy = TabularSoftmaxPolicy::one_hot(2, 2);
        let theta = vec![0.4, -0.1, 0.3, 0.8];

        // exact marginals: mu_{t+1}(s') = sum_s mu_t(s) sum_a pi(a|s) P(s'|s,a)
        let mut mu = vec![1.0, 0.0];
        let mut marginals = vec![mu.clone()];
        for _ in 1..4 {
            let mut next = vec![0.0; 2];
            for s in 0..2 {
                let probs = policy.action_probs(&theta, s);
                for a in 0..2 {
                    for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
                        next[sp] += mu[s] * probs[a] * p;
                    }
                }
            }
            marginals.push(next.clone());
            mu = next;
        }

        let rollouts = 100_000;
        let mut counts = vec![[0u64; 2]; 4];
        let mut rng = SeededRng::new(31);
        for _ in 0..rollouts {
            let traj = sample_trajectory(&mdp, &policy, &theta, &mut rng);
            for (t, step) in traj.steps.iter().enumerate() {
                counts[t][step.state] += 1;
            }
        }
        for t in 0..4 {
            for s in 0..2 {
                let p = marginals[t][s];
                let freq = counts[t][s] as f64 / rollouts as f64;
                let sigma = (p * (1.0 - p) / rollouts as f64).sqrt();
                assert!(
                    (freq - p).abs() <= 3.0 * sigma + 1e-9,
                    "t={t} s={s}: {freq} vs {p}"
                );
            }
        }
    }
}
