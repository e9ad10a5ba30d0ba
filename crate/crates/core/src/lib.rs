//! Stochastic optimization toolkit built around history-gradient batch-size
//! adaptation: variance-reduced finite-sum optimizers (SVRG- and
//! SPIDER-style), an adaptive SGD, variance-reduced policy gradient over
//! enumerable toy MDPs, a statistical oracle suite, and a benchmark
//! harness.

pub mod harness;
pub mod objectives;
pub mod oracles;
pub mod policy_grad;
pub mod sampling;
pub mod vr_optim;
