//! Actor-critic parameters and the tanh-squashed Gaussian policy.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::AgentPolicy;

use super::adam::Adam;
use super::nn::Mlp;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub actor: Mlp,
    /// One learned log standard deviation per action, state independent.
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub optimizer: Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Squashed action in (−1, 1).
    pub action: Vec<f64>,
    /// Gaussian sample before the tanh.
    pub pre: Vec<f64>,
    pub log_prob: f64,
}

/// log(1 − tanh(z)²), written to stay finite for large |z|.
fn log_dtanh(z: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (LN_2 - z - softplus(-2.0 * z))
}

pub fn squash_correction(pre: &[f64]) -> f64 {
    pre.iter().map(|&z| log_dtanh(z)).sum()
}

impl PolicyState {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(&sizes(act_dim), 0.01, rng);
        let critic = Mlp::new(&sizes(1), 1.0, rng);
        let n = actor.n_params() + act_dim + critic.n_params();
        Self { actor, log_std: vec![init_log_std; act_dim], critic, optimizer: Adam::new(n) }
    }

    /// Shifts the actor's output bias so the deterministic action starts at
    /// `action` (squashed space, held inside ±0.95 to keep gradients alive).
    pub fn center_on(&mut self, action: &[f64]) {
        for (b, a) in self.actor.output_bias_mut().iter_mut().zip(action) {
            *b = a.clamp(-0.95, 0.95).atanh();
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn n_params(&self) -> usize {
        self.actor.n_params() + self.log_std.len() + self.critic.n_params()
    }

    /// `[actor | log_std | critic]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.actor.params);
        p.extend_from_slice(&self.log_std);
        p.extend_from_slice(&self.critic.params);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.actor.n_params());
        let (s, c) = rest.split_at(self.log_std.len());
        self.actor.params.copy_from_slice(a);
        self.log_std.copy_from_slice(s);
        self.critic.params.copy_from_slice(c);
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward(obs)
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Diagonal Gaussian log-density of `pre` around `mean`.
    pub fn gaussian_log_prob(&self, mean: &[f64], pre: &[f64]) -> f64 {
        self.clamped_log_std()
            .iter()
            .zip(mean.iter().zip(pre))
            .map(|(&ls, (&m, &z))| {
                let u = (z - m) / ls.exp();
                -0.5 * u * u - ls - HALF_LN_2PI
            })
            .sum()
    }

    /// Log-density of the squashed action `tanh(pre)`.
    pub fn log_prob(&self, obs: &[f64], pre: &[f64]) -> f64 {
        self.gaussian_log_prob(&self.mean(obs), pre) - squash_correction(pre)
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.clamped_log_std().iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
    }
}

/// Draws an action, or returns the squashed mean when `deterministic`.
pub fn sample_action<R: Rng + ?Sized>(ps: &PolicyState, obs: &[f64], deterministic: bool, rng: &mut R) -> Sample {
    let mean = ps.mean(obs);
    let pre: Vec<f64> = if deterministic {
        mean.clone()
    } else {
        ps.clamped_log_std()
            .iter()
            .zip(&mean)
            .map(|(ls, m)| {
                let e: f64 = StandardNormal.sample(rng);
                m + ls.exp() * e
            })
            .collect()
    };
    let log_prob = ps.gaussian_log_prob(&mean, &pre) - squash_correction(&pre);
    Sample { action: pre.iter().map(|z| z.tanh()).collect(), pre, log_prob }
}

impl AgentPolicy for PolicyState {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.mean(obs).iter().map(|z| z.tanh()).collect()
    }
}
