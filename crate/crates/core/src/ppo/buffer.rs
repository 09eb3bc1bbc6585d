//! Per-agent rollout storage and GAE targets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Pre-squash action.
    pub pre: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The episode ended with this transition; no bootstrap past it.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    capacity: usize,
    items: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: Vec::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: Transition) {
        assert!(!self.is_full(), "rollout buffer overflow");
        self.items.push(t);
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn mean_reward(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().map(|t| t.reward).sum::<f64>() / self.items.len() as f64
    }
}

/// GAE(λ) advantages and λ-returns. `last_value` bootstraps the state after
/// the final transition unless that transition is terminal.
pub fn compute_targets(items: &[Transition], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = items.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let tr = &items[t];
        let (next_value, live) = if tr.done {
            (0.0, 0.0)
        } else if t + 1 < n {
            (items[t + 1].value, 1.0)
        } else {
            (last_value, 1.0)
        };
        let delta = tr.reward + gamma * next_value * live - tr.value;
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(items).map(|(a, tr)| a + tr.value).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean, unit variance. Leaves constant input at 0.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for x in xs.iter_mut() {
        *x = if sd > 1e-12 { (*x - mean) / (sd + 1e-8) } else { 0.0 };
    }
}
