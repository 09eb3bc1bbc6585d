//! Tiny environments with known optima, used to check the learner.

use serde::{Deserialize, Serialize};

use super::train::{MultiAgentEnv, MultiStep};
use super::PpoError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ToyReward {
    /// −(a − target)² on the first action component.
    Quadratic { target: f64 },
    /// Same reward every step, whatever the action.
    Constant(f64),
}

/// Observations cycle through `horizon` points on the unit circle; the
/// reward ignores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnv {
    pub keys: Vec<String>,
    pub horizon: usize,
    pub reward: ToyReward,
    t: usize,
}

impl ToyEnv {
    pub fn new(agents: usize, horizon: usize, reward: ToyReward) -> Self {
        Self { keys: (0..agents).map(|i| i.to_string()).collect(), horizon, reward, t: 0 }
    }

    /// Agents sharing a key share random streams.
    pub fn with_keys(keys: Vec<String>, horizon: usize, reward: ToyReward) -> Self {
        Self { keys, horizon, reward, t: 0 }
    }

    pub fn observation(&self, t: usize) -> Vec<f64> {
        let phase = std::f64::consts::TAU * t as f64 / self.horizon as f64;
        vec![phase.cos(), phase.sin()]
    }

    pub fn reward_of(&self, action: &[f64]) -> f64 {
        match self.reward {
            ToyReward::Quadratic { target } => -(action[0] - target).powi(2),
            ToyReward::Constant(r) => r,
        }
    }
}

impl MultiAgentEnv for ToyEnv {
    fn agent_count(&self) -> usize {
        self.keys.len()
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self, _agent: usize) -> usize {
        1
    }

    fn agent_key(&self, agent: usize) -> String {
        self.keys[agent].clone()
    }

    fn reset(&mut self) -> Result<Vec<Vec<f64>>, PpoError> {
        self.t = 0;
        Ok(vec![self.observation(0); self.keys.len()])
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<MultiStep, PpoError> {
        if actions.len() != self.keys.len() {
            return Err(PpoError::Env(format!("{} actions for {} agents", actions.len(), self.keys.len())));
        }
        let rewards = actions.iter().map(|a| self.reward_of(a)).collect();
        self.t += 1;
        let done = self.t >= self.horizon;
        Ok(MultiStep { observations: vec![self.observation(self.t); self.keys.len()], rewards, done })
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::json!({ "t": self.t })
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<(), PpoError> {
        self.t = state["t"].as_u64().ok_or_else(|| PpoError::Checkpoint("toy state lacks t".into()))? as usize;
        Ok(())
    }
}
