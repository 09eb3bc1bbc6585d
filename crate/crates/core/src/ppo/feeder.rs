use crate::env::{Action, AgentId, EnvState, Environment, OBS_DIM};

use super::train::{MultiAgentEnv, MultiStep};
use super::PpoError;

impl MultiAgentEnv for Environment {
    fn agent_count(&self) -> usize {
        Environment::agent_count(self)
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self, agent: usize) -> usize {
        Environment::action_dim(self, AgentId(agent))
    }

    /// Streams follow the building, not the agent slot.
    fn agent_key(&self, agent: usize) -> String {
        format!("building-{}", self.agent_building(AgentId(agent)).id)
    }

    /// Storage idle, no curtailment, unity power factor.
    fn initial_action(&self, agent: usize) -> Vec<f64> {
        let mut a = vec![0.0; MultiAgentEnv::action_dim(self, agent)];
        let n = a.len();
        a[n - 2] = -1.0;
        a
    }

    fn reset(&mut self) -> Result<Vec<Vec<f64>>, PpoError> {
        let obs = Environment::reset(self).map_err(|e| PpoError::Env(e.to_string()))?;
        Ok(obs.into_iter().map(|o| o.0.to_vec()).collect())
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<MultiStep, PpoError> {
        let acts: Vec<(AgentId, Action)> =
            actions.iter().enumerate().map(|(i, a)| (AgentId(i), Action(a.clone()))).collect();
        let r = Environment::step(self, &acts).map_err(|e| PpoError::Env(e.to_string()))?;
        Ok(MultiStep {
            observations: r.observations.into_iter().map(|o| o.0.to_vec()).collect(),
            rewards: r.rewards,
            done: r.done,
        })
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(self.state()).expect("environment state serializes")
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<(), PpoError> {
        let s: EnvState = serde_json::from_value(state.clone()).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        self.restore_state(&s).map_err(|e| PpoError::Checkpoint(e.to_string()))
    }
}
