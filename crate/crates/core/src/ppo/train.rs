//! Multi-agent training loop: one synchronous rollout, independent updates.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, ExecMode};
use crate::rng;

use super::buffer::{RolloutBuffer, Transition};
use super::policy::{sample_action, PolicyState};
use super::update::ppo_update;
use super::{PpoConfig, PpoError};

pub struct MultiStep {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// What the trainer needs from an environment.
pub trait MultiAgentEnv {
    fn agent_count(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self, agent: usize) -> usize;
    /// Names the agent's random streams. Agents with equal keys draw
    /// identical initial weights and samples.
    fn agent_key(&self, agent: usize) -> String {
        agent.to_string()
    }
    /// Action the policies start out near. Zero by default.
    fn initial_action(&self, agent: usize) -> Vec<f64> {
        vec![0.0; self.action_dim(agent)]
    }
    fn reset(&mut self) -> Result<Vec<Vec<f64>>, PpoError>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<MultiStep, PpoError>;
    fn save_state(&self) -> serde_json::Value;
    fn load_state(&mut self, state: &serde_json::Value) -> Result<(), PpoError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSlot {
    pub policy: PolicyState,
    pub sample_rng: ChaCha8Rng,
    pub update_rng: ChaCha8Rng,
    pub buffer: RolloutBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub step: usize,
    pub agent: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("update,step,agent,mean_reward,policy_loss,value_loss,entropy,approx_kl,clip_fraction\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.update, r.step, r.agent, r.mean_reward, r.policy_loss, r.value_loss, r.entropy, r.approx_kl, r.clip_fraction
        )
        .unwrap();
    }
    out
}

pub struct Trainer {
    pub cfg: PpoConfig,
    pub agents: Vec<AgentSlot>,
    pub obs: Vec<Vec<f64>>,
    pub steps: usize,
    pub updates: usize,
    pub episodes: usize,
    pub curves: Vec<CurveRow>,
    pub exec: ExecMode,
}

impl Trainer {
    pub fn new<E: MultiAgentEnv>(env: &mut E, cfg: PpoConfig, seed: u64) -> Result<Self, PpoError> {
        cfg.validate()?;
        let agents = (0..env.agent_count())
            .map(|i| {
                let key = env.agent_key(i);
                let mut init = rng::stream(seed, &format!("policy-init/{key}"));
                let mut policy = PolicyState::new(env.obs_dim(), env.action_dim(i), &cfg.hidden, cfg.init_log_std, &mut init);
                policy.center_on(&env.initial_action(i));
                AgentSlot {
                    policy,
                    sample_rng: rng::stream(seed, &format!("sampling/{key}")),
                    update_rng: rng::stream(seed, &format!("minibatch/{key}")),
                    buffer: RolloutBuffer::new(cfg.steps_per_update),
                }
            })
            .collect();
        let obs = env.reset()?;
        Ok(Self { cfg, agents, obs, steps: 0, updates: 0, episodes: 0, curves: Vec::new(), exec: ExecMode::default() })
    }

    pub fn policies(&self) -> Vec<&PolicyState> {
        self.agents.iter().map(|a| &a.policy).collect()
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.cfg.total_steps
    }

    /// One environment step for every agent; runs the updates when the
    /// buffers fill. Returns true if an update happened.
    pub fn step<E: MultiAgentEnv>(&mut self, env: &mut E) -> Result<bool, PpoError> {
        let obs = &self.obs;
        let samples = par::map_mut(self.exec, &mut self.agents, |i, a| {
            let s = sample_action(&a.policy, &obs[i], false, &mut a.sample_rng);
            let v = a.policy.value(&obs[i]);
            (s, v)
        });
        let actions: Vec<Vec<f64>> = samples.iter().map(|(s, _)| s.action.clone()).collect();
        let res = env.step(&actions)?;
        for (i, ((s, v), a)) in samples.into_iter().zip(self.agents.iter_mut()).enumerate() {
            a.buffer.push(Transition {
                obs: std::mem::take(&mut self.obs[i]),
                pre: s.pre,
                log_prob: s.log_prob,
                reward: res.rewards[i],
                value: v,
                done: res.done,
            });
        }
        self.obs = if res.done {
            self.episodes += 1;
            env.reset()?
        } else {
            res.observations
        };
        self.steps += 1;

        if !self.steps.is_multiple_of(self.cfg.steps_per_update) {
            return Ok(false);
        }
        let obs = &self.obs;
        let cfg = &self.cfg;
        let results = par::map_mut(self.exec, &mut self.agents, |i, a| {
            let mean_reward = a.buffer.mean_reward();
            let last_value = a.policy.value(&obs[i]);
            let AgentSlot { policy, update_rng, buffer, .. } = a;
            ppo_update(policy, buffer, last_value, cfg, update_rng).map(|s| (mean_reward, s))
        });
        self.updates += 1;
        for (agent, r) in results.into_iter().enumerate() {
            let (mean_reward, s) = r?;
            self.curves.push(CurveRow {
                update: self.updates,
                step: self.steps,
                agent,
                mean_reward,
                policy_loss: s.policy_loss,
                value_loss: s.value_loss,
                entropy: s.entropy,
                approx_kl: s.approx_kl,
                clip_fraction: s.clip_fraction,
            });
        }
        Ok(true)
    }

    /// Trains until `total_steps`. `after_update` runs after every update and
    /// may stop training early.
    pub fn run<E, F>(&mut self, env: &mut E, mut after_update: F) -> Result<(), PpoError>
    where
        E: MultiAgentEnv,
        F: FnMut(&Trainer, &E) -> Result<ControlFlow<()>, PpoError>,
    {
        while !self.is_finished() {
            if self.step(env)? && after_update(self, env)?.is_break() {
                break;
            }
        }
        Ok(())
    }

    /// Mean reward of the last update, averaged over agents.
    pub fn last_mean_reward(&self) -> Option<f64> {
        let rows: Vec<&CurveRow> = self.curves.iter().filter(|r| r.update == self.updates).collect();
        (!rows.is_empty()).then(|| rows.iter().map(|r| r.mean_reward).sum::<f64>() / rows.len() as f64)
    }
}
