//! Per-agent PPO with independent learners.

mod adam;
mod buffer;
pub mod checkpoint;
mod feeder;
mod nn;
mod policy;
mod toy;
mod train;
mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use buffer::{compute_targets, normalize, RolloutBuffer, Transition};
pub use nn::{Cache, Mlp};
pub use policy::{sample_action, squash_correction, PolicyState, Sample, LOG_STD_MAX, LOG_STD_MIN};
pub use toy::{ToyEnv, ToyReward};
pub use train::{curves_csv, AgentSlot, CurveRow, MultiAgentEnv, MultiStep, Trainer};
pub use update::{clipped_objective, loss_and_grad, ppo_update, BatchItem, LossParts, UpdateStats};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite loss or gradient; update discarded")]
    NonFiniteLoss,
    #[error("rollout buffer holds {len} of {capacity} transitions")]
    BufferNotFull { len: usize, capacity: usize },
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error("environment: {0}")]
    Env(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps_per_update: usize,
    pub total_steps: usize,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs_per_update: usize,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_eps: 0.2,
            lr: 1e-5,
            batch_size: 64,
            steps_per_update: 256,
            total_steps: 70_000,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            epochs_per_update: 10,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    /// Settings that learn within the desk-scale budget.
    pub fn desk_scale() -> Self {
        Self { lr: 1e-3, gamma: 0.9, init_log_std: -1.0, total_steps: 50_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let err = |m: &str| Err(PpoError::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return err("gamma must be in [0, 1)");
        }
        if !(self.clip_eps > 0.0) {
            return err("clip_eps must be positive");
        }
        if !(self.lr > 0.0) {
            return err("lr must be positive");
        }
        if self.batch_size == 0 || self.steps_per_update == 0 || self.epochs_per_update == 0 {
            return err("batch_size, steps_per_update and epochs_per_update must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gae_lambda must be in [0, 1]");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return err("value_coef, entropy_coef must be >= 0 and max_grad_norm > 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden layer sizes must be >= 1");
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return err("init_log_std outside the clamp range");
        }
        Ok(())
    }
}
