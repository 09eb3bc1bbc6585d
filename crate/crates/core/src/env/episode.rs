//! Full-horizon evaluation rollouts.

use crate::building::Controller;
use crate::metrics::{AgentRecord, BuildingMeta, EpisodeLog};

use super::{rbc_action, Action, AgentId, EnvError, Environment};

/// A deterministic per-agent controller. Must be callable from worker threads.
pub trait AgentPolicy: Sync {
    fn act(&self, obs: &[f64]) -> Vec<f64>;
}

/// Returns the same raw action for every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy(pub Vec<f64>);

impl AgentPolicy for ConstantPolicy {
    fn act(&self, _obs: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

pub enum Controllers<'a> {
    /// Every building, learning agents included, follows the schedule.
    RbcOnly,
    /// One policy per agent, indexed by `AgentId`.
    Policies(&'a [&'a dyn AgentPolicy]),
}

/// Resets `env` and rolls out to the horizon (or an earlier failure).
pub fn run_episode(env: &mut Environment, controllers: Controllers<'_>) -> Result<EpisodeLog, EnvError> {
    if let Controllers::Policies(p) = &controllers {
        if p.len() != env.agent_count() {
            return Err(EnvError::Actions(format!(
                "{} policies for {} agents",
                p.len(),
                env.agent_count()
            )));
        }
    }
    let rbc_only = matches!(controllers, Controllers::RbcOnly);
    let meta = env
        .buildings()
        .iter()
        .map(|b| BuildingMeta {
            bus: b.bus,
            building_type: b.building_type.clone(),
            controller: if rbc_only { Controller::Rbc } else { b.controller },
        })
        .collect();
    let mut log = EpisodeLog::new(env.config().dt, meta);
    let mut obs = env.reset()?;
    let rbc = env.config().rbc.clone();
    while !env.is_done() {
        let actions: Vec<(AgentId, Action)> = env
            .agent_ids()
            .map(|id| {
                let a = match &controllers {
                    Controllers::RbcOnly => rbc_action(env.agent_building(id), env.time(), &rbc),
                    Controllers::Policies(p) => Action(p[id.0].act(obs[id.0].as_slice())),
                };
                (id, a)
            })
            .collect();
        let res = env.step(&actions)?;
        let records = env
            .buildings()
            .iter()
            .zip(env.last_applied())
            .zip(env.building_rewards())
            .map(|((b, a), &reward)| AgentRecord {
                action: [a.u_hvac, a.u_dhw, Some(a.curtailment), Some(a.phase_lag)],
                soc: [
                    b.hvac_tes.as_ref().map(|d| d.soc),
                    b.dhw_tes.as_ref().map(|d| d.soc),
                    b.battery.as_ref().map(|d| d.soc),
                ],
                reward,
            })
            .collect();
        log.push(res.voltages, records);
        obs = res.observations;
    }
    Ok(log)
}
