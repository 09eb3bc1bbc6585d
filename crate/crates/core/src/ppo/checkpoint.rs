//! On-disk training state.
//!
//! A checkpoint directory holds `trainer.json` (loop counters, curves,
//! environment state) plus one `agent_NNN.json` per agent. Each agent file is
//! enough to evaluate that agent; all of them together resume training
//! bit-exactly. Files are written to a temporary name and renamed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::policy::PolicyState;
use super::train::{AgentSlot, CurveRow, MultiAgentEnv, Trainer};
use super::{PpoConfig, PpoError};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const TRAINER_FILE: &str = "trainer.json";

pub fn agent_file(agent: usize) -> String {
    format!("agent_{agent:03}.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerFile {
    version: u32,
    config_hash: String,
    ppo: PpoConfig,
    agents: usize,
    steps: usize,
    updates: usize,
    episodes: usize,
    obs: Vec<Vec<f64>>,
    curves: Vec<CurveRow>,
    env_state: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentFile {
    version: u32,
    config_hash: String,
    agent: usize,
    key: String,
    obs_dim: usize,
    action_dim: usize,
    slot: AgentSlot,
}

fn io(path: &Path, e: impl std::fmt::Display) -> PpoError {
    PpoError::Checkpoint(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, text: &str) -> Result<(), PpoError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PpoError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| io(path, e))
}

/// Writes every file and returns their paths. Agent files go first so a
/// crash never leaves a trainer file pointing at stale agents.
pub fn save<E: MultiAgentEnv>(
    dir: &Path,
    trainer: &Trainer,
    env: &E,
    config_hash: &str,
) -> Result<Vec<PathBuf>, PpoError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for (i, slot) in trainer.agents.iter().enumerate() {
        let f = AgentFile {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            agent: i,
            key: env.agent_key(i),
            obs_dim: env.obs_dim(),
            action_dim: env.action_dim(i),
            slot: slot.clone(),
        };
        let path = dir.join(agent_file(i));
        write_atomic(&path, &serde_json::to_string(&f).map_err(|e| io(&path, e))?)?;
        written.push(path);
    }
    let t = TrainerFile {
        version: CHECKPOINT_VERSION,
        config_hash: config_hash.into(),
        ppo: trainer.cfg.clone(),
        agents: trainer.agents.len(),
        steps: trainer.steps,
        updates: trainer.updates,
        episodes: trainer.episodes,
        obs: trainer.obs.clone(),
        curves: trainer.curves.clone(),
        env_state: env.save_state(),
    };
    let path = dir.join(TRAINER_FILE);
    write_atomic(&path, &serde_json::to_string(&t).map_err(|e| io(&path, e))?)?;
    written.push(path);
    Ok(written)
}

fn load_agent<E: MultiAgentEnv>(dir: &Path, env: &E, i: usize) -> Result<AgentFile, PpoError> {
    let path = dir.join(agent_file(i));
    if !path.exists() {
        return Err(PpoError::Checkpoint(format!("missing checkpoint for agent {i}: {}", path.display())));
    }
    let f: AgentFile = read_json(&path)?;
    if f.version != CHECKPOINT_VERSION {
        return Err(io(&path, format!("version {} not supported", f.version)));
    }
    if f.agent != i || f.obs_dim != env.obs_dim() || f.action_dim != env.action_dim(i) {
        return Err(io(
            &path,
            format!(
                "agent {} with obs {} / action {} does not fit slot {i} (obs {}, action {})",
                f.agent,
                f.obs_dim,
                f.action_dim,
                env.obs_dim(),
                env.action_dim(i)
            ),
        ));
    }
    Ok(f)
}

/// Policies for evaluation. Any scenario with a matching roster shape is accepted.
pub fn load_policies<E: MultiAgentEnv>(dir: &Path, env: &E) -> Result<Vec<PolicyState>, PpoError> {
    (0..env.agent_count()).map(|i| load_agent(dir, env, i).map(|f| f.slot.policy)).collect()
}

/// Restores a trainer and the environment state it was saved with.
pub fn resume<E: MultiAgentEnv>(dir: &Path, env: &mut E, config_hash: &str) -> Result<Trainer, PpoError> {
    let path = dir.join(TRAINER_FILE);
    let t: TrainerFile = read_json(&path)?;
    if t.version != CHECKPOINT_VERSION {
        return Err(io(&path, format!("version {} not supported", t.version)));
    }
    if t.config_hash != config_hash {
        return Err(io(&path, format!("config hash {} does not match {config_hash}", t.config_hash)));
    }
    if t.agents != env.agent_count() {
        return Err(io(&path, format!("{} agents saved, scenario has {}", t.agents, env.agent_count())));
    }
    let mut agents = Vec::with_capacity(t.agents);
    for i in 0..t.agents {
        let f = load_agent(dir, env, i)?;
        if f.config_hash != config_hash {
            return Err(PpoError::Checkpoint(format!("agent {i} was saved by a different run")));
        }
        agents.push(f.slot);
    }
    env.load_state(&t.env_state)?;
    Ok(Trainer {
        cfg: t.ppo,
        agents,
        obs: t.obs,
        steps: t.steps,
        updates: t.updates,
        episodes: t.episodes,
        curves: t.curves,
        exec: Default::default(),
    })
}

/// True when `dir` holds a trainer checkpoint.
pub fn exists(dir: &Path) -> bool {
    dir.join(TRAINER_FILE).is_file()
}
