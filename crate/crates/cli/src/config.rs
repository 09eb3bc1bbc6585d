//! Run configuration: a preset plus JSON overrides, merged key by key.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use feeder_marl::env::{NetworkSource, ScenarioConfig};
use feeder_marl::ppo::PpoConfig;
use feeder_marl::rng::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperScale,
    DeskScale,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::PaperScale => "paper-scale",
            Preset::DeskScale => "desk-scale",
        })
    }
}

/// Fully resolved configuration. Its canonical JSON is what gets hashed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub ppo: PpoConfig,
    /// Save a checkpoint every this many updates (and always at the end).
    pub checkpoint_every: usize,
    /// Moving-average window, in steps, for the deviation series.
    pub smoothing_window: usize,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (scenario, ppo) = match preset {
            Preset::PaperScale => (ScenarioConfig::paper_scale(), PpoConfig::default()),
            Preset::DeskScale => (ScenarioConfig::desk_scale(), PpoConfig::desk_scale()),
        };
        Self { preset, scenario, ppo, checkpoint_every: 10, smoothing_window: 96 }
    }

    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.scenario.validate()?;
        self.ppo.validate()?;
        if self.checkpoint_every == 0 || self.smoothing_window == 0 {
            bail!("checkpoint_every and smoothing_window must be >= 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        sha256_hex(serde_json::to_string(&v).expect("value serializes").as_bytes())
    }
}

/// Recursively overlays `patch` on `base`. Objects merge; anything else,
/// arrays included, replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn rebase(dir: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = dir.join(&*p);
    }
}

/// Builds a run config from an optional file and command-line overrides.
/// The preset comes from the flag, then the file, then defaults to desk scale.
/// Relative paths inside the file resolve against the file's directory.
pub fn load(path: Option<&Path>, preset: Option<Preset>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let patch = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", p.display()))?;
            if !v.is_object() {
                bail!("{}: top level must be a JSON object", p.display());
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    let preset = match (preset, patch.get("preset")) {
        (Some(p), _) => p,
        (None, Some(v)) => serde_json::from_value(v.clone()).context("unknown preset")?,
        (None, None) => Preset::DeskScale,
    };
    let mut merged = serde_json::to_value(RunConfig::preset(preset))?;
    merge(&mut merged, &patch);
    merged["preset"] = serde_json::to_value(preset)?;
    let mut cfg: RunConfig = serde_json::from_value(merged).context("config does not match the schema")?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    if let Some(dir) = path.and_then(Path::parent) {
        if let NetworkSource::File { path } = &mut cfg.scenario.network {
            rebase(dir, path);
        }
        for g in &mut cfg.scenario.portfolio {
            if let Some(p) = &mut g.profile_csv {
                rebase(dir, p);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
