//! Episode log and its CSV form.
//!
//! `voltages.csv` is long format (`step,bus,voltage`); `agents.csv` holds one
//! row per building and step. Empty cells mean "device absent". Floats are
//! written with Rust's shortest round-trip formatting, so parse(write(x)) == x.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::building::Controller;

use super::MetricsError;

pub const VOLTAGES_FILE: &str = "voltages.csv";
pub const AGENTS_FILE: &str = "agents.csv";
pub const META_FILE: &str = "log_meta.json";

const AGENT_COLUMNS: [&str; 12] = [
    "step",
    "agent",
    "bus",
    "controller",
    "u_hvac",
    "u_dhw",
    "curtailment",
    "phase_lag",
    "soc_hvac",
    "soc_dhw",
    "soc_battery",
    "reward",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingMeta {
    pub bus: usize,
    pub building_type: String,
    pub controller: Controller,
}

/// One building's action and storage state after a step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentRecord {
    /// `[u_hvac, u_dhw, curtailment fraction, phase lag rad]`.
    pub action: [Option<f64>; 4],
    /// `[hvac, dhw, battery]`, kWh.
    pub soc: [Option<f64>; 3],
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogMeta {
    dt: f64,
    bus_count: usize,
    buildings: Vec<BuildingMeta>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub dt: f64,
    pub buildings: Vec<BuildingMeta>,
    /// step × bus, p.u.
    pub voltages: Vec<Vec<f64>>,
    /// step × building.
    pub agents: Vec<Vec<AgentRecord>>,
}

impl EpisodeLog {
    pub fn new(dt: f64, buildings: Vec<BuildingMeta>) -> Self {
        Self { dt, buildings, voltages: Vec::new(), agents: Vec::new() }
    }

    pub fn push(&mut self, voltages: Vec<f64>, agents: Vec<AgentRecord>) {
        self.voltages.push(voltages);
        self.agents.push(agents);
    }

    pub fn steps(&self) -> usize {
        self.voltages.len()
    }

    pub fn bus_count(&self) -> usize {
        self.voltages.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.agents.len() != self.voltages.len() {
            return Err(MetricsError::Malformed("voltage and agent tables differ in step count".into()));
        }
        let nb = self.bus_count();
        for (t, row) in self.voltages.iter().enumerate() {
            if row.len() != nb {
                return Err(MetricsError::Malformed(format!("step {t} has {} buses, expected {nb}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0)) {
                return Err(MetricsError::Malformed(format!("step {t} has non-positive voltage {v}")));
            }
        }
        for (t, row) in self.agents.iter().enumerate() {
            if row.len() != self.buildings.len() {
                return Err(MetricsError::Malformed(format!("step {t} has {} agent rows", row.len())));
            }
        }
        Ok(())
    }

    /// Mean reward over the given controller class per step.
    pub fn mean_reward(&self, controller: Option<Controller>) -> Vec<f64> {
        let pick: Vec<usize> = (0..self.buildings.len())
            .filter(|&i| controller.is_none_or(|c| self.buildings[i].controller == c))
            .collect();
        self.agents
            .iter()
            .map(|row| {
                if pick.is_empty() {
                    0.0
                } else {
                    pick.iter().map(|&i| row[i].reward).sum::<f64>() / pick.len() as f64
                }
            })
            .collect()
    }

    pub fn voltages_csv(&self) -> String {
        let mut out = String::from("step,bus,voltage\n");
        for (t, row) in self.voltages.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                writeln!(out, "{t},{b},{v}").unwrap();
            }
        }
        out
    }

    pub fn agents_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = AGENT_COLUMNS.join(",");
        out.push('\n');
        for (t, row) in self.agents.iter().enumerate() {
            for (i, r) in row.iter().enumerate() {
                let m = &self.buildings[i];
                let ctl = match m.controller {
                    Controller::Rl => "rl",
                    Controller::Rbc => "rbc",
                };
                writeln!(
                    out,
                    "{t},{i},{},{ctl},{},{},{},{},{},{},{},{}",
                    m.bus,
                    cell(r.action[0]),
                    cell(r.action[1]),
                    cell(r.action[2]),
                    cell(r.action[3]),
                    cell(r.soc[0]),
                    cell(r.soc[1]),
                    cell(r.soc[2]),
                    r.reward
                )
                .unwrap();
            }
        }
        out
    }

    /// Writes the three log files into `dir` and returns their names.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>, MetricsError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(VOLTAGES_FILE), self.voltages_csv())?;
        fs::write(dir.join(AGENTS_FILE), self.agents_csv())?;
        let meta = LogMeta { dt: self.dt, bus_count: self.bus_count(), buildings: self.buildings.clone() };
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
        Ok(vec![VOLTAGES_FILE.into(), AGENTS_FILE.into(), META_FILE.into()])
    }

    pub fn read_dir(dir: &Path) -> Result<Self, MetricsError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name))
                .map_err(|e| MetricsError::Io(format!("{}: {e}", dir.join(name).display())))
        };
        let meta: LogMeta = serde_json::from_str(&read(META_FILE)?)?;
        let mut log = EpisodeLog::new(meta.dt, meta.buildings);

        let text = read(VOLTAGES_FILE)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| MetricsError::Malformed(e.to_string()))?;
            let (t, b, v): (usize, usize, f64) = rec
                .deserialize(None)
                .map_err(|e| MetricsError::Malformed(format!("{VOLTAGES_FILE} row {}: {e}", n + 2)))?;
            if b >= meta.bus_count || (t != log.voltages.len() && t + 1 != log.voltages.len()) {
                return Err(MetricsError::Malformed(format!("{VOLTAGES_FILE} row {}: out of order", n + 2)));
            }
            if t == log.voltages.len() {
                log.voltages.push(Vec::with_capacity(meta.bus_count));
            }
            log.voltages[t].push(v);
        }

        let text = read(AGENTS_FILE)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let parse = |s: &str, row: usize| -> Result<Option<f64>, MetricsError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| MetricsError::Malformed(format!("{AGENTS_FILE} row {row}: bad number {s:?}")))
            }
        };
        for (n, rec) in rdr.records().enumerate() {
            let row = n + 2;
            let rec = rec.map_err(|e| MetricsError::Malformed(e.to_string()))?;
            if rec.len() != AGENT_COLUMNS.len() {
                return Err(MetricsError::Malformed(format!("{AGENTS_FILE} row {row}: wrong column count")));
            }
            let t: usize = rec[0].parse().map_err(|_| MetricsError::Malformed(format!("{AGENTS_FILE} row {row}")))?;
            if t == log.agents.len() {
                log.agents.push(Vec::with_capacity(log.buildings.len()));
            } else if t + 1 != log.agents.len() {
                return Err(MetricsError::Malformed(format!("{AGENTS_FILE} row {row}: out of order")));
            }
            let mut r = AgentRecord::default();
            for k in 0..4 {
                r.action[k] = parse(&rec[4 + k], row)?;
            }
            for k in 0..3 {
                r.soc[k] = parse(&rec[8 + k], row)?;
            }
            r.reward = parse(&rec[11], row)?
                .ok_or_else(|| MetricsError::Malformed(format!("{AGENTS_FILE} row {row}: missing reward")))?;
            log.agents[t].push(r);
        }
        log.validate()?;
        Ok(log)
    }
}
