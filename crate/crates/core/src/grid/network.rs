use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Nominal line-to-line voltage, kV.
    pub base_kv: f64,
    /// Fixed capacitor injection, MVAR.
    pub shunt_q: f64,
    /// Solved magnitude, p.u.
    pub voltage_mag: f64,
    /// Solved angle, radians.
    pub voltage_ang: f64,
}

/// Series branch between two buses, impedance in p.u. on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
    pub reactance: f64,
}

/// Net complex injection at a bus. Loads are negative, generation positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub injections: Vec<Injection>,
    /// Nominal load per bus as shipped with the case data (positive = consumption).
    pub nominal_load: Vec<Injection>,
}

// ---------------------------------------------------------------------------
// JSON case schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpedanceUnit {
    Ohm,
    Pu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: f64,
    #[serde(default)]
    pub shunt_q_mvar: f64,
    #[serde(default)]
    pub load_p_mw: f64,
    #[serde(default)]
    pub load_q_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
}

/// On-disk network description. The embedded IEEE-33 feeder ships in this form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    pub name: String,
    pub base_kv: f64,
    pub base_mva: f64,
    pub impedance_unit: ImpedanceUnit,
    /// Free-text note on how bus ids relate to published labels.
    #[serde(default)]
    pub bus_labels: String,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

pub const NETWORK_SCHEMA_VERSION: u32 = 1;

impl NetworkFile {
    pub fn into_network(self) -> Result<Network, GridError> {
        if self.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(GridError::Schema(format!(
                "unsupported network schema_version {}",
                self.schema_version
            )));
        }
        if !(self.base_mva > 0.0 && self.base_kv > 0.0) {
            return Err(GridError::Schema("base_kv and base_mva must be positive".into()));
        }
        let mut records = self.buses;
        records.sort_by_key(|b| b.id);
        for (i, b) in records.iter().enumerate() {
            if b.id != i {
                return Err(GridError::Schema(format!(
                    "bus ids must be contiguous from 0; found {} at position {i}",
                    b.id
                )));
            }
        }
        let z_base = self.base_kv * self.base_kv / self.base_mva;
        let scale = match self.impedance_unit {
            ImpedanceUnit::Ohm => 1.0 / z_base,
            ImpedanceUnit::Pu => 1.0,
        };
        let buses = records
            .iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                base_kv: b.base_kv,
                shunt_q: b.shunt_q_mvar,
                voltage_mag: 1.0,
                voltage_ang: 0.0,
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                from_bus: l.from_bus,
                to_bus: l.to_bus,
                resistance: l.r * scale,
                reactance: l.x * scale,
            })
            .collect();
        let nominal_load: Vec<Injection> = records
            .iter()
            .map(|b| Injection { p_mw: b.load_p_mw, q_mvar: b.load_q_mvar })
            .collect();
        let injections = nominal_load
            .iter()
            .map(|l| Injection { p_mw: -l.p_mw, q_mvar: -l.q_mvar })
            .collect();
        let net = Network {
            name: self.name,
            base_mva: self.base_mva,
            buses,
            lines,
            injections,
            nominal_load,
        };
        net.validate()?;
        Ok(net)
    }
}

impl Network {
    pub fn from_json_str(s: &str) -> Result<Self, GridError> {
        let file: NetworkFile =
            serde_json::from_str(s).map_err(|e| GridError::Schema(e.to_string()))?;
        file.into_network()
    }

    pub fn from_json_file(path: &Path) -> Result<Self, GridError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GridError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Exports in the p.u. form of the case schema; nominal loads are preserved.
    pub fn to_file(&self) -> NetworkFile {
        let base_kv = self.buses.first().map_or(1.0, |b| b.base_kv);
        NetworkFile {
            schema_version: NETWORK_SCHEMA_VERSION,
            name: self.name.clone(),
            base_kv,
            base_mva: self.base_mva,
            impedance_unit: ImpedanceUnit::Pu,
            bus_labels: String::new(),
            buses: self
                .buses
                .iter()
                .zip(&self.nominal_load)
                .map(|(b, l)| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    base_kv: b.base_kv,
                    shunt_q_mvar: b.shunt_q,
                    load_p_mw: l.p_mw,
                    load_q_mvar: l.q_mvar,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    from_bus: l.from_bus,
                    to_bus: l.to_bus,
                    r: l.resistance,
                    x: l.reactance,
                })
                .collect(),
        }
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Checks the structural invariants: one slack, sane impedances, connectivity.
    pub fn validate(&self) -> Result<(), GridError> {
        let n = self.buses.len();
        if n == 0 {
            return Err(GridError::Topology("network has no buses".into()));
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(GridError::Topology(format!("expected exactly one slack bus, found {slacks}")));
        }
        if self.injections.len() != n || self.nominal_load.len() != n {
            return Err(GridError::Topology("injection arrays must have one entry per bus".into()));
        }
        for b in &self.buses {
            if !(b.shunt_q >= 0.0) {
                return Err(GridError::Topology(format!("bus {} has negative shunt_q", b.id)));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for (k, l) in self.lines.iter().enumerate() {
            if l.from_bus >= n || l.to_bus >= n {
                return Err(GridError::Topology(format!("line {k} references a missing bus")));
            }
            if l.from_bus == l.to_bus {
                return Err(GridError::Topology(format!("line {k} is a self loop")));
            }
            if !(l.resistance >= 0.0 && l.reactance > 0.0) {
                return Err(GridError::Topology(format!(
                    "line {k} needs resistance >= 0 and reactance > 0"
                )));
            }
            adj[l.from_bus].push(l.to_bus);
            adj[l.to_bus].push(l.from_bus);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack_bus()]);
        seen[self.slack_bus()] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(GridError::Topology(format!("bus {orphan} is not connected to the slack bus")));
        }
        Ok(())
    }

    pub fn set_bus_injection(&mut self, bus: usize, p_mw: f64, q_mvar: f64) -> Result<(), GridError> {
        let slot = self.injections.get_mut(bus).ok_or(GridError::UnknownBus(bus))?;
        *slot = Injection { p_mw, q_mvar };
        Ok(())
    }

    pub fn clear_injections(&mut self) {
        self.injections.iter_mut().for_each(|i| *i = Injection::default());
    }

    pub fn set_shunt(&mut self, bus: usize, q_mvar: f64) -> Result<(), GridError> {
        if !(q_mvar >= 0.0) {
            return Err(GridError::Topology(format!("negative shunt on bus {bus}")));
        }
        let b = self.buses.get_mut(bus).ok_or(GridError::UnknownBus(bus))?;
        b.shunt_q = q_mvar;
        Ok(())
    }

    /// Specified complex power per bus in p.u.: injections plus capacitor output.
    pub fn specified_power_pu(&self) -> Vec<(f64, f64)> {
        self.injections
            .iter()
            .zip(&self.buses)
            .map(|(inj, b)| (inj.p_mw / self.base_mva, (inj.q_mvar + b.shunt_q) / self.base_mva))
            .collect()
    }
}
