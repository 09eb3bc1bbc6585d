//! Multi-agent feeder environment.
//!
//! Every building sits on a bus of the network. Learning buildings receive an
//! [`Action`] each step; the rest follow the rule-based schedule. All actions
//! are chosen from observations at time `t` and take effect together in one
//! power-flow solve, after which each agent is rewarded on its own bus voltage.

pub mod config;
mod episode;
mod observation;
mod rbc;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::building::{
    load_profiles_csv, synthesize_profiles, BuildingActions, Building, Controller, InverterSetting, LOAD_POWER_FACTOR,
    ProfileSet, StorageDevice,
};
use crate::building::{DeviceKind, Injection as BuildingInjection};
use crate::grid::{
    self, load_ieee33, solve_power_flow_warm, BusKind, GridError, Network, PowerFlowResult,
};
use crate::par::{self, ExecMode};
use crate::rng;

pub use config::{
    BuildingGroup, CapacitorSchedule, DeviceSpec, NetworkSource, Normalization, PowerFlowSettings, RbcSchedule,
    ScenarioConfig, TemplateRef,
};
pub use episode::{run_episode, AgentPolicy, ConstantPolicy, Controllers};
pub use observation::{observe, FeatureScales, LocalView, Observation, OBS_DIM};
pub use rbc::{rbc_action, rbc_storage_signal, reward};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid actions: {0}")]
    Actions(String),
    #[error("episode is over; call reset()")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub usize);

/// Normalized action in [−1, 1]: `[u_hvac?, u_dhw?, curtailment_raw, phase_raw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action(pub Vec<f64>);

/// Physical setting actually applied to one building in a step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AppliedAction {
    pub u_hvac: Option<f64>,
    pub u_dhw: Option<f64>,
    pub u_battery: Option<f64>,
    pub curtailment: f64,
    pub phase_lag: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub power_flow_iterations: usize,
    /// Action components outside [−1, 1] that were clipped.
    pub clipped_actions: usize,
    /// The solve only succeeded after zeroing storage actions.
    pub retried: bool,
    /// The power flow failed twice; the episode was terminated.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Indexed by `AgentId`.
    pub observations: Vec<Observation>,
    /// Indexed by `AgentId`.
    pub rewards: Vec<f64>,
    pub voltages: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeviceState {
    hvac: Option<f64>,
    dhw: Option<f64>,
    battery: Option<f64>,
}

/// Mutable episode state; everything else is rebuilt from the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvState {
    t: usize,
    done: bool,
    summer: bool,
    voltages: Vec<f64>,
    voltage_lag: Vec<f64>,
    last_injection: Vec<(f64, f64)>,
    devices: Vec<DeviceState>,
    warm_start: Option<PowerFlowResult>,
}

pub struct Environment {
    cfg: ScenarioConfig,
    net: Network,
    buildings: Vec<Building>,
    scales: Vec<FeatureScales>,
    /// Building index of each learning agent.
    agents: Vec<usize>,
    /// Per-building slot in `agents`, if learning.
    agent_of: Vec<Option<usize>>,
    background: Vec<(f64, f64)>,
    horizon: usize,
    t: usize,
    done: bool,
    summer: bool,
    voltages: Vec<f64>,
    voltage_lag: Vec<f64>,
    last_pf: Option<PowerFlowResult>,
    last_injection: Vec<BuildingInjection>,
    last_applied: Vec<AppliedAction>,
    building_rewards: Vec<f64>,
    exec: ExecMode,
}

fn make_device(kind: DeviceKind, spec: &config::DeviceSpec, dt: f64) -> StorageDevice {
    StorageDevice {
        kind,
        cap_max: spec.capacity_kwh,
        soc: 0.5 * spec.capacity_kwh,
        p_max: spec.power_kw,
        p_min: -spec.power_kw,
        efficiency: spec.efficiency,
        loss_per_step: spec.loss_fraction_per_hour * spec.capacity_kwh * dt,
        dt,
    }
}

fn scaled(mut p: ProfileSet, k: f64) -> ProfileSet {
    if k != 1.0 {
        for s in [&mut p.hvac_demand, &mut p.dhw_demand, &mut p.plug_load] {
            s.iter_mut().for_each(|x| *x *= k);
        }
    }
    p
}

impl Environment {
    /// Builds buildings and network from `cfg` and runs [`Environment::reset`].
    pub fn new(cfg: ScenarioConfig) -> Result<Self, EnvError> {
        Self::with_exec(cfg, ExecMode::default())
    }

    pub fn with_exec(cfg: ScenarioConfig, exec: ExecMode) -> Result<Self, EnvError> {
        cfg.validate()?;
        let net = match &cfg.network {
            NetworkSource::Ieee33 => load_ieee33(),
            NetworkSource::File { path } => Network::from_json_file(path)?,
        };
        let pq_buses: Vec<usize> =
            net.buses.iter().filter(|b| b.kind == BusKind::Pq).map(|b| b.id).collect();
        let expected = pq_buses.len() * cfg.buildings_per_bus;
        if cfg.total_buildings() != expected {
            return Err(EnvError::Config(format!(
                "portfolio has {} buildings but {} buses x {} per bus needs {expected}",
                cfg.total_buildings(),
                pq_buses.len(),
                cfg.buildings_per_bus
            )));
        }
        let horizon = cfg.horizon();

        // One profile set per group, replicated to every member.
        let mut members = Vec::with_capacity(expected);
        for (gi, g) in cfg.portfolio.iter().enumerate() {
            let template = g.template.resolve()?;
            let profiles = match &g.profile_csv {
                Some(path) => load_profiles_csv(path, cfg.dt, cfg.seed)
                    .map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?,
                None => synthesize_profiles(&template, &cfg.weather, cfg.seed, cfg.start_day, cfg.episode_days, cfg.dt)
                    .map_err(|e| EnvError::Config(e.to_string()))?,
            };
            if profiles.len() < horizon {
                return Err(EnvError::Config(format!(
                    "group {}: profiles cover {} steps, episode needs {horizon}",
                    template.name,
                    profiles.len()
                )));
            }
            let profiles = Arc::new(scaled(profiles, g.load_scale));
            for _ in 0..g.count {
                members.push((gi, template.name.clone(), Arc::clone(&profiles)));
            }
        }

        members.shuffle(&mut rng::stream(cfg.seed, "assignment"));
        let n_rl = (cfg.rl_fraction * members.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "rl-selection"));
        let mut is_rl = vec![false; members.len()];
        order.iter().take(n_rl).for_each(|&i| is_rl[i] = true);

        let buildings: Vec<Building> = members
            .into_iter()
            .enumerate()
            .map(|(id, (gi, name, profiles))| {
                let g = &cfg.portfolio[gi];
                Building {
                    id,
                    bus: pq_buses[id / cfg.buildings_per_bus],
                    building_type: name,
                    hvac_tes: g.hvac_tes.as_ref().map(|s| make_device(DeviceKind::HvacTes, s, cfg.dt)),
                    dhw_tes: g.dhw_tes.as_ref().map(|s| make_device(DeviceKind::DhwTes, s, cfg.dt)),
                    battery: g.battery.as_ref().map(|s| make_device(DeviceKind::Battery, s, cfg.dt)),
                    pv_rated: g.pv_rated_kw,
                    power_factor: LOAD_POWER_FACTOR,
                    controller: if is_rl[id] { Controller::Rl } else { Controller::Rbc },
                    alpha: g.alpha.unwrap_or(cfg.alpha),
                    phi_max: cfg.phi_max,
                    profiles,
                }
            })
            .collect();
        for b in &buildings {
            b.validate().map_err(EnvError::Config)?;
        }
        let scales = buildings.iter().map(|b| FeatureScales::for_profiles(&b.profiles, b.pv_rated)).collect();
        let agents: Vec<usize> = buildings.iter().filter(|b| b.controller == Controller::Rl).map(|b| b.id).collect();
        let mut agent_of = vec![None; buildings.len()];
        for (a, &b) in agents.iter().enumerate() {
            agent_of[b] = Some(a);
        }
        let background = net
            .nominal_load
            .iter()
            .map(|l| (-l.p_mw * cfg.background_load_fraction, -l.q_mvar * cfg.background_load_fraction))
            .collect();
        let n_bus = net.bus_count();
        let n_bld = buildings.len();
        let mut env = Self {
            cfg,
            net,
            buildings,
            scales,
            agents,
            agent_of,
            background,
            horizon,
            t: 0,
            done: false,
            summer: false,
            voltages: vec![1.0; n_bus],
            voltage_lag: vec![1.0; n_bus],
            last_pf: None,
            last_injection: vec![BuildingInjection::default(); n_bld],
            last_applied: vec![AppliedAction::default(); n_bld],
            building_rewards: vec![0.0; n_bld],
            exec,
        };
        env.reset()?;
        Ok(env)
    }

    /// Restarts the episode: SOCs at 50 %, t = 0, capacitors for day 0, and an
    /// initial solve with every store idle.
    pub fn reset(&mut self) -> Result<Vec<Observation>, EnvError> {
        self.t = 0;
        self.done = false;
        for b in &mut self.buildings {
            for d in [&mut b.hvac_tes, &mut b.dhw_tes, &mut b.battery].into_iter().flatten() {
                d.soc = 0.5 * d.cap_max;
            }
        }
        let day = self.buildings[0].profiles.day_of_year(0);
        self.summer = self.cfg.is_summer(day);
        self.apply_capacitors();

        // Preview the t = 0 exchange without touching device state.
        let preview: Vec<BuildingInjection> = self
            .buildings
            .iter()
            .map(|b| {
                let mut probe = b.clone();
                let acts = BuildingActions { inverter: InverterSetting::default(), ..Default::default() };
                probe.net_injection(0, &acts)
            })
            .collect();
        self.load_injections(&preview);
        self.last_pf = None;
        let pf = self.solve()?;
        self.voltages = pf.voltage_mag.clone();
        self.voltage_lag = self.voltages.clone();
        self.last_pf = Some(pf);
        self.last_injection = preview;
        self.last_applied = vec![AppliedAction::default(); self.buildings.len()];
        self.building_rewards = self.buildings.iter().map(|b| reward(self.voltages[b.bus], b.alpha)).collect();
        Ok(self.observations())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agents.len()).map(AgentId)
    }

    pub fn agent_building(&self, id: AgentId) -> &Building {
        &self.buildings[self.agents[id.0]]
    }

    pub fn action_dim(&self, id: AgentId) -> usize {
        self.agent_building(id).action_dim()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn is_summer(&self) -> bool {
        self.summer
    }

    pub fn last_injections(&self) -> &[BuildingInjection] {
        &self.last_injection
    }

    pub fn last_applied(&self) -> &[AppliedAction] {
        &self.last_applied
    }

    /// Reward of every building (learning or not) for the last step.
    pub fn building_rewards(&self) -> &[f64] {
        &self.building_rewards
    }

    pub fn set_exec_mode(&mut self, exec: ExecMode) {
        self.exec = exec;
    }

    /// Observation of one agent, built only from its own [`LocalView`].
    pub fn observe_agent(&self, id: AgentId) -> Observation {
        let b = self.agents[id.0];
        self.observe_building(b)
    }

    fn observe_building(&self, b: usize) -> Observation {
        let bld = &self.buildings[b];
        let view = LocalView {
            building: bld,
            t: self.t,
            voltage: self.voltages[bld.bus],
            voltage_lag: self.voltage_lag[bld.bus],
            net_p_kw: self.last_injection[b].p_kw,
            net_q_kvar: self.last_injection[b].q_kvar,
            summer: self.summer,
        };
        observe(&view, &self.scales[b], &self.cfg.normalization)
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.agents.iter().map(|&b| self.observe_building(b)).collect()
    }

    fn apply_capacitors(&mut self) {
        let set = if self.summer { &self.cfg.capacitors.summer } else { &self.cfg.capacitors.winter };
        grid::apply_shunts(&mut self.net, set);
    }

    fn load_injections(&mut self, inj: &[BuildingInjection]) {
        let mut per_bus = self.background.clone();
        for (b, i) in self.buildings.iter().zip(inj) {
            per_bus[b.bus].0 += i.p_kw / 1000.0;
            per_bus[b.bus].1 += i.q_kvar / 1000.0;
        }
        for (bus, (p, q)) in per_bus.into_iter().enumerate() {
            self.net.injections[bus] = grid::Injection { p_mw: p, q_mvar: q };
        }
    }

    fn solve(&self) -> Result<PowerFlowResult, GridError> {
        solve_power_flow_warm(
            &self.net,
            self.cfg.power_flow.tolerance,
            self.cfg.power_flow.max_iter,
            self.last_pf.as_ref(),
        )
    }

    fn decode(&self, b: usize, action: &[f64], clipped: &mut usize) -> AppliedAction {
        let bld = &self.buildings[b];
        let mut it = action.iter().map(|&x| {
            if !(-1.0..=1.0).contains(&x) {
                *clipped += 1;
            }
            if x.is_nan() {
                0.0
            } else {
                x.clamp(-1.0, 1.0)
            }
        });
        let u_hvac = bld.hvac_tes.as_ref().map(|_| it.next().unwrap_or(0.0));
        let u_dhw = bld.dhw_tes.as_ref().map(|_| it.next().unwrap_or(0.0));
        let curtailment = (it.next().unwrap_or(-1.0) + 1.0) / 2.0;
        let phase_lag = it.next().unwrap_or(0.0) * bld.phi_max;
        let u_battery = bld
            .battery
            .as_ref()
            .map(|_| rbc_storage_signal(&self.cfg.rbc, bld.profiles.hour_of_day(self.t)));
        AppliedAction { u_hvac, u_dhw, u_battery, curtailment, phase_lag }
    }

    fn check_actions<'a>(&self, actions: &'a [(AgentId, Action)]) -> Result<Vec<&'a Action>, EnvError> {
        let mut slots: Vec<Option<&Action>> = vec![None; self.agents.len()];
        for (id, a) in actions {
            let slot = slots
                .get_mut(id.0)
                .ok_or_else(|| EnvError::Actions(format!("unknown agent {}", id.0)))?;
            if slot.replace(a).is_some() {
                return Err(EnvError::Actions(format!("agent {} acted twice", id.0)));
            }
            let want = self.action_dim(*id);
            if a.0.len() != want {
                return Err(EnvError::Actions(format!(
                    "agent {} sent {} action values, expected {want}",
                    id.0,
                    a.0.len()
                )));
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| EnvError::Actions(format!("missing action for agent {i}"))))
            .collect()
    }

    fn snapshot(&self) -> Vec<DeviceState> {
        self.buildings
            .iter()
            .map(|b| DeviceState {
                hvac: b.hvac_tes.as_ref().map(|d| d.soc),
                dhw: b.dhw_tes.as_ref().map(|d| d.soc),
                battery: b.battery.as_ref().map(|d| d.soc),
            })
            .collect()
    }

    fn restore(&mut self, snap: &[DeviceState]) {
        for (b, s) in self.buildings.iter_mut().zip(snap) {
            for (dev, soc) in [(&mut b.hvac_tes, s.hvac), (&mut b.dhw_tes, s.dhw), (&mut b.battery, s.battery)] {
                if let (Some(d), Some(v)) = (dev.as_mut(), soc) {
                    d.soc = v;
                }
            }
        }
    }

    fn run_buildings(&mut self, applied: &[AppliedAction]) -> Vec<BuildingInjection> {
        let t = self.t;
        par::map_mut(self.exec, &mut self.buildings, |i, b| {
            let a = &applied[i];
            let acts = BuildingActions {
                u_hvac: a.u_hvac.unwrap_or(0.0),
                u_dhw: a.u_dhw.unwrap_or(0.0),
                u_battery: a.u_battery.unwrap_or(0.0),
                inverter: InverterSetting { curtailment: a.curtailment, phase_lag: a.phase_lag },
            };
            b.net_injection(t, &acts)
        })
    }

    /// One synchronous step. `actions` must hold exactly one entry per agent,
    /// in any order.
    pub fn step(&mut self, actions: &[(AgentId, Action)]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let by_agent = self.check_actions(actions)?;
        let mut info = StepInfo::default();

        let mut applied = Vec::with_capacity(self.buildings.len());
        for b in 0..self.buildings.len() {
            let a = match self.agent_of[b] {
                Some(agent) => self.decode(b, &by_agent[agent].0, &mut info.clipped_actions),
                None => {
                    let rbc = rbc_action(&self.buildings[b], self.t, &self.cfg.rbc);
                    self.decode(b, &rbc.0, &mut 0)
                }
            };
            applied.push(a);
        }

        let snap = self.snapshot();
        let day = self.buildings[0].profiles.day_of_year(self.t);
        let summer = self.cfg.is_summer(day);
        if summer != self.summer {
            self.summer = summer;
            self.apply_capacitors();
        }

        let mut injections = self.run_buildings(&applied);
        self.load_injections(&injections);
        let solved = match self.solve() {
            Ok(pf) => Some(pf),
            Err(GridError::NonConvergence { .. }) => {
                info.retried = true;
                self.restore(&snap);
                for a in &mut applied {
                    a.u_hvac = a.u_hvac.map(|_| 0.0);
                    a.u_dhw = a.u_dhw.map(|_| 0.0);
                    a.u_battery = a.u_battery.map(|_| 0.0);
                }
                injections = self.run_buildings(&applied);
                self.load_injections(&injections);
                self.last_pf = None;
                self.solve().ok()
            }
            Err(e) => return Err(e.into()),
        };

        self.voltage_lag = std::mem::take(&mut self.voltages);
        match solved {
            Some(pf) => {
                info.power_flow_iterations = pf.iterations;
                self.voltages = pf.voltage_mag.clone();
                self.net.apply_result(&pf);
                self.last_pf = Some(pf);
                self.building_rewards =
                    self.buildings.iter().map(|b| reward(self.voltages[b.bus], b.alpha)).collect();
            }
            None => {
                info.failed = true;
                self.voltages = self.voltage_lag.clone();
                self.building_rewards = vec![self.cfg.failure_penalty; self.buildings.len()];
            }
        }
        self.last_injection = injections;
        self.last_applied = applied;
        self.t += 1;
        self.done = info.failed || self.t >= self.horizon;

        Ok(StepResult {
            observations: self.observations(),
            rewards: self.agents.iter().map(|&b| self.building_rewards[b]).collect(),
            voltages: self.voltages.clone(),
            done: self.done,
            info,
        })
    }

    /// Dynamic state for checkpointing.
    pub fn state(&self) -> EnvState {
        EnvState {
            t: self.t,
            done: self.done,
            summer: self.summer,
            voltages: self.voltages.clone(),
            voltage_lag: self.voltage_lag.clone(),
            last_injection: self.last_injection.iter().map(|i| (i.p_kw, i.q_kvar)).collect(),
            devices: self.snapshot(),
            warm_start: self.last_pf.clone(),
        }
    }

    /// Restores state captured by [`Environment::state`] on an environment
    /// built from the same config.
    pub fn restore_state(&mut self, s: &EnvState) -> Result<(), EnvError> {
        if s.devices.len() != self.buildings.len() || s.voltages.len() != self.net.bus_count() {
            return Err(EnvError::Config("environment state does not match this scenario".into()));
        }
        self.t = s.t;
        self.done = s.done;
        self.summer = s.summer;
        self.apply_capacitors();
        self.voltages = s.voltages.clone();
        self.voltage_lag = s.voltage_lag.clone();
        for (dst, &(p, q)) in self.last_injection.iter_mut().zip(&s.last_injection) {
            *dst = BuildingInjection { p_kw: p, q_kvar: q, ..Default::default() };
        }
        self.restore(&s.devices);
        self.last_pf = s.warm_start.clone();
        Ok(())
    }

    /// Agent-to-building roster, for checkpoint compatibility checks.
    pub fn roster(&self) -> BTreeMap<usize, (usize, usize)> {
        self.agents
            .iter()
            .enumerate()
            .map(|(a, &b)| (a, (b, self.buildings[b].action_dim())))
            .collect()
    }
}
