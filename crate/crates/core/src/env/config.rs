//! Scenario configuration and the two built-in presets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::building::{default_phi_max, divides_hour, LoadTemplate, WeatherParams};
use crate::grid::{SUMMER_SHUNTS, WINTER_SHUNTS};

use super::EnvError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum NetworkSource {
    /// The embedded Baran–Wu feeder.
    Ieee33,
    /// A network file in the JSON case schema.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateRef {
    Builtin(String),
    Inline(LoadTemplate),
}

impl TemplateRef {
    pub fn resolve(&self) -> Result<LoadTemplate, EnvError> {
        match self {
            TemplateRef::Builtin(name) => LoadTemplate::builtin(name)
                .ok_or_else(|| EnvError::Config(format!("unknown building template {name:?}"))),
            TemplateRef::Inline(t) => Ok(t.clone()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TemplateRef::Builtin(name) => name,
            TemplateRef::Inline(t) => &t.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub capacity_kwh: f64,
    pub power_kw: f64,
    #[serde(default = "one")]
    pub efficiency: f64,
    /// Standby loss per hour as a fraction of capacity.
    #[serde(default = "default_loss")]
    pub loss_fraction_per_hour: f64,
}

fn one() -> f64 {
    1.0
}

fn default_loss() -> f64 {
    crate::building::DEFAULT_LOSS_FRACTION_PER_HOUR
}

/// Buildings of one type. Profiles are shared by every member of the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingGroup {
    pub template: TemplateRef,
    pub count: usize,
    pub pv_rated_kw: f64,
    /// Multiplies every demand series of the template.
    #[serde(default = "one")]
    pub load_scale: f64,
    #[serde(default)]
    pub hvac_tes: Option<DeviceSpec>,
    #[serde(default)]
    pub dhw_tes: Option<DeviceSpec>,
    #[serde(default)]
    pub battery: Option<DeviceSpec>,
    /// Per-group override of the reward weight.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Replace synthetic profiles with a CSV file in the documented schema.
    #[serde(default)]
    pub profile_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbcSchedule {
    /// Charging window [start, end) in hours; may wrap midnight.
    pub charge_hours: [f64; 2],
    pub discharge_hours: [f64; 2],
    pub magnitude: f64,
}

impl Default for RbcSchedule {
    fn default() -> Self {
        Self { charge_hours: [22.0, 7.0], discharge_hours: [15.0, 21.0], magnitude: 0.34 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorSchedule {
    /// (bus id, MVAR); bus ids are 0-based.
    pub winter: Vec<(usize, f64)>,
    pub summer: Vec<(usize, f64)>,
}

impl Default for CapacitorSchedule {
    fn default() -> Self {
        Self { winter: WINTER_SHUNTS.to_vec(), summer: SUMMER_SHUNTS.to_vec() }
    }
}

/// Fixed affine ranges mapping raw features onto [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub outdoor_temp_c: [f64; 2],
    pub voltage_pu: [f64; 2],
}

impl Default for Normalization {
    fn default() -> Self {
        Self { outdoor_temp_c: [-10.0, 45.0], voltage_pu: [0.9, 1.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerFlowSettings {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowSettings {
    fn default() -> Self {
        Self { tolerance: crate::grid::DEFAULT_TOLERANCE, max_iter: crate::grid::DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkSource,
    pub buildings_per_bus: usize,
    pub rl_fraction: f64,
    /// Step length, hours.
    pub dt: f64,
    /// Day of year at t = 0.
    pub start_day: u32,
    pub episode_days: usize,
    /// Inclusive day-of-year range with the summer capacitor set.
    pub summer_days: [u32; 2],
    pub seed: u64,
    pub alpha: f64,
    pub phi_max: f64,
    /// Reward handed to every agent when the power flow cannot be solved.
    pub failure_penalty: f64,
    /// Share of the feeder's nominal loads kept as fixed background demand.
    pub background_load_fraction: f64,
    pub rbc: RbcSchedule,
    pub capacitors: CapacitorSchedule,
    pub weather: WeatherParams,
    pub normalization: Normalization,
    pub power_flow: PowerFlowSettings,
    pub portfolio: Vec<BuildingGroup>,
}

fn group(
    template: &str,
    count: usize,
    pv: f64,
    hvac: (f64, f64),
    dhw: (f64, f64),
    alpha: Option<f64>,
) -> BuildingGroup {
    BuildingGroup {
        template: TemplateRef::Builtin(template.into()),
        count,
        pv_rated_kw: pv,
        load_scale: 1.0,
        hvac_tes: Some(DeviceSpec {
            capacity_kwh: hvac.0,
            power_kw: hvac.1,
            efficiency: 1.0,
            loss_fraction_per_hour: default_loss(),
        }),
        dhw_tes: Some(DeviceSpec {
            capacity_kwh: dhw.0,
            power_kw: dhw.1,
            efficiency: 0.9,
            loss_fraction_per_hour: default_loss(),
        }),
        battery: None,
        alpha,
        profile_csv: None,
    }
}

impl ScenarioConfig {
    /// 192 buildings, 6 per distribution bus, half of them learning.
    pub fn paper_scale() -> Self {
        Self {
            network: NetworkSource::Ieee33,
            buildings_per_bus: 6,
            rl_fraction: 0.5,
            dt: 0.25,
            start_day: 120,
            episode_days: 90,
            summer_days: [152, 244],
            seed: 0,
            alpha: 20.0,
            phi_max: default_phi_max(),
            failure_penalty: -10.0,
            background_load_fraction: 0.0,
            rbc: RbcSchedule::default(),
            capacitors: CapacitorSchedule::default(),
            weather: WeatherParams::default(),
            normalization: Normalization::default(),
            power_flow: PowerFlowSettings::default(),
            portfolio: vec![
                group("office", 4, 40.0, (60.0, 30.0), (20.0, 10.0), None),
                group("restaurant", 37, 15.0, (30.0, 12.0), (60.0, 25.0), None),
                group("retail", 5, 30.0, (40.0, 20.0), (10.0, 5.0), None),
                group("strip_mall", 1, 35.0, (50.0, 25.0), (15.0, 8.0), None),
                group("multifamily", 145, 12.0, (30.0, 12.0), (40.0, 15.0), None),
            ],
        }
    }

    /// 64 buildings, 2 per distribution bus, with high PV penetration.
    pub fn desk_scale() -> Self {
        Self {
            buildings_per_bus: 2,
            start_day: 148,
            episode_days: 7,
            weather: WeatherParams { cloudiness: 0.25, peak_irradiance: 0.95, ..WeatherParams::default() },
            portfolio: [
                group("office", 1, 150.0, (60.0, 30.0), (20.0, 10.0), None),
                group("restaurant", 12, 70.0, (30.0, 12.0), (60.0, 25.0), None),
                group("retail", 2, 110.0, (40.0, 20.0), (10.0, 5.0), None),
                group("strip_mall", 1, 130.0, (50.0, 25.0), (15.0, 8.0), None),
                group("multifamily", 48, 60.0, (30.0, 12.0), (40.0, 15.0), None),
            ]
            .into_iter()
            .map(|g| BuildingGroup { load_scale: 0.9, ..g })
            .collect(),
            ..Self::paper_scale()
        }
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.dt).round() as usize
    }

    pub fn horizon(&self) -> usize {
        self.episode_days * self.steps_per_day()
    }

    pub fn total_buildings(&self) -> usize {
        self.portfolio.iter().map(|g| g.count).sum()
    }

    pub fn is_summer(&self, day_of_year: u32) -> bool {
        (self.summer_days[0]..=self.summer_days[1]).contains(&day_of_year)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if !(0.0..=1.0).contains(&self.rl_fraction) {
            return err(format!("rl_fraction {} outside [0, 1]", self.rl_fraction));
        }
        if !divides_hour(self.dt) {
            return err(format!("dt {} h must divide one hour", self.dt));
        }
        if self.episode_days == 0 {
            return err("episode_days must be >= 1".into());
        }
        if !(1..=365).contains(&self.start_day) {
            return err(format!("start_day {} outside 1..=365", self.start_day));
        }
        if self.buildings_per_bus == 0 {
            return err("buildings_per_bus must be >= 1".into());
        }
        if !(self.alpha > 0.0) {
            return err("alpha must be positive".into());
        }
        if !(self.phi_max >= 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return err("phi_max must be in [0, pi/2)".into());
        }
        if !(self.background_load_fraction >= 0.0) {
            return err("background_load_fraction must be >= 0".into());
        }
        if !(self.power_flow.tolerance > 0.0) || self.power_flow.max_iter == 0 {
            return err("power_flow needs tolerance > 0 and max_iter >= 1".into());
        }
        for [lo, hi] in [self.normalization.outdoor_temp_c, self.normalization.voltage_pu] {
            if !(hi > lo) {
                return err(format!("normalization range [{lo}, {hi}] is empty"));
            }
        }
        let mut names = BTreeMap::new();
        for g in &self.portfolio {
            let t = g.template.resolve()?;
            t.validate().map_err(|e| EnvError::Config(e.to_string()))?;
            if names.insert(t.name.clone(), ()).is_some() {
                return err(format!("template {:?} appears twice in the portfolio", t.name));
            }
            if !(g.pv_rated_kw >= 0.0) || !(g.load_scale >= 0.0) {
                return err(format!("group {}: pv_rated_kw and load_scale must be >= 0", t.name));
            }
            if let Some(a) = g.alpha {
                if !(a > 0.0) {
                    return err(format!("group {}: alpha must be positive", t.name));
                }
            }
            for d in [&g.hvac_tes, &g.dhw_tes, &g.battery].into_iter().flatten() {
                if !(d.capacity_kwh > 0.0 && d.power_kw > 0.0 && d.efficiency > 0.0 && d.efficiency <= 1.0) {
                    return err(format!("group {}: device needs capacity > 0, power > 0, efficiency in (0, 1]", t.name));
                }
                if !(d.loss_fraction_per_hour >= 0.0) {
                    return err(format!("group {}: negative standby loss", t.name));
                }
            }
        }
        if self.total_buildings() == 0 {
            return err("portfolio is empty".into());
        }
        Ok(())
    }
}
