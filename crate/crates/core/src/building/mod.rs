//! Buildings: exogenous profiles, storage devices, and a PV smart inverter.

mod profiles;
mod storage;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use profiles::{
    divides_hour, load_profiles_csv, parse_profiles_csv, synthesize_hourly, synthesize_profiles, synthesize_weather,
    upsample, write_profiles_csv, CoarseProfiles, LoadTemplate, ProfileError, ProfileSet, WeatherParams,
    CSV_COLUMNS, IRRADIANCE_NOISE_SD,
};
pub use storage::{ChargeOutcome, DeviceError, DeviceKind, StorageDevice, DEFAULT_LOSS_FRACTION_PER_HOUR};

/// Power factor of the non-inverter load (lagging).
pub const LOAD_POWER_FACTOR: f64 = 0.95;

/// Default inverter angle limit, acos(0.8).
pub fn default_phi_max() -> f64 {
    0.8f64.acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Rl,
    Rbc,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InverterSetting {
    /// Fraction of available PV withheld, [0, 1].
    pub curtailment: f64,
    /// Angle between inverter current and voltage, radians. Positive injects VARs.
    pub phase_lag: f64,
}

/// Per-device storage actions plus the inverter setting for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BuildingActions {
    pub u_hvac: f64,
    pub u_dhw: f64,
    pub u_battery: f64,
    pub inverter: InverterSetting,
}

/// Breakdown of a building's exchange with the grid over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Injection {
    /// Net real power, kW (export positive).
    pub p_kw: f64,
    /// Net reactive power, kVAR (injection positive).
    pub q_kvar: f64,
    pub pv_p_kw: f64,
    pub pv_q_kvar: f64,
    pub hvac_kw: f64,
    pub dhw_kw: f64,
    pub battery_kw: f64,
}

#[derive(Debug, Clone)]
pub struct Building {
    pub id: usize,
    pub bus: usize,
    pub building_type: String,
    pub hvac_tes: Option<StorageDevice>,
    pub dhw_tes: Option<StorageDevice>,
    pub battery: Option<StorageDevice>,
    /// PV array and inverter rating, kW.
    pub pv_rated: f64,
    pub power_factor: f64,
    pub controller: Controller,
    pub alpha: f64,
    pub phi_max: f64,
    pub profiles: Arc<ProfileSet>,
}

impl Building {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(format!("building {}: power factor {} outside (0, 1]", self.id, self.power_factor));
        }
        if !(self.alpha > 0.0) {
            return Err(format!("building {}: alpha must be positive", self.id));
        }
        if !(self.pv_rated >= 0.0) {
            return Err(format!("building {}: pv_rated must be >= 0", self.id));
        }
        if !(self.phi_max >= 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return Err(format!("building {}: phi_max must be in [0, pi/2)", self.id));
        }
        for d in self.devices() {
            d.validate().map_err(|e| format!("building {}: {e}", self.id))?;
        }
        Ok(())
    }

    pub fn devices(&self) -> impl Iterator<Item = &StorageDevice> {
        [&self.hvac_tes, &self.dhw_tes, &self.battery].into_iter().flatten()
    }

    /// Number of action slots: one per thermal store, plus curtailment and phase lag.
    pub fn action_dim(&self) -> usize {
        self.hvac_tes.is_some() as usize + self.dhw_tes.is_some() as usize + 2
    }

    /// Real and reactive PV output, kW / kVAR.
    pub fn pv_output(&self, t: usize, setting: InverterSetting) -> (f64, f64) {
        let s = self.pv_rated * self.profiles.solar_irradiance[t] * (1.0 - setting.curtailment.clamp(0.0, 1.0));
        let phi = setting.phase_lag.clamp(-self.phi_max, self.phi_max);
        (s * phi.cos(), s * phi.sin())
    }

    /// Advances every device one step and returns the building's net exchange.
    pub fn net_injection(&mut self, t: usize, actions: &BuildingActions) -> Injection {
        let prof = Arc::clone(&self.profiles);
        let hvac_kw = match self.hvac_tes.as_mut() {
            Some(dev) => dev.charge(actions.u_hvac, prof.hvac_demand[t]).consumption,
            None => prof.hvac_demand[t],
        };
        let dhw_kw = match self.dhw_tes.as_mut() {
            Some(dev) => dev.charge(actions.u_dhw, prof.dhw_demand[t]).consumption,
            None => prof.dhw_demand[t],
        };
        let battery_kw = self.battery.as_mut().map_or(0.0, |b| b.charge(actions.u_battery, 0.0).consumption);

        let (pv_p, pv_q) = self.pv_output(t, actions.inverter);
        let load_kw = prof.plug_load[t] + hvac_kw + dhw_kw;
        let load_kvar = load_kw * self.power_factor.acos().tan();
        let mut p = pv_p - load_kw;
        let mut q = pv_q - load_kvar;
        if battery_kw >= 0.0 {
            p -= battery_kw;
        } else {
            // Discharge leaves through the shared inverter at the PV phase split.
            let phi = actions.inverter.phase_lag.clamp(-self.phi_max, self.phi_max);
            p += -battery_kw * phi.cos();
            q += -battery_kw * phi.sin();
        }
        Injection { p_kw: p, q_kvar: q, pv_p_kw: pv_p, pv_q_kvar: pv_q, hvac_kw, dhw_kw, battery_kw }
    }
}
