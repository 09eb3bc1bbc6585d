//! Storage dispatch for thermal tanks and batteries.
//!
//! A device serves its mandatory thermal demand first and only then uses the
//! remaining rated power to move energy in or out of storage. Requests the
//! device cannot honour (charging when full, discharging when empty) are
//! truncated silently.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    HvacTes,
    DhwTes,
    Battery,
}

impl DeviceKind {
    pub fn is_thermal(self) -> bool {
        !matches!(self, DeviceKind::Battery)
    }
}

/// Standby loss as a fraction of capacity per hour.
pub const DEFAULT_LOSS_FRACTION_PER_HOUR: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageDevice {
    pub kind: DeviceKind,
    /// Capacity, kWh.
    pub cap_max: f64,
    /// Stored energy, kWh.
    pub soc: f64,
    /// Charge limit, kW (> 0).
    pub p_max: f64,
    /// Discharge limit, kW (< 0).
    pub p_min: f64,
    pub efficiency: f64,
    /// Standby loss applied every step, kWh.
    pub loss_per_step: f64,
    /// Step length, hours.
    pub dt: f64,
}

/// What one call to [`StorageDevice::charge`] did.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChargeOutcome {
    /// Electric power drawn by the device, kW. Negative only for a discharging battery.
    pub consumption: f64,
    /// Power moved into (+) or out of (−) storage, kW.
    pub p_stor: f64,
    /// Power that was requested before truncation, kW.
    pub p_request: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid storage device: {0}")]
pub struct DeviceError(pub String);

impl StorageDevice {
    /// Device at 50 % state of charge with the default standby loss.
    pub fn new(kind: DeviceKind, cap_max: f64, p_max: f64, efficiency: f64, dt: f64) -> Result<Self, DeviceError> {
        let dev = Self {
            kind,
            cap_max,
            soc: 0.5 * cap_max,
            p_max,
            p_min: -p_max,
            efficiency,
            loss_per_step: DEFAULT_LOSS_FRACTION_PER_HOUR * cap_max * dt,
            dt,
        };
        dev.validate()?;
        Ok(dev)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.cap_max > 0.0) {
            return Err(DeviceError(format!("cap_max must be positive, got {}", self.cap_max)));
        }
        if !(self.p_min < 0.0 && 0.0 < self.p_max) {
            return Err(DeviceError(format!("need p_min < 0 < p_max, got [{}, {}]", self.p_min, self.p_max)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(DeviceError(format!("efficiency must be in (0, 1], got {}", self.efficiency)));
        }
        if !(self.loss_per_step >= 0.0) || !(self.dt > 0.0) {
            return Err(DeviceError("loss_per_step must be >= 0 and dt > 0".into()));
        }
        if !(0.0..=self.cap_max).contains(&self.soc) {
            return Err(DeviceError(format!("soc {} outside [0, {}]", self.soc, self.cap_max)));
        }
        Ok(())
    }

    pub fn soc_fraction(&self) -> f64 {
        self.soc / self.cap_max
    }

    /// Storage power requested by a normalized action: [−1, 1] maps affinely
    /// onto [p_min, p_max].
    pub fn requested_power(&self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        self.p_min + 0.5 * (u + 1.0) * (self.p_max - self.p_min)
    }

    /// Serves `p_demand` (kW thermal, zero for a battery) and applies the
    /// storage request encoded by `u`. Returns the electric power consumed.
    pub fn charge(&mut self, u: f64, p_demand: f64) -> ChargeOutcome {
        let p_demand = p_demand.max(0.0);
        let inv_eta = 1.0 / self.efficiency;
        let mut consumption = inv_eta * p_demand;
        let p_request = self.requested_power(u);

        let p_stor = if p_request >= 0.0 {
            // Room left in the tank, then whatever rated power the demand left over.
            let room = (self.cap_max - self.soc) / self.dt;
            let headroom = (self.p_max - p_demand).max(0.0);
            p_request.min(room.min(headroom)).max(0.0)
        } else {
            let mut floor = (-self.soc / self.dt).max(self.p_min);
            if self.kind.is_thermal() {
                floor = floor.max(-p_demand);
            }
            p_request.max(floor).min(0.0)
        };

        self.soc = (self.soc - self.loss_per_step + p_stor * self.dt).clamp(0.0, self.cap_max);
        consumption += inv_eta * p_stor;
        if self.kind.is_thermal() {
            consumption = consumption.max(0.0);
        }
        ChargeOutcome { consumption, p_stor, p_request }
    }
}
