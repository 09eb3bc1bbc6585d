//! Distribution network model and AC power flow.

mod ieee33;
mod network;
mod newton;

use thiserror::Error;

pub(crate) use ieee33::apply_shunts;
pub use ieee33::{load_ieee33, set_seasonal_capacitors, IEEE33_JSON, SUMMER_SHUNTS, WINTER_SHUNTS};
pub use network::{
    Bus, BusKind, BusRecord, ImpedanceUnit, Injection, Line, LineRecord, Network, NetworkFile,
    NETWORK_SCHEMA_VERSION,
};
pub use newton::{
    power_mismatch, solve_power_flow, solve_power_flow_warm, Admittance, PowerFlowResult, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("network schema: {0}")]
    Schema(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

impl Network {
    /// Copies a converged solution into the bus records.
    pub fn apply_result(&mut self, result: &PowerFlowResult) {
        for (bus, (&m, &a)) in self.buses.iter_mut().zip(result.voltage_mag.iter().zip(&result.voltage_ang)) {
            bus.voltage_mag = m;
            bus.voltage_ang = a;
        }
    }
}
