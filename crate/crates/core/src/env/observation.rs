//! Per-agent observation vector.
//!
//! Feature order (all mapped onto [−1, 1]):
//!
//! | idx | feature                      | map                                      |
//! |-----|------------------------------|------------------------------------------|
//! | 0   | hour of day, sin             | sin(2π h/24)                             |
//! | 1   | hour of day, cos             | cos(2π h/24)                             |
//! | 2   | day of week                  | 2·d/6 − 1, d ∈ 0..7                      |
//! | 3   | outdoor temperature          | affine over `normalization.outdoor_temp_c` |
//! | 4   | temperature, next step       | same                                     |
//! | 5   | irradiance factor            | 2x − 1                                   |
//! | 6   | irradiance, next step        | 2x − 1                                   |
//! | 7   | HVAC demand                  | 2x/max − 1, max over own profile         |
//! | 8   | DHW demand                   | same                                     |
//! | 9   | plug load                    | same                                     |
//! | 10  | HVAC store SOC               | 2·soc/cap − 1, 0 if absent               |
//! | 11  | DHW store SOC                | same                                     |
//! | 12  | battery SOC                  | same                                     |
//! | 13  | local bus voltage            | affine over `normalization.voltage_pu`   |
//! | 14  | local voltage, previous step | same                                     |
//! | 15  | net building P               | P / (pv_rated + peak load)               |
//! | 16  | net building Q               | Q / (pv_rated + peak load)               |
//! | 17  | season flag                  | +1 summer, −1 otherwise                  |

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::building::{Building, ProfileSet};

use super::config::Normalization;

pub const OBS_DIM: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Everything one agent may see: its own building and its own bus voltage.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    pub building: &'a Building,
    pub t: usize,
    pub voltage: f64,
    pub voltage_lag: f64,
    pub net_p_kw: f64,
    pub net_q_kvar: f64,
    pub summer: bool,
}

fn affine(x: f64, [lo, hi]: [f64; 2]) -> f64 {
    (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

fn peak(series: &[f64]) -> f64 {
    series.iter().cloned().fold(0.0, f64::max)
}

fn relative(x: f64, max: f64) -> f64 {
    if max > 0.0 {
        (2.0 * x / max - 1.0).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Per-building scale factors derived once from the building's own profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScales {
    pub hvac_max: f64,
    pub dhw_max: f64,
    pub plug_max: f64,
    pub power: f64,
}

impl FeatureScales {
    pub fn for_profiles(profiles: &ProfileSet, pv_rated: f64) -> Self {
        let hvac_max = peak(&profiles.hvac_demand);
        let dhw_max = peak(&profiles.dhw_demand);
        let plug_max = peak(&profiles.plug_load);
        let power = (pv_rated + hvac_max + dhw_max + plug_max).max(1e-9);
        Self { hvac_max, dhw_max, plug_max, power }
    }
}

pub fn observe(view: &LocalView<'_>, scales: &FeatureScales, norm: &Normalization) -> Observation {
    let b = view.building;
    let p = &*b.profiles;
    let last = p.len() - 1;
    let t = view.t.min(last);
    let next = (view.t + 1).min(last);
    let hour = p.hour_of_day(view.t);
    let day_index = (view.t as f64 * p.dt / 24.0).floor() as u32;
    let weekday = ((p.start_day - 1 + day_index) % 7) as f64;
    let soc = |d: &Option<crate::building::StorageDevice>| d.as_ref().map_or(0.0, |d| 2.0 * d.soc_fraction() - 1.0);

    Observation([
        (2.0 * PI * hour / 24.0).sin(),
        (2.0 * PI * hour / 24.0).cos(),
        2.0 * weekday / 6.0 - 1.0,
        affine(p.outdoor_temp[t], norm.outdoor_temp_c),
        affine(p.outdoor_temp[next], norm.outdoor_temp_c),
        2.0 * p.solar_irradiance[t] - 1.0,
        2.0 * p.solar_irradiance[next] - 1.0,
        relative(p.hvac_demand[t], scales.hvac_max),
        relative(p.dhw_demand[t], scales.dhw_max),
        relative(p.plug_load[t], scales.plug_max),
        soc(&b.hvac_tes),
        soc(&b.dhw_tes),
        soc(&b.battery),
        affine(view.voltage, norm.voltage_pu),
        affine(view.voltage_lag, norm.voltage_pu),
        (view.net_p_kw / scales.power).clamp(-1.0, 1.0),
        (view.net_q_kvar / scales.power).clamp(-1.0, 1.0),
        if view.summer { 1.0 } else { -1.0 },
    ])
}
