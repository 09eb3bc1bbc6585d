//! Exogenous demand and weather series.
//!
//! Profiles start life at an hourly (or coarser) interval and are brought to
//! the simulation step by three rules: linear interpolation for weather,
//! HVAC and plug load; interpolation plus noise for solar irradiance; random
//! division of each interval's energy for hot water.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unit error at row {row}: {msg}")]
    Unit { row: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-step series sharing one length and one step `dt` (hours).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub dt: f64,
    /// Day of year (1-based) of the first sample.
    pub start_day: u32,
    /// HVAC thermal demand, kW.
    pub hvac_demand: Vec<f64>,
    /// Hot-water thermal demand, kW.
    pub dhw_demand: Vec<f64>,
    /// Non-shiftable electric load, kW.
    pub plug_load: Vec<f64>,
    /// Fraction of rated PV output available, [0, 1].
    pub solar_irradiance: Vec<f64>,
    /// Outdoor dry-bulb temperature, °C.
    pub outdoor_temp: Vec<f64>,
}

impl ProfileSet {
    pub fn len(&self) -> usize {
        self.plug_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plug_load.is_empty()
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let n = self.len();
        let lens = [
            self.hvac_demand.len(),
            self.dhw_demand.len(),
            self.solar_irradiance.len(),
            self.outdoor_temp.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(ProfileError::Schema("all series must share one length".into()));
        }
        if !(self.dt > 0.0) || !divides_hour(self.dt) {
            return Err(ProfileError::Schema(format!("dt {} h must divide one hour", self.dt)));
        }
        for (name, series) in [("hvac", &self.hvac_demand), ("dhw", &self.dhw_demand), ("plug", &self.plug_load)] {
            if let Some(row) = series.iter().position(|v| !(*v >= 0.0)) {
                return Err(ProfileError::Unit { row, msg: format!("{name} demand must be >= 0") });
            }
        }
        if let Some(row) = self.solar_irradiance.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(ProfileError::Unit { row, msg: "irradiance factor must be in [0, 1]".into() });
        }
        Ok(())
    }

    /// Hour of day (fractional) at step `t`.
    pub fn hour_of_day(&self, t: usize) -> f64 {
        (t as f64 * self.dt) % 24.0
    }

    /// Day of year at step `t`, wrapping after 365.
    pub fn day_of_year(&self, t: usize) -> u32 {
        let day = (t as f64 * self.dt / 24.0).floor() as u32;
        (self.start_day - 1 + day) % 365 + 1
    }
}

pub fn divides_hour(dt: f64) -> bool {
    if !(dt > 0.0) || dt > 1.0 {
        return false;
    }
    let n = (1.0 / dt).round();
    (n * dt - 1.0).abs() < 1e-9
}

/// Coarse-interval series before upsampling. DHW is average kW over each interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseProfiles {
    /// Interval length, hours.
    pub interval: f64,
    pub start_day: u32,
    pub hvac_demand: Vec<f64>,
    pub dhw_demand: Vec<f64>,
    pub plug_load: Vec<f64>,
    pub solar_irradiance: Vec<f64>,
    pub outdoor_temp: Vec<f64>,
}

/// Standard deviation of the noise added to interpolated irradiance.
pub const IRRADIANCE_NOISE_SD: f64 = 0.02;

fn interpolate(coarse: &[f64], factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(coarse.len() * factor);
    for (h, &x0) in coarse.iter().enumerate() {
        let x1 = coarse.get(h + 1).copied().unwrap_or(x0);
        for k in 0..factor {
            out.push(x0 + (x1 - x0) * k as f64 / factor as f64);
        }
    }
    out
}

/// Brings coarse profiles down to step `dt`. `irr_rng` must be shared by all
/// buildings under one sky; `dhw_rng` is per profile.
pub fn upsample(
    coarse: &CoarseProfiles,
    dt: f64,
    irr_rng: &mut ChaCha8Rng,
    dhw_rng: &mut ChaCha8Rng,
) -> Result<ProfileSet, ProfileError> {
    let ratio = coarse.interval / dt;
    let factor = ratio.round() as usize;
    if factor == 0 || (ratio - factor as f64).abs() > 1e-9 {
        return Err(ProfileError::Schema(format!(
            "interval {} h is not a whole multiple of dt {} h",
            coarse.interval, dt
        )));
    }

    let noise = Normal::new(0.0, IRRADIANCE_NOISE_SD).expect("valid sd");
    let solar_irradiance = interpolate(&coarse.solar_irradiance, factor)
        .into_iter()
        .map(|x| {
            if factor == 1 {
                return x;
            }
            let eps = noise.sample(irr_rng);
            if x > 0.0 {
                (x + eps).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let mut dhw_demand = Vec::with_capacity(coarse.dhw_demand.len() * factor);
    for &avg_kw in &coarse.dhw_demand {
        let weights: Vec<f64> = (0..factor).map(|_| Exp1.sample(dhw_rng)).collect::<Vec<f64>>();
        let total: f64 = weights.iter().sum();
        let energy = avg_kw * coarse.interval;
        dhw_demand.extend(weights.iter().map(|w| energy * w / total / dt));
    }

    let set = ProfileSet {
        dt,
        start_day: coarse.start_day,
        hvac_demand: interpolate(&coarse.hvac_demand, factor),
        dhw_demand,
        plug_load: interpolate(&coarse.plug_load, factor),
        solar_irradiance,
        outdoor_temp: interpolate(&coarse.outdoor_temp, factor),
    };
    set.validate()?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Synthetic profiles
// ---------------------------------------------------------------------------

/// Hourly demand shape of one building type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTemplate {
    pub name: String,
    pub plug_peak_kw: f64,
    /// Fraction of `plug_peak_kw` per hour of day.
    pub plug_shape: Vec<f64>,
    /// Weekend multiplier on plug load.
    pub weekend_factor: f64,
    pub hvac_base_kw: f64,
    pub cooling_kw_per_degc: f64,
    pub heating_kw_per_degc: f64,
    pub cooling_setpoint_c: f64,
    pub heating_setpoint_c: f64,
    pub dhw_daily_kwh: f64,
    /// Relative hot-water draw per hour of day.
    pub dhw_shape: Vec<f64>,
}

const RESIDENTIAL_PLUG: [f64; 24] = [
    0.35, 0.3, 0.28, 0.27, 0.28, 0.35, 0.55, 0.7, 0.6, 0.45, 0.4, 0.4, 0.42, 0.4, 0.4, 0.45, 0.6, 0.8, 1.0, 1.0,
    0.95, 0.8, 0.6, 0.45,
];
const RESIDENTIAL_DHW: [f64; 24] = [
    0.2, 0.1, 0.1, 0.1, 0.2, 0.6, 1.5, 2.0, 1.4, 0.9, 0.6, 0.5, 0.5, 0.4, 0.4, 0.5, 0.7, 1.0, 1.4, 1.6, 1.4, 1.0,
    0.7, 0.4,
];
const OFFICE_PLUG: [f64; 24] = [
    0.25, 0.25, 0.25, 0.25, 0.25, 0.3, 0.45, 0.7, 0.9, 1.0, 1.0, 1.0, 0.95, 1.0, 1.0, 0.95, 0.85, 0.65, 0.45,
    0.35, 0.3, 0.28, 0.26, 0.25,
];
const OFFICE_DHW: [f64; 24] = [
    0.05, 0.05, 0.05, 0.05, 0.05, 0.1, 0.4, 0.8, 1.0, 0.8, 0.7, 0.9, 1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.1,
    0.05, 0.05, 0.05,
];
const RETAIL_PLUG: [f64; 24] = [
    0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.5, 0.75, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.95, 0.9, 0.8, 0.6,
    0.35, 0.25, 0.2,
];
const RESTAURANT_PLUG: [f64; 24] = [
    0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.55, 0.7, 0.7, 0.65, 0.75, 1.0, 1.0, 0.85, 0.7, 0.7, 0.8, 1.0, 1.0, 0.95,
    0.8, 0.55, 0.35, 0.25,
];
const RESTAURANT_DHW: [f64; 24] = [
    0.05, 0.05, 0.05, 0.05, 0.05, 0.2, 0.6, 0.8, 0.7, 0.6, 0.9, 1.4, 1.4, 1.0, 0.7, 0.7, 0.9, 1.3, 1.4, 1.2, 0.9,
    0.6, 0.3, 0.1,
];

impl LoadTemplate {
    /// Built-in shapes: `multifamily`, `office`, `retail`, `strip_mall`, `restaurant`.
    pub fn builtin(name: &str) -> Option<Self> {
        let t = |plug_peak_kw,
                 plug: &[f64; 24],
                 weekend_factor,
                 hvac_base_kw,
                 cooling_kw_per_degc,
                 heating_kw_per_degc,
                 dhw_daily_kwh,
                 dhw: &[f64; 24]| LoadTemplate {
            name: name.to_string(),
            plug_peak_kw,
            plug_shape: plug.to_vec(),
            weekend_factor,
            hvac_base_kw,
            cooling_kw_per_degc,
            heating_kw_per_degc,
            cooling_setpoint_c: 22.0,
            heating_setpoint_c: 14.0,
            dhw_daily_kwh,
            dhw_shape: dhw.to_vec(),
        };
        Some(match name {
            "multifamily" => t(40.0, &RESIDENTIAL_PLUG, 1.1, 4.0, 4.0, 3.0, 120.0, &RESIDENTIAL_DHW),
            "office" => t(120.0, &OFFICE_PLUG, 0.4, 10.0, 12.0, 8.0, 40.0, &OFFICE_DHW),
            "retail" => t(80.0, &RETAIL_PLUG, 1.0, 6.0, 8.0, 5.0, 20.0, &OFFICE_DHW),
            "strip_mall" => t(100.0, &RETAIL_PLUG, 1.0, 8.0, 10.0, 6.0, 30.0, &OFFICE_DHW),
            "restaurant" => t(45.0, &RESTAURANT_PLUG, 1.1, 5.0, 5.0, 3.0, 150.0, &RESTAURANT_DHW),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.plug_shape.len() != 24 || self.dhw_shape.len() != 24 {
            return Err(ProfileError::Schema(format!("template {}: shapes need 24 hourly values", self.name)));
        }
        let nonneg = [
            self.plug_peak_kw,
            self.weekend_factor,
            self.hvac_base_kw,
            self.cooling_kw_per_degc,
            self.heating_kw_per_degc,
            self.dhw_daily_kwh,
        ];
        if nonneg.iter().chain(&self.plug_shape).chain(&self.dhw_shape).any(|v| !(*v >= 0.0)) {
            return Err(ProfileError::Unit { row: 0, msg: format!("template {}: negative parameter", self.name) });
        }
        if self.dhw_shape.iter().sum::<f64>() <= 0.0 {
            return Err(ProfileError::Schema(format!("template {}: dhw_shape sums to zero", self.name)));
        }
        Ok(())
    }
}

/// Climate knobs for the synthetic sky and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherParams {
    pub mean_temp_c: f64,
    pub seasonal_amp_c: f64,
    pub diurnal_amp_c: f64,
    /// Daily clearness is drawn uniformly from [1 − cloudiness, 1].
    pub cloudiness: f64,
    /// Irradiance factor at solar noon on a clear day.
    pub peak_irradiance: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self { mean_temp_c: 19.0, seasonal_amp_c: 9.0, diurnal_amp_c: 5.0, cloudiness: 0.4, peak_irradiance: 0.9 }
    }
}

/// Hourly temperature and irradiance shared by every building.
pub fn synthesize_weather(
    weather: &WeatherParams,
    seed: u64,
    start_day: u32,
    days: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng::stream(seed, "weather");
    let mut temp = Vec::with_capacity(days * 24);
    let mut irr = Vec::with_capacity(days * 24);
    let mut drift = 0.0f64;
    for d in 0..days {
        let doy = ((start_day as usize - 1 + d) % 365 + 1) as f64;
        let seasonal = weather.mean_temp_c + weather.seasonal_amp_c * (2.0 * PI * (doy - 110.0) / 365.0).sin();
        let day_length = 12.0 + 2.5 * (2.0 * PI * (doy - 80.0) / 365.0).sin();
        let sunrise = 12.0 - day_length / 2.0;
        let clearness = 1.0 - weather.cloudiness * rng.random::<f64>();
        for h in 0..24 {
            drift = 0.9 * drift + 0.5 * (rng.random::<f64>() - 0.5);
            let hour = h as f64;
            temp.push(seasonal + weather.diurnal_amp_c * (2.0 * PI * (hour - 15.0) / 24.0).cos() + drift);
            let solar_time = hour + 0.5 - sunrise;
            let shape = if solar_time > 0.0 && solar_time < day_length {
                (PI * solar_time / day_length).sin()
            } else {
                0.0
            };
            irr.push((weather.peak_irradiance * clearness * shape).clamp(0.0, 1.0));
        }
    }
    (temp, irr)
}

/// Hourly profiles for one template under the shared weather.
pub fn synthesize_hourly(
    template: &LoadTemplate,
    weather: &WeatherParams,
    seed: u64,
    start_day: u32,
    days: usize,
) -> CoarseProfiles {
    let (outdoor_temp, solar_irradiance) = synthesize_weather(weather, seed, start_day, days);
    let shape_total: f64 = template.dhw_shape.iter().sum();
    let mut hvac = Vec::with_capacity(days * 24);
    let mut plug = Vec::with_capacity(days * 24);
    let mut dhw = Vec::with_capacity(days * 24);
    for d in 0..days {
        let weekday = (start_day as usize - 1 + d) % 7;
        let weekend = if weekday >= 5 { template.weekend_factor } else { 1.0 };
        for h in 0..24 {
            let temp = outdoor_temp[d * 24 + h];
            let cooling = template.cooling_kw_per_degc * (temp - template.cooling_setpoint_c).max(0.0);
            let heating = template.heating_kw_per_degc * (template.heating_setpoint_c - temp).max(0.0);
            let occupied = 0.5 + 0.5 * template.plug_shape[h];
            hvac.push(template.hvac_base_kw + occupied * (cooling + heating));
            plug.push(template.plug_peak_kw * template.plug_shape[h] * weekend);
            dhw.push(template.dhw_daily_kwh * template.dhw_shape[h] / shape_total);
        }
    }
    CoarseProfiles {
        interval: 1.0,
        start_day,
        hvac_demand: hvac,
        dhw_demand: dhw,
        plug_load: plug,
        solar_irradiance,
        outdoor_temp,
    }
}

/// Synthetic per-step profiles for `template`; deterministic in `seed`.
pub fn synthesize_profiles(
    template: &LoadTemplate,
    weather: &WeatherParams,
    seed: u64,
    start_day: u32,
    days: usize,
    dt: f64,
) -> Result<ProfileSet, ProfileError> {
    if days == 0 {
        return Err(ProfileError::Schema("days must be >= 1".into()));
    }
    if !divides_hour(dt) {
        return Err(ProfileError::Schema(format!("dt {dt} h must divide one hour")));
    }
    if !(1..=365).contains(&start_day) {
        return Err(ProfileError::Schema(format!("start_day {start_day} outside 1..=365")));
    }
    template.validate()?;
    let hourly = synthesize_hourly(template, weather, seed, start_day, days);
    let mut irr_rng = rng::stream(seed, "irradiance-noise");
    let mut dhw_rng = rng::stream(seed, &format!("dhw/{}", template.name));
    upsample(&hourly, dt, &mut irr_rng, &mut dhw_rng)
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

pub const CSV_COLUMNS: [&str; 6] =
    ["timestamp", "hvac_demand_kw", "dhw_demand_kw", "plug_load_kw", "solar_irradiance", "outdoor_temp_c"];

fn parse_timestamp(s: &str, row: usize) -> Result<NaiveDateTime, ProfileError> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .map_err(|e| ProfileError::Parse { row, msg: format!("bad timestamp {s:?}: {e}") })
}

/// Reads a profile CSV (header row, ISO-8601 timestamps, columns as in
/// [`CSV_COLUMNS`]) and upsamples it to `dt` if its interval is coarser.
pub fn load_profiles_csv(path: &Path, dt: f64, seed: u64) -> Result<ProfileSet, ProfileError> {
    let text = std::fs::read_to_string(path)?;
    parse_profiles_csv(&text, dt, seed, &path.display().to_string())
}

pub fn parse_profiles_csv(text: &str, dt: f64, seed: u64, label: &str) -> Result<ProfileSet, ProfileError> {
    if !divides_hour(dt) {
        return Err(ProfileError::Schema(format!("dt {dt} h must divide one hour")));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ProfileError::Parse { row: 0, msg: e.to_string() })?.clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ProfileError::Schema(format!("missing column {name:?}")))?;
    }

    let mut stamps = Vec::new();
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| ProfileError::Parse { row, msg: e.to_string() })?;
        let field = |k: usize| record.get(index[k]).unwrap_or("");
        stamps.push(parse_timestamp(field(0), row)?);
        for (k, col) in cols.iter_mut().enumerate() {
            let raw = field(k + 1);
            let v: f64 = raw
                .parse()
                .map_err(|_| ProfileError::Parse { row, msg: format!("{}: not a number: {raw:?}", CSV_COLUMNS[k + 1]) })?;
            if !v.is_finite() {
                return Err(ProfileError::Parse { row, msg: format!("{}: non-finite value", CSV_COLUMNS[k + 1]) });
            }
            if k < 3 && v < 0.0 {
                return Err(ProfileError::Unit { row, msg: format!("{} is negative ({v})", CSV_COLUMNS[k + 1]) });
            }
            if k == 3 && !(0.0..=1.0).contains(&v) {
                return Err(ProfileError::Unit { row, msg: format!("solar_irradiance {v} outside [0, 1]") });
            }
            col.push(v);
        }
    }
    if stamps.len() < 2 {
        return Err(ProfileError::Schema("need at least two rows to infer the interval".into()));
    }
    let interval = (stamps[1] - stamps[0]).num_seconds() as f64 / 3600.0;
    if !(interval > 0.0) {
        return Err(ProfileError::Schema("timestamps must increase".into()));
    }
    for (i, w) in stamps.windows(2).enumerate() {
        let step = (w[1] - w[0]).num_seconds() as f64 / 3600.0;
        if (step - interval).abs() > 1e-9 {
            return Err(ProfileError::Parse { row: i + 2, msg: "irregular timestamp spacing".into() });
        }
    }
    if interval + 1e-9 < dt {
        return Err(ProfileError::Schema(format!("file interval {interval} h is finer than dt {dt} h")));
    }
    let [hvac, dhw, plug, irr, temp] = cols;
    let coarse = CoarseProfiles {
        interval,
        start_day: stamps[0].ordinal().min(365),
        hvac_demand: hvac,
        dhw_demand: dhw,
        plug_load: plug,
        solar_irradiance: irr,
        outdoor_temp: temp,
    };
    let mut irr_rng = rng::stream(seed, "irradiance-noise");
    let mut dhw_rng = rng::stream(seed, &format!("dhw-csv/{label}"));
    upsample(&coarse, dt, &mut irr_rng, &mut dhw_rng)
}

/// Writes a profile set in the CSV schema, starting at midnight of `start_day` in `year`.
pub fn write_profiles_csv(set: &ProfileSet, year: i32) -> String {
    let start = chrono::NaiveDate::from_yo_opt(year, set.start_day)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start day");
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for t in 0..set.len() {
        let stamp = start + chrono::Duration::seconds((t as f64 * set.dt * 3600.0).round() as i64);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            stamp.format("%Y-%m-%dT%H:%M:%S"),
            set.hvac_demand[t],
            set.dhw_demand[t],
            set.plug_load[t],
            set.solar_irradiance[t],
            set.outdoor_temp[t]
        ));
    }
    out
}
