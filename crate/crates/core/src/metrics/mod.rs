//! Voltage statistics over episode logs.

mod log;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{AgentRecord, BuildingMeta, EpisodeLog, AGENTS_FILE, META_FILE, VOLTAGES_FILE};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("episode log is empty")]
    EmptyLog,
    #[error("logs differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MetricsError {
    fn from(e: serde_json::Error) -> Self {
        MetricsError::Malformed(e.to_string())
    }
}

pub const HIST_LOW: f64 = 0.94;
pub const HIST_HIGH: f64 = 1.06;
pub const DEFAULT_BIN_WIDTH: f64 = 0.005;

/// Bus-step samples beyond each threshold (strict inequalities).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub over_104: u64,
    pub over_103: u64,
    pub under_097: u64,
    pub under_096: u64,
    pub samples: u64,
}

impl ViolationReport {
    pub fn rows(&self) -> [(&'static str, u64); 4] {
        [
            ("v > 1.04", self.over_104),
            ("v > 1.03", self.over_103),
            ("v < 0.97", self.under_097),
            ("v < 0.96", self.under_096),
        ]
    }
}

pub fn violation_counts(log: &EpisodeLog) -> Result<ViolationReport, MetricsError> {
    if log.steps() == 0 || log.bus_count() == 0 {
        return Err(MetricsError::EmptyLog);
    }
    let mut r = ViolationReport::default();
    for &v in log.voltages.iter().flatten() {
        r.samples += 1;
        r.over_104 += (v > 1.04) as u64;
        r.over_103 += (v > 1.03) as u64;
        r.under_097 += (v < 0.97) as u64;
        r.under_096 += (v < 0.96) as u64;
    }
    assert!(r.over_104 <= r.over_103 && r.under_096 <= r.under_097, "threshold nesting violated");
    Ok(r)
}

/// 100·(baseline − other)/baseline; `None` when the baseline count is zero.
pub fn percent_reduction(baseline: f64, other: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (baseline - other) / baseline)
}

fn deviation_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt()
}

/// Per-step L2 norm of the voltage deviation, smoothed by a centered moving
/// average of `window` steps. The window shrinks at the ends.
pub fn deviation_norm_series(log: &EpisodeLog, window: usize) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::InvalidArgument("window must be >= 1".into()));
    }
    let raw: Vec<f64> = log.voltages.iter().map(|r| deviation_norm(r)).collect();
    let n = raw.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, x) in raw.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let back = (window - 1) / 2;
    let ahead = window / 2;
    Ok((0..n)
        .map(|i| {
            if window == 1 {
                return raw[i];
            }
            let lo = i.saturating_sub(back);
            let hi = (i + ahead + 1).min(n);
            if window >= n {
                prefix[n] / n as f64
            } else {
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn voltage_envelope(log: &EpisodeLog) -> Result<Vec<Envelope>, MetricsError> {
    if log.steps() == 0 || log.bus_count() == 0 {
        return Err(MetricsError::EmptyLog);
    }
    Ok(log
        .voltages
        .iter()
        .map(|r| Envelope {
            min: r.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: r.iter().sum::<f64>() / r.len() as f64,
            max: r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}

/// Counts over [0.94, 1.06] in `bin_width` steps, plus an open bin at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub below: u64,
    pub counts: Vec<u64>,
    pub above: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.below + self.above + self.counts.iter().sum::<u64>()
    }
}

pub fn voltage_histogram(log: &EpisodeLog, bin_width: f64) -> Result<Histogram, MetricsError> {
    if !(bin_width > 0.0) {
        return Err(MetricsError::InvalidArgument("bin_width must be positive".into()));
    }
    let nbins = ((HIST_HIGH - HIST_LOW) / bin_width - 1e-9).ceil() as usize;
    let edges: Vec<f64> = (0..=nbins).map(|k| (HIST_LOW + k as f64 * bin_width).min(HIST_HIGH)).collect();
    let mut h = Histogram { edges, below: 0, counts: vec![0; nbins], above: 0 };
    for &v in log.voltages.iter().flatten() {
        if v < HIST_LOW {
            h.below += 1;
        } else if v >= HIST_HIGH {
            h.above += 1;
        } else {
            let k = (((v - HIST_LOW) / bin_width).floor() as usize).min(nbins - 1);
            h.counts[k] += 1;
        }
    }
    Ok(h)
}

/// Mean and variance of one action or SOC channel over logged samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub samples: u64,
    pub mean: f64,
    pub variance: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> ChannelSummary {
    let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    ChannelSummary { samples: n, mean, variance: if n > 0 { m2 / n as f64 } else { 0.0 } }
}

pub const ACTION_CHANNELS: [&str; 4] = ["u_hvac", "u_dhw", "curtailment", "phase_lag"];
pub const SOC_CHANNELS: [&str; 3] = ["soc_hvac", "soc_dhw", "soc_battery"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub violations: ViolationReport,
    /// Mean over steps of the per-step deviation norm.
    pub mean_deviation_norm: f64,
    /// Deviation norm of the episode-averaged voltage profile.
    pub episode_deviation_norm: f64,
    pub mean_reward: f64,
    pub actions: Vec<(String, ChannelSummary)>,
    pub socs: Vec<(String, ChannelSummary)>,
}

pub fn summarize_log(log: &EpisodeLog) -> Result<LogSummary, MetricsError> {
    let violations = violation_counts(log)?;
    let n = log.steps() as f64;
    let mean_deviation_norm = log.voltages.iter().map(|r| deviation_norm(r)).sum::<f64>() / n;
    let avg: Vec<f64> =
        (0..log.bus_count()).map(|b| log.voltages.iter().map(|r| r[b]).sum::<f64>() / n).collect();
    let rewards = log.mean_reward(None);
    let rows = || log.agents.iter().flatten();
    Ok(LogSummary {
        violations,
        mean_deviation_norm,
        episode_deviation_norm: deviation_norm(&avg),
        mean_reward: rewards.iter().sum::<f64>() / n,
        actions: ACTION_CHANNELS
            .iter()
            .enumerate()
            .map(|(k, name)| (name.to_string(), summarize(rows().filter_map(|r| r.action[k]))))
            .collect(),
        socs: SOC_CHANNELS
            .iter()
            .enumerate()
            .map(|(k, name)| (name.to_string(), summarize(rows().filter_map(|r| r.soc[k]))))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub label: String,
    pub baseline: u64,
    pub other: u64,
    pub percent_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub violations: Vec<ViolationRow>,
    /// Percent reduction of the step-averaged deviation norm.
    pub deviation_reduction_per_step: Option<f64>,
    /// Percent reduction of the deviation norm of the episode-mean profile.
    pub deviation_reduction_per_episode: Option<f64>,
    pub baseline: LogSummary,
    pub other: LogSummary,
}

/// Compares `other` against `baseline`; positive percentages mean `other`
/// has fewer violations or smaller deviations.
pub fn compare(other: &EpisodeLog, baseline: &EpisodeLog) -> Result<ComparisonReport, MetricsError> {
    if other.steps() != baseline.steps() || other.bus_count() != baseline.bus_count() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} steps x {} buses vs {} steps x {} buses",
            other.steps(),
            other.bus_count(),
            baseline.steps(),
            baseline.bus_count()
        )));
    }
    let b = summarize_log(baseline)?;
    let o = summarize_log(other)?;
    let violations = b
        .violations
        .rows()
        .iter()
        .zip(o.violations.rows())
        .map(|(&(label, bv), (_, ov))| ViolationRow {
            label: label.into(),
            baseline: bv,
            other: ov,
            percent_reduction: percent_reduction(bv as f64, ov as f64),
        })
        .collect();
    Ok(ComparisonReport {
        violations,
        deviation_reduction_per_step: percent_reduction(b.mean_deviation_norm, o.mean_deviation_norm),
        deviation_reduction_per_episode: percent_reduction(b.episode_deviation_norm, o.episode_deviation_norm),
        baseline: b,
        other: o,
    })
}

/// One decimal, truncated toward zero (34.48 prints as 34.4). A 1e-6 nudge
/// keeps values like 49.99999999999 from dropping a digit.
pub fn format_percent(x: f64) -> String {
    let t = (x * 10.0 + x.signum() * 1e-6).trunc() / 10.0;
    format!("{:.1}", if t == 0.0 { 0.0 } else { t })
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{}%", format_percent(v)))
}

impl ComparisonReport {
    /// Aligned text table: one row per threshold, then the deviation norms.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<10} {:>10} {:>10} {:>12}", "", "Baseline", "RL", "% reduction").unwrap();
        for r in &self.violations {
            writeln!(out, "{:<10} {:>10} {:>10} {:>12}", r.label, r.baseline, r.other, pct(r.percent_reduction))
                .unwrap();
        }
        writeln!(
            out,
            "{:<10} {:>10.5} {:>10.5} {:>12}",
            "|v-1| step",
            self.baseline.mean_deviation_norm,
            self.other.mean_deviation_norm,
            pct(self.deviation_reduction_per_step)
        )
        .unwrap();
        writeln!(
            out,
            "{:<10} {:>10.5} {:>10.5} {:>12}",
            "|v-1| ep",
            self.baseline.episode_deviation_norm,
            self.other.episode_deviation_norm,
            pct(self.deviation_reduction_per_episode)
        )
        .unwrap();
        out
    }
}

/// `step,min,mean,max,deviation_norm,deviation_norm_smoothed` for plotting.
pub fn series_csv(log: &EpisodeLog, window: usize) -> Result<String, MetricsError> {
    let env = voltage_envelope(log)?;
    let raw = deviation_norm_series(log, 1)?;
    let smooth = deviation_norm_series(log, window)?;
    let mut out = String::from("step,min,mean,max,deviation_norm,deviation_norm_smoothed\n");
    for t in 0..env.len() {
        let e = env[t];
        writeln!(out, "{t},{},{},{},{},{}", e.min, e.mean, e.max, raw[t], smooth[t]).unwrap();
    }
    Ok(out)
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("low,high,count\n");
    writeln!(out, "-inf,{},{}", HIST_LOW, h.below).unwrap();
    for (k, c) in h.counts.iter().enumerate() {
        writeln!(out, "{},{},{c}", h.edges[k], h.edges[k + 1]).unwrap();
    }
    writeln!(out, "{},inf,{}", HIST_HIGH, h.above).unwrap();
    out
}
