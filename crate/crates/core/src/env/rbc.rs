//! Voltage reward and the rule-based baseline schedule.

use crate::building::Building;

use super::config::RbcSchedule;
use super::Action;

/// Peaks at 1 when `v` is exactly 1 p.u. and falls off quadratically.
pub fn reward(v: f64, alpha: f64) -> f64 {
    let d = alpha * (v - 1.0);
    1.0 - d * d
}

fn in_window(hour: f64, [start, end]: [f64; 2]) -> bool {
    if start <= end {
        hour >= start && hour < end
    } else {
        hour >= start || hour < end
    }
}

/// Storage signal of the diurnal schedule at a given hour of day.
pub fn rbc_storage_signal(schedule: &RbcSchedule, hour: f64) -> f64 {
    if in_window(hour, schedule.charge_hours) {
        schedule.magnitude
    } else if in_window(hour, schedule.discharge_hours) {
        -schedule.magnitude
    } else {
        0.0
    }
}

/// Baseline action in the building's action layout: the same storage signal
/// for every thermal store, no curtailment, unity power factor.
pub fn rbc_action(bld: &Building, t: usize, schedule: &RbcSchedule) -> Action {
    let u = rbc_storage_signal(schedule, bld.profiles.hour_of_day(t));
    let mut v = Vec::with_capacity(4);
    if bld.hvac_tes.is_some() {
        v.push(u);
    }
    if bld.dhw_tes.is_some() {
        v.push(u);
    }
    v.push(-1.0);
    v.push(0.0);
    Action(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_vertex_and_band_edge() {
        assert_eq!(reward(1.0, 20.0), 1.0);
        assert!(reward(1.05, 20.0).abs() < 1e-12);
        assert!(reward(0.95, 20.0).abs() < 1e-12);
        assert!(reward(1.1, 20.0) < 0.0);
    }

    #[test]
    fn schedule_windows() {
        let s = RbcSchedule::default();
        assert_eq!(rbc_storage_signal(&s, 3.0), 0.34);
        assert_eq!(rbc_storage_signal(&s, 23.5), 0.34);
        assert_eq!(rbc_storage_signal(&s, 18.0), -0.34);
        assert_eq!(rbc_storage_signal(&s, 12.0), 0.0);
        assert_eq!(rbc_storage_signal(&s, 7.0), 0.0);
        assert_eq!(rbc_storage_signal(&s, 21.0), 0.0);
    }
}
