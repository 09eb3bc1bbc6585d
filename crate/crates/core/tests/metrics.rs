use feeder_marl::building::Controller;
use feeder_marl::metrics::{
    compare, deviation_norm_series, format_percent, percent_reduction, violation_counts, voltage_envelope,
    voltage_histogram, AgentRecord, BuildingMeta, EpisodeLog,
};
use proptest::prelude::*;

fn log_of(rows: &[Vec<f64>]) -> EpisodeLog {
    let meta = vec![BuildingMeta { bus: 1, building_type: "house".into(), controller: Controller::Rl }];
    let mut log = EpisodeLog::new(0.25, meta);
    for (t, r) in rows.iter().enumerate() {
        let rec = AgentRecord { action: [Some(0.1), None, Some(0.0), Some(0.0)], soc: [Some(t as f64), None, None], reward: 0.5 };
        log.push(r.clone(), vec![rec]);
    }
    log
}

fn rows(steps: usize, buses: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.9f64..1.1, buses), steps)
}

/// Counts by direct scan, one threshold at a time.
fn scan(rows: &[Vec<f64>], pred: impl Fn(f64) -> bool) -> u64 {
    rows.iter().flatten().filter(|&&v| pred(v)).count() as u64
}

#[test]
fn reduction_hand_values() {
    assert_eq!(format_percent(percent_reduction(812.0, 532.0).unwrap()), "34.4");
    assert_eq!(percent_reduction(0.0, 5.0), None);
    assert_eq!(format_percent(percent_reduction(100.0, 150.0).unwrap()), "-50.0");
    assert_eq!(format_percent(percent_reduction(10.0, 10.0).unwrap()), "0.0");
}

#[test]
fn threshold_edges_follow_strict_inequalities() {
    let r = violation_counts(&log_of(&[vec![1.04, 1.03, 0.97, 0.96]])).unwrap();
    assert_eq!((r.over_104, r.over_103, r.under_097, r.under_096), (0, 1, 1, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_match_a_direct_scan(r in (1usize..40, 1usize..12).prop_flat_map(|(s, b)| rows(s, b))) {
        let v = violation_counts(&log_of(&r)).unwrap();
        prop_assert_eq!(v.over_104, scan(&r, |x| x > 1.04));
        prop_assert_eq!(v.over_103, scan(&r, |x| x > 1.03));
        prop_assert_eq!(v.under_097, scan(&r, |x| x < 0.97));
        prop_assert_eq!(v.under_096, scan(&r, |x| x < 0.96));
        prop_assert_eq!(v.samples, (r.len() * r[0].len()) as u64);
        prop_assert!(v.over_104 <= v.over_103 && v.under_096 <= v.under_097);
    }

    #[test]
    fn histogram_keeps_every_sample(r in (1usize..30, 1usize..10).prop_flat_map(|(s, b)| rows(s, b)), w in 0.001f64..0.05) {
        let h = voltage_histogram(&log_of(&r), w).unwrap();
        prop_assert_eq!(h.total(), (r.len() * r[0].len()) as u64);
        prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
    }

    #[test]
    fn envelope_brackets_the_mean(r in (1usize..30, 1usize..10).prop_flat_map(|(s, b)| rows(s, b))) {
        for (e, row) in voltage_envelope(&log_of(&r)).unwrap().iter().zip(&r) {
            prop_assert!(e.min <= e.mean + 1e-15 && e.mean <= e.max + 1e-15);
            prop_assert!(row.contains(&e.min) && row.contains(&e.max));
        }
    }

    #[test]
    fn smoothing_preserves_constant_series(d in 0.0f64..0.1, steps in 1usize..50, window in 1usize..60) {
        let r = vec![vec![1.0 + d, 1.0 - d]; steps];
        let want = (2.0 * d * d).sqrt();
        for x in deviation_norm_series(&log_of(&r), window).unwrap() {
            prop_assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_a_comparison_flips_its_sign(
        (a, b) in (1usize..20, 1usize..8).prop_flat_map(|(s, n)| (rows(s, n), rows(s, n)))
    ) {
        let (la, lb) = (log_of(&a), log_of(&b));
        let fwd = compare(&la, &lb).unwrap();
        let back = compare(&lb, &la).unwrap();
        for (f, g) in fwd.violations.iter().zip(&back.violations) {
            match (f.percent_reduction, g.percent_reduction) {
                (Some(x), Some(y)) => prop_assert!(x * y <= 0.0 && (x == 0.0) == (y == 0.0)),
                (x, y) => prop_assert!(x.is_none() || y.is_none()),
            }
        }
        let same = compare(&la, &la).unwrap();
        prop_assert!(same.violations.iter().all(|v| v.percent_reduction.unwrap_or(0.0) == 0.0));
    }

    #[test]
    fn csv_roundtrip_is_bit_exact(r in (1usize..20, 1usize..8).prop_flat_map(|(s, b)| rows(s, b))) {
        let log = log_of(&r);
        let dir = tempfile::tempdir().unwrap();
        log.write_dir(dir.path()).unwrap();
        let back = EpisodeLog::read_dir(dir.path()).unwrap();
        prop_assert_eq!(back, log);
    }
}
