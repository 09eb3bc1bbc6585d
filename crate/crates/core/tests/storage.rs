#![allow(clippy::type_complexity)]

mod common;

use common::{dispatch_oracle, DispatchCase};
use feeder_marl::building::{DeviceKind, StorageDevice};
use proptest::prelude::*;

use DeviceKind::{Battery, DhwTes, HvacTes};

fn device(kind: DeviceKind, soc: f64, eta: f64, loss: f64) -> StorageDevice {
    StorageDevice { kind, cap_max: 10.0, soc, p_max: 4.0, p_min: -4.0, efficiency: eta, loss_per_step: loss, dt: 0.25 }
}

/// Hand-traced cases on a 10 kWh, ±4 kW device with 15-minute steps, where
/// the request is simply 4u kW.
/// (kind, soc, u, demand, eta, loss) -> (p_request, p_stor, consumption, soc after)
#[rustfmt::skip]
const TABLE: &[(DeviceKind, f64, f64, f64, f64, f64, (f64, f64, f64, f64))] = &[
    (Battery, 5.0, 1.0, 0.0, 1.0, 0.0, (4.0, 4.0, 4.0, 6.0)),
    (Battery, 5.0, -1.0, 0.0, 1.0, 0.0, (-4.0, -4.0, -4.0, 4.0)),
    (Battery, 10.0, 1.0, 0.0, 1.0, 0.0, (4.0, 0.0, 0.0, 10.0)),
    (Battery, 0.0, -1.0, 0.0, 1.0, 0.0, (-4.0, 0.0, 0.0, 0.0)),
    (Battery, 9.5, 1.0, 0.0, 1.0, 0.0, (4.0, 2.0, 2.0, 10.0)),
    (Battery, 0.5, -1.0, 0.0, 1.0, 0.0, (-4.0, -2.0, -2.0, 0.0)),
    (Battery, 5.0, 0.5, 0.0, 0.8, 0.0, (2.0, 2.0, 2.5, 5.5)),
    (Battery, 5.0, -0.25, 0.0, 0.8, 0.0, (-1.0, -1.0, -1.25, 4.75)),
    (Battery, 5.0, 0.0, 0.0, 1.0, 0.0, (0.0, 0.0, 0.0, 5.0)),
    (HvacTes, 5.0, 1.0, 1.0, 1.0, 0.0, (4.0, 3.0, 4.0, 5.75)),
    (HvacTes, 5.0, 1.0, 5.0, 1.0, 0.0, (4.0, 0.0, 5.0, 5.0)),
    (HvacTes, 5.0, -1.0, 1.5, 1.0, 0.0, (-4.0, -1.5, 0.0, 4.625)),
    (HvacTes, 5.0, -1.0, 6.0, 1.0, 0.0, (-4.0, -4.0, 2.0, 4.0)),
    (HvacTes, 0.25, -1.0, 6.0, 1.0, 0.0, (-4.0, -1.0, 5.0, 0.0)),
    (HvacTes, 5.0, -1.0, 0.0, 1.0, 0.0, (-4.0, 0.0, 0.0, 5.0)),
    (DhwTes, 5.0, 0.5, 1.0, 0.8, 0.0, (2.0, 2.0, 3.75, 5.5)),
    (DhwTes, 5.0, -0.5, 1.0, 0.8, 0.0, (-2.0, -1.0, 0.0, 4.75)),
    (DhwTes, 5.0, -0.5, 3.0, 0.8, 0.0, (-2.0, -2.0, 1.25, 4.5)),
    (Battery, 5.0, 1.0, 0.0, 1.0, 0.1, (4.0, 4.0, 4.0, 5.9)),
    (HvacTes, 0.05, 0.0, 2.0, 1.0, 0.1, (0.0, 0.0, 2.0, 0.0)),
    (Battery, 5.0, 1.7, 0.0, 1.0, 0.0, (4.0, 4.0, 4.0, 6.0)),
    (HvacTes, 5.0, 1.0, -3.0, 1.0, 0.0, (4.0, 4.0, 4.0, 6.0)),
    (DhwTes, 10.0, 1.0, 2.0, 1.0, 0.0, (4.0, 0.0, 2.0, 10.0)),
];

#[test]
fn hand_traced_table() {
    for (i, &(kind, soc, u, demand, eta, loss, (req, stor, cons, soc_after))) in TABLE.iter().enumerate() {
        let mut d = device(kind, soc, eta, loss);
        let out = d.charge(u, demand);
        let got = (out.p_request, out.p_stor, out.consumption, d.soc);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(
            close(got.0, req) && close(got.1, stor) && close(got.2, cons) && close(got.3, soc_after),
            "case {i}: got {got:?}, expected {:?}",
            (req, stor, cons, soc_after)
        );
        let (oc, os, oe) = dispatch_oracle(case_of(&device(kind, soc, eta, loss), u, demand));
        assert!(close(oc, cons) && close(os, stor) && close(oe, soc_after), "oracle disagrees on case {i}");
    }
}

#[test]
fn asymmetric_limits_shift_the_idle_point() {
    let mut d = StorageDevice { p_min: -2.0, ..device(Battery, 5.0, 1.0, 0.0) };
    let out = d.charge(0.0, 0.0);
    assert_eq!((out.p_request, out.p_stor, d.soc), (1.0, 1.0, 5.25));
}

fn case_of(d: &StorageDevice, u: f64, p_demand: f64) -> DispatchCase {
    DispatchCase {
        thermal: d.kind.is_thermal(),
        cap_max: d.cap_max,
        soc: d.soc,
        p_max: d.p_max,
        p_min: d.p_min,
        eta: d.efficiency,
        loss: d.loss_per_step,
        dt: d.dt,
        u,
        p_demand,
    }
}

fn arb_device() -> impl Strategy<Value = StorageDevice> {
    (
        prop_oneof![Just(HvacTes), Just(DhwTes), Just(Battery)],
        0.5f64..200.0,
        0.0f64..=1.0,
        0.1f64..50.0,
        0.2f64..1.5,
        0.5f64..=1.0,
        0.0f64..0.01,
        prop_oneof![Just(0.25), Just(0.5), Just(1.0)],
    )
        .prop_map(|(kind, cap, frac, p_max, asym, eta, loss, dt)| StorageDevice {
            kind,
            cap_max: cap,
            soc: frac * cap,
            p_max,
            p_min: -p_max * asym,
            efficiency: eta,
            loss_per_step: loss * cap,
            dt,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_oracle_exactly(dev in arb_device(), u in -1.3f64..1.3, demand in -5.0f64..60.0) {
        let demand = if dev.kind.is_thermal() { demand } else { 0.0 };
        let expected = dispatch_oracle(case_of(&dev, u, demand));
        let mut d = dev.clone();
        let out = d.charge(u, demand);
        prop_assert_eq!((out.consumption, out.p_stor, d.soc), expected);
    }

    #[test]
    fn soc_stays_in_bounds_and_demand_is_served(dev in arb_device(), u in -1.0f64..=1.0, demand in 0.0f64..60.0) {
        let demand = if dev.kind.is_thermal() { demand } else { 0.0 };
        let mut d = dev.clone();
        let out = d.charge(u, demand);
        prop_assert!((0.0..=d.cap_max).contains(&d.soc));
        prop_assert!(out.p_stor >= dev.p_min - 1e-12 && out.p_stor <= dev.p_max + 1e-12);
        if dev.kind.is_thermal() {
            prop_assert!(out.consumption >= 0.0);
            prop_assert!(dev.efficiency * out.consumption - out.p_stor >= demand - 1e-9);
            prop_assert!(out.p_stor >= -demand - 1e-12);
        }
        // Storage never moves against the request's sign.
        prop_assert!(out.p_stor * out.p_request >= 0.0);
    }

    #[test]
    fn full_and_empty_devices_ignore_requests(dev in arb_device(), demand in 0.0f64..10.0) {
        let demand = if dev.kind.is_thermal() { demand } else { 0.0 };
        let mut full = StorageDevice { soc: dev.cap_max, ..dev.clone() };
        prop_assert_eq!(full.charge(1.0, demand).p_stor, 0.0);
        let mut empty = StorageDevice { soc: 0.0, ..dev };
        prop_assert_eq!(empty.charge(-1.0, demand).p_stor, 0.0);
    }
}
