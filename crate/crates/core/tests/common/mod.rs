#![allow(clippy::manual_clamp)]

//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's solvers or dispatch code.

#![allow(dead_code)]

use feeder_marl::grid::{BusKind, Network};
use num_complex::Complex64;

/// Gauss–Seidel load flow on the same constant-power model (capacitors as
/// fixed Q injections). Returns bus voltage magnitudes and the sweep count.
pub fn gauss_seidel(net: &Network, tol: f64, max_sweeps: usize) -> (Vec<f64>, usize) {
    let n = net.buses.len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for l in &net.lines {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.resistance, l.reactance);
        y[l.from_bus][l.from_bus] += ys;
        y[l.to_bus][l.to_bus] += ys;
        y[l.from_bus][l.to_bus] -= ys;
        y[l.to_bus][l.from_bus] -= ys;
    }
    let s: Vec<Complex64> = (0..n)
        .map(|i| {
            let inj = net.injections[i];
            Complex64::new(inj.p_mw, inj.q_mvar + net.buses[i].shunt_q) / net.base_mva
        })
        .collect();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for sweep in 1..=max_sweeps {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if net.buses[i].kind == BusKind::Slack {
                continue;
            }
            let mut acc = s[i].conj() / v[i].conj();
            for j in 0..n {
                if j != i {
                    acc -= y[i][j] * v[j];
                }
            }
            let new = acc / y[i][i];
            worst = worst.max((new - v[i]).norm());
            v[i] = new;
        }
        if worst < tol {
            return (v.iter().map(|x| x.norm()).collect(), sweep);
        }
    }
    panic!("Gauss-Seidel did not converge in {max_sweeps} sweeps");
}

/// Inputs of one storage dispatch call.
#[derive(Debug, Clone, Copy)]
pub struct DispatchCase {
    pub thermal: bool,
    pub cap_max: f64,
    pub soc: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub eta: f64,
    pub loss: f64,
    pub dt: f64,
    pub u: f64,
    pub p_demand: f64,
}

/// (consumption, p_stor, soc after) by straight-line transcription of the
/// dispatch rules, with the documented deviations: affine action map,
/// charge headroom after demand, discharge floor at −demand for thermal
/// devices, SOC clamp, and non-negative thermal consumption.
pub fn dispatch_oracle(c: DispatchCase) -> (f64, f64, f64) {
    let p_demand = if c.p_demand > 0.0 { c.p_demand } else { 0.0 };
    let u = if c.u > 1.0 {
        1.0
    } else if c.u < -1.0 {
        -1.0
    } else {
        c.u
    };
    let mut p_cons = (1.0 / c.eta) * p_demand;
    let p_request = c.p_min + (u + 1.0) / 2.0 * (c.p_max - c.p_min);
    let p_stor;
    if p_request >= 0.0 {
        let mut p_avail_ch = (c.cap_max - c.soc) / c.dt;
        let headroom = if c.p_max - p_demand > 0.0 { c.p_max - p_demand } else { 0.0 };
        if headroom < p_avail_ch {
            p_avail_ch = headroom;
        }
        let x = if p_request < p_avail_ch { p_request } else { p_avail_ch };
        p_stor = if x > 0.0 { x } else { 0.0 };
    } else {
        let mut p_avail_dis = -c.soc / c.dt;
        if c.p_min > p_avail_dis {
            p_avail_dis = c.p_min;
        }
        if c.thermal && -p_demand > p_avail_dis {
            p_avail_dis = -p_demand;
        }
        let x = if p_request > p_avail_dis { p_request } else { p_avail_dis };
        p_stor = if x < 0.0 { x } else { 0.0 };
    }
    let mut e_next = c.soc - c.loss + p_stor * c.dt;
    if e_next < 0.0 {
        e_next = 0.0;
    }
    if e_next > c.cap_max {
        e_next = c.cap_max;
    }
    p_cons += (1.0 / c.eta) * p_stor;
    if c.thermal && p_cons < 0.0 {
        p_cons = 0.0;
    }
    (p_cons, p_stor, e_next)
}
