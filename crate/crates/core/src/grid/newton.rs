//! Polar-form Newton–Raphson AC power flow.
//!
//! Unknowns are the angles and magnitudes of every PQ bus; the slack bus is
//! held at 1.0 p.u., 0 rad. The Jacobian is assembled analytically from the
//! dense bus admittance matrix, which is plenty for feeders of a few hundred
//! buses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::{BusKind, Network};
use super::GridError;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub converged: bool,
    /// Number of mismatch evaluations, including the one that met the tolerance.
    pub iterations: usize,
    /// Largest per-bus |ΔS| in p.u. at the returned point.
    pub max_mismatch: f64,
    pub voltage_mag: Vec<f64>,
    pub voltage_ang: Vec<f64>,
}

/// Real and imaginary parts of the bus admittance matrix.
#[derive(Debug, Clone)]
pub struct Admittance {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Admittance {
    pub fn build(net: &Network) -> Self {
        let n = net.bus_count();
        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for line in &net.lines {
            let den = line.resistance * line.resistance + line.reactance * line.reactance;
            let (gs, bs) = (line.resistance / den, -line.reactance / den);
            let (i, j) = (line.from_bus, line.to_bus);
            g[(i, i)] += gs;
            g[(j, j)] += gs;
            g[(i, j)] -= gs;
            g[(j, i)] -= gs;
            b[(i, i)] += bs;
            b[(j, j)] += bs;
            b[(i, j)] -= bs;
            b[(j, i)] -= bs;
        }
        Self { g, b }
    }

    /// Calculated bus injections (P, Q) in p.u. at the given voltages.
    pub fn bus_power(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = vm.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut pi, mut qi) = (0.0, 0.0);
            for j in 0..n {
                let (gij, bij) = (self.g[(i, j)], self.b[(i, j)]);
                if gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let (s, c) = (va[i] - va[j]).sin_cos();
                pi += vm[j] * (gij * c + bij * s);
                qi += vm[j] * (gij * s - bij * c);
            }
            p[i] = vm[i] * pi;
            q[i] = vm[i] * qi;
        }
        (p, q)
    }
}

/// Largest per-bus complex power mismatch (p.u.) over non-slack buses.
pub fn power_mismatch(net: &Network, vm: &[f64], va: &[f64]) -> f64 {
    let ybus = Admittance::build(net);
    let spec = net.specified_power_pu();
    let (p, q) = ybus.bus_power(vm, va);
    net.buses
        .iter()
        .filter(|b| b.kind == BusKind::Pq)
        .map(|b| (spec[b.id].0 - p[b.id]).hypot(spec[b.id].1 - q[b.id]))
        .fold(0.0, f64::max)
}

pub fn solve_power_flow(net: &Network, tol: f64, max_iter: usize) -> Result<PowerFlowResult, GridError> {
    solve_power_flow_warm(net, tol, max_iter, None)
}

/// Same as [`solve_power_flow`], optionally starting from a previous solution
/// instead of the flat profile.
pub fn solve_power_flow_warm(
    net: &Network,
    tol: f64,
    max_iter: usize,
    init: Option<&PowerFlowResult>,
) -> Result<PowerFlowResult, GridError> {
    if !(tol > 0.0) {
        return Err(GridError::InvalidTolerance(tol));
    }
    let n = net.bus_count();
    let slack = net.slack_bus();
    let ybus = Admittance::build(net);
    let spec = net.specified_power_pu();

    // PQ bus -> position in the unknown vector.
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();

    let (mut vm, mut va) = match init {
        Some(r) if r.voltage_mag.len() == n && r.converged => (r.voltage_mag.clone(), r.voltage_ang.clone()),
        _ => (vec![1.0; n], vec![0.0; n]),
    };
    vm[slack] = 1.0;
    va[slack] = 0.0;

    if m == 0 {
        return Ok(PowerFlowResult { converged: true, iterations: 1, max_mismatch: 0.0, voltage_mag: vm, voltage_ang: va });
    }

    let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
    let mut rhs = DVector::<f64>::zeros(2 * m);
    let mut last_mismatch = f64::INFINITY;

    for iter in 1..=max_iter {
        let (p, q) = ybus.bus_power(&vm, &va);
        let mut worst = 0.0f64;
        for (k, &i) in pq.iter().enumerate() {
            let dp = spec[i].0 - p[i];
            let dq = spec[i].1 - q[i];
            rhs[k] = dp;
            rhs[m + k] = dq;
            worst = worst.max(dp.hypot(dq));
        }
        last_mismatch = worst;
        if !worst.is_finite() {
            break;
        }
        if worst <= tol {
            return Ok(PowerFlowResult {
                converged: true,
                iterations: iter,
                max_mismatch: worst,
                voltage_mag: vm,
                voltage_ang: va,
            });
        }
        if iter == max_iter {
            break;
        }

        jac.fill(0.0);
        for (r, &i) in pq.iter().enumerate() {
            let vi = vm[i];
            for (c, &j) in pq.iter().enumerate() {
                let (gij, bij) = (ybus.g[(i, j)], ybus.b[(i, j)]);
                if i == j {
                    let (gii, bii) = (gij, bij);
                    jac[(r, c)] = -q[i] - bii * vi * vi;
                    jac[(r, m + c)] = p[i] / vi + gii * vi;
                    jac[(m + r, c)] = p[i] - gii * vi * vi;
                    jac[(m + r, m + c)] = q[i] / vi - bii * vi;
                } else {
                    if gij == 0.0 && bij == 0.0 {
                        continue;
                    }
                    let vj = vm[j];
                    let (s, co) = (va[i] - va[j]).sin_cos();
                    let a = gij * s - bij * co;
                    let b = gij * co + bij * s;
                    jac[(r, c)] = vi * vj * a;
                    jac[(r, m + c)] = vi * b;
                    jac[(m + r, c)] = -vi * vj * b;
                    jac[(m + r, m + c)] = vi * a;
                }
            }
        }

        let step = match jac.clone().lu().solve(&rhs) {
            Some(dx) => dx,
            None => break,
        };
        for (k, &i) in pq.iter().enumerate() {
            va[i] += step[k];
            vm[i] += step[m + k];
        }
    }

    Err(GridError::NonConvergence { iterations: max_iter, mismatch: last_mismatch })
}
