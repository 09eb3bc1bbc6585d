//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false`.

#![allow(clippy::type_complexity)]

mod common;

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use common::{dispatch_oracle, gauss_seidel, DispatchCase};
use feeder_marl::building::{Controller, DeviceKind, StorageDevice};
use feeder_marl::env::{reward, run_episode, AgentPolicy, Controllers, Environment, ScenarioConfig};
use feeder_marl::grid::{load_ieee33, solve_power_flow};
use feeder_marl::metrics::{
    format_percent, percent_reduction, violation_counts, AgentRecord, BuildingMeta, EpisodeLog,
};
use feeder_marl::ppo::{
    clipped_objective, loss_and_grad, sample_action, BatchItem, PolicyState, PpoConfig, ToyEnv, ToyReward,
    Trainer, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn power_flow() -> Outcome {
    let net = load_ieee33();
    let r = solve_power_flow(&net, 1e-8, 30).map_err(|e| e.to_string())?;
    let (worst_bus, vmin) = r
        .voltage_mag
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let (gs, _) = gauss_seidel(&net, 1e-12, 200_000);
    let gs_gap = gs.iter().zip(&r.voltage_mag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let reps = 200;
    let t0 = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(solve_power_flow(&net, 1e-8, 30).map_err(|e| e.to_string())?);
    }
    let per_solve = t0.elapsed() / reps;
    check(
        r.converged
            && r.iterations <= 10
            && worst_bus == 17
            && (vmin - 0.9131).abs() <= 0.001
            && gs_gap < 1e-6
            && per_solve < Duration::from_millis(10),
        format!(
            "{} iterations, min {vmin:.4} p.u. at bus {worst_bus}, Gauss-Seidel gap {gs_gap:.1e}, {per_solve:?} per solve",
            r.iterations
        ),
    )
}

fn storage_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t0 = Instant::now();
    let mut mismatches = 0;
    let mut broken = 0;
    for k in 0..10_000 {
        let kind = [DeviceKind::HvacTes, DeviceKind::DhwTes, DeviceKind::Battery][k % 3];
        let cap = rng.random_range(0.5..200.0);
        let p_max = rng.random_range(0.1..50.0);
        let dev = StorageDevice {
            kind,
            cap_max: cap,
            // Hit the bounds exactly now and then.
            soc: match k % 10 {
                0 => 0.0,
                1 => cap,
                _ => rng.random_range(0.0..=cap),
            },
            p_max,
            p_min: -p_max * rng.random_range(0.2..1.5),
            efficiency: rng.random_range(0.5..=1.0),
            loss_per_step: if k % 4 == 0 { 0.0 } else { rng.random_range(0.0..0.01) * cap },
            dt: [0.25, 0.5, 1.0][k % 3],
        };
        let u = match k % 7 {
            0 => -1.0,
            1 => 1.0,
            2 => 0.0,
            _ => rng.random_range(-1.2..1.2),
        };
        let p_demand = if kind.is_thermal() && k % 5 != 0 { rng.random_range(0.0..60.0) } else { 0.0 };
        let expected = dispatch_oracle(DispatchCase {
            thermal: kind.is_thermal(),
            cap_max: dev.cap_max,
            soc: dev.soc,
            p_max: dev.p_max,
            p_min: dev.p_min,
            eta: dev.efficiency,
            loss: dev.loss_per_step,
            dt: dev.dt,
            u,
            p_demand,
        });
        let mut d = dev.clone();
        let out = d.charge(u, p_demand);
        if (out.consumption, out.p_stor, d.soc) != expected {
            mismatches += 1;
        }
        let delivered = dev.efficiency * out.consumption - out.p_stor;
        let soc_ok = (0.0..=dev.cap_max).contains(&d.soc);
        let demand_ok = !kind.is_thermal() || (out.consumption >= 0.0 && delivered >= p_demand - 1e-9);
        if !soc_ok || !demand_ok {
            broken += 1;
        }
    }
    let dt = t0.elapsed();
    check(
        mismatches == 0 && broken == 0 && dt < Duration::from_secs(5),
        format!("10000 fuzzed cases, {mismatches} oracle mismatches, {broken} invariant violations, {dt:?}"),
    )
}

fn ppo_arithmetic() -> Outcome {
    let cases = [
        clipped_objective(1.5, 0.2, 1.0) == 1.2,
        clipped_objective(0.5, 0.2, -1.0) == -0.8,
        [0.05, 0.2, 0.9].iter().all(|&e| [-2.5, 0.0, 1.7].iter().all(|&a| clipped_objective(1.0, e, a) == a)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = PolicyState::new(2, 1, &[8], -0.5, &mut rng);
    let mut p = ps.params();
    for x in p.iter_mut() {
        *x += rng.random_range(-0.15..0.15);
    }
    ps.set_params(&p);
    let cfg = PpoConfig { entropy_coef: 0.01, ..PpoConfig::default() };
    let trs: Vec<Transition> = (0..8)
        .map(|k| {
            let obs = vec![(k as f64).sin(), (0.4 * k as f64).cos()];
            let s = sample_action(&ps, &obs, false, &mut rng);
            Transition { obs, pre: s.pre, log_prob: s.log_prob + 0.015 * (k as f64 - 3.5), reward: 0.0, value: 0.0, done: false }
        })
        .collect();
    let batch: Vec<BatchItem<'_>> = trs
        .iter()
        .enumerate()
        .map(|(k, tr)| BatchItem { tr, adv: [1.1, -0.6, 0.4, -1.3][k % 4], ret: 0.3 * k as f64 - 1.0 })
        .collect();
    let (_, grad) = loss_and_grad(&ps, &batch, &cfg);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let mut q = ps.clone();
        let mut plus = p.clone();
        plus[i] += h;
        q.set_params(&plus);
        let lp = loss_and_grad(&q, &batch, &cfg).0.total;
        let mut minus = p.clone();
        minus[i] -= h;
        q.set_params(&minus);
        let lm = loss_and_grad(&q, &batch, &cfg).0.total;
        let fd = (lp - lm) / (2.0 * h);
        let abs = (grad[i] - fd).abs();
        if abs > 1e-9 {
            worst = worst.max(abs / grad[i].abs().max(fd.abs()));
        }
    }
    check(
        cases.iter().all(|&c| c) && worst < 1e-4,
        format!("objective cases {cases:?}, worst relative gradient error {worst:.2e} over {} params", grad.len()),
    )
}

fn toy_learning() -> Outcome {
    let target = 0.5;
    let t0 = Instant::now();
    let mut finals = Vec::new();
    for seed in 0..10 {
        let mut env = ToyEnv::new(1, 16, ToyReward::Quadratic { target });
        let cfg = PpoConfig {
            lr: 1e-3,
            init_log_std: -1.0,
            steps_per_update: 64,
            batch_size: 16,
            total_steps: 5000,
            hidden: vec![16, 16],
            ..PpoConfig::default()
        };
        let mut tr = Trainer::new(&mut env, cfg, seed).map_err(|e| e.to_string())?;
        tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).map_err(|e| e.to_string())?;
        let p = &tr.agents[0].policy;
        let mean = (0..16).map(|t| p.act(&env.observation(t))[0]).sum::<f64>() / 16.0;
        finals.push(mean);
    }
    let hits = finals.iter().filter(|m| (*m - target).abs() < 0.1).count();
    let dt = t0.elapsed();
    check(
        hits >= 9 && dt < Duration::from_secs(120),
        format!(
            "{hits}/10 seeds within 0.1 of {target} after 5000 steps ({}), {dt:.1?}",
            finals.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn desk_reproduction() -> Outcome {
    let t0 = Instant::now();
    let scenario = ScenarioConfig::desk_scale();
    let mut env = Environment::new(scenario.clone()).map_err(|e| e.to_string())?;
    let base = run_episode(&mut env, Controllers::RbcOnly).map_err(|e| e.to_string())?;
    let cfg = PpoConfig::desk_scale();
    let steps = cfg.total_steps;
    let mut tr = Trainer::new(&mut env, cfg, scenario.seed).map_err(|e| e.to_string())?;
    tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).map_err(|e| e.to_string())?;
    let policies: Vec<&dyn AgentPolicy> = tr.agents.iter().map(|a| &a.policy as &dyn AgentPolicy).collect();
    let mut eval = Environment::new(scenario).map_err(|e| e.to_string())?;
    let rl = run_episode(&mut eval, Controllers::Policies(&policies)).map_err(|e| e.to_string())?;
    let (b, r) = (violation_counts(&base).map_err(|e| e.to_string())?, violation_counts(&rl).map_err(|e| e.to_string())?);
    let over = percent_reduction(b.over_104 as f64, r.over_104 as f64).unwrap_or(0.0);
    let under_rise = -percent_reduction(b.under_096 as f64, r.under_096 as f64).unwrap_or(0.0);
    let dt = t0.elapsed();
    check(
        steps >= 50_000 && over >= 10.0 && under_rise <= 5.0 && dt < Duration::from_secs(7200),
        format!(
            "{steps} steps; v>1.04 {} -> {} ({over:.1}% fewer), v<0.96 {} -> {} ({under_rise:+.1}%), {dt:.0?}",
            b.over_104, r.over_104, b.under_096, r.under_096
        ),
    )
}

fn reward_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let alphas_ok = (0..1000).all(|_| reward(1.0, rng.random_range(1e-3..1e3)) == 1.0) && reward(1.0, 20.0) == 1.0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(-0.2..0.2);
        let a = rng.random_range(1.0..50.0);
        worst = worst.max((reward(1.0 + d, a) - reward(1.0 - d, a)).abs());
    }
    check(alphas_ok && worst <= 1e-12, format!("reward(1, a) == 1 for 1000 alphas: {alphas_ok}; worst asymmetry {worst:.1e}"))
}

fn determinism() -> Outcome {
    let run = || -> Result<(String, String), String> {
        let mut env = Environment::new(ScenarioConfig::desk_scale()).map_err(|e| e.to_string())?;
        let log = run_episode(&mut env, Controllers::RbcOnly).map_err(|e| e.to_string())?;
        Ok((log.voltages_csv(), log.agents_csv()))
    };
    let (a, b) = (run()?, run()?);
    check(a == b, format!("two desk baselines: {} + {} CSV bytes, identical: {}", a.0.len(), a.1.len(), a == b))
}

fn metrics_fidelity() -> Outcome {
    let meta = vec![BuildingMeta { bus: 1, building_type: "x".into(), controller: Controller::Rbc }];
    let mut log = EpisodeLog::new(0.25, meta);
    // Planted: 1.05 and 1.041 are >1.04 (and >1.03); 1.035 and the edge 1.04
    // only >1.03; 0.965 and the edge 0.96 only <0.97; 0.955 and 0.9 are <0.96
    // (and <0.97); the edges 1.03 and 0.97 count nowhere.
    for row in [
        vec![1.0, 1.05, 1.041, 1.035],
        vec![1.0, 1.04, 1.03, 0.97],
        vec![1.0, 0.96, 0.965, 0.955],
        vec![1.0, 0.9, 1.0, 1.0],
    ] {
        log.push(row, vec![AgentRecord::default()]);
    }
    let r = violation_counts(&log).map_err(|e| e.to_string())?;
    let counts = (r.over_104, r.over_103, r.under_097, r.under_096, r.samples);
    let pct = percent_reduction(812.0, 532.0).map(format_percent);
    check(
        counts == (2, 4, 4, 2, 16) && pct.as_deref() == Some("34.4"),
        format!("counts {counts:?}, reduction(812, 532) prints {pct:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("power-flow validation", power_flow),
        ("storage dispatch oracle", storage_oracle),
        ("PPO arithmetic", ppo_arithmetic),
        ("PPO learning smoke test", toy_learning),
        ("desk-scale directional reproduction", desk_reproduction),
        ("reward identity", reward_identity),
        ("environment determinism", determinism),
        ("metrics fidelity", metrics_fidelity),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
