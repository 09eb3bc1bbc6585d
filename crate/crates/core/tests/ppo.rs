#![allow(clippy::needless_range_loop)]

use std::ops::ControlFlow;

use feeder_marl::env::AgentPolicy;
use feeder_marl::ppo::checkpoint;
use feeder_marl::ppo::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_cfg(total: usize) -> PpoConfig {
    PpoConfig {
        lr: 1e-3,
        init_log_std: -1.0,
        steps_per_update: 64,
        batch_size: 16,
        total_steps: total,
        hidden: vec![16, 16],
        ..PpoConfig::default()
    }
}

fn central_diff(ps: &PolicyState, batch: &[BatchItem<'_>], cfg: &PpoConfig, i: usize, h: f64) -> f64 {
    let p = ps.params();
    let mut q = ps.clone();
    let mut plus = p.clone();
    plus[i] += h;
    q.set_params(&plus);
    let lp = loss_and_grad(&q, batch, cfg).0.total;
    let mut minus = p;
    minus[i] -= h;
    q.set_params(&minus);
    let lm = loss_and_grad(&q, batch, cfg).0.total;
    (lp - lm) / (2.0 * h)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = PolicyState::new(2, 1, &[8], -0.5, &mut rng);
    // Move the actor off its near-zero init so every weight carries signal.
    let mut p = ps.params();
    for x in p.iter_mut() {
        *x += 0.3 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
    }
    ps.set_params(&p);
    let cfg = PpoConfig { entropy_coef: 0.01, ..PpoConfig::default() };
    let trs: Vec<Transition> = (0..6)
        .map(|k| {
            let obs = vec![(k as f64 * 0.7).sin(), (k as f64 * 0.3).cos()];
            let s = sample_action(&ps, &obs, false, &mut rng);
            Transition {
                obs,
                pre: s.pre,
                // Ratios near but not at one keep samples away from the clip kink.
                log_prob: s.log_prob + 0.02 * (k as f64 - 2.5),
                reward: 0.0,
                value: 0.0,
                done: false,
            }
        })
        .collect();
    let batch: Vec<BatchItem<'_>> = trs
        .iter()
        .enumerate()
        .map(|(k, tr)| BatchItem { tr, adv: if k % 2 == 0 { 1.3 } else { -0.7 }, ret: 0.5 - 0.1 * k as f64 })
        .collect();
    let (_, grad) = loss_and_grad(&ps, &batch, &cfg);
    let mut worst: f64 = 0.0;
    for i in 0..ps.n_params() {
        let fd = central_diff(&ps, &batch, &cfg, i, 1e-6);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(if (grad[i] - fd).abs() < 1e-9 { 0.0 } else { rel });
    }
    assert!(worst < 1e-4, "worst relative gradient error {worst}");
}

#[test]
fn value_head_fits_constant_reward() {
    let mut env = ToyEnv::new(1, 16, ToyReward::Constant(1.0));
    let cfg = PpoConfig { gamma: 0.0, ..toy_cfg(4096) };
    let mut tr = Trainer::new(&mut env, cfg, 11).unwrap();
    tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
    for t in 0..16 {
        let v = tr.agents[0].policy.value(&env.observation(t));
        assert!((v - 1.0).abs() < 0.05, "value {v} at t={t}");
    }
}

#[test]
fn one_update_when_total_equals_rollout() {
    let mut env = ToyEnv::new(2, 10, ToyReward::Quadratic { target: 0.5 });
    let cfg = PpoConfig { total_steps: 64, ..toy_cfg(64) };
    let mut tr = Trainer::new(&mut env, cfg, 0).unwrap();
    let mut calls = 0;
    tr.run(&mut env, |_, _| {
        calls += 1;
        Ok(ControlFlow::Continue(()))
    })
    .unwrap();
    assert_eq!((tr.updates, calls, tr.steps), (1, 1, 64));
    assert_eq!(tr.curves.len(), 2);
    assert_eq!(tr.episodes, 6);
}

#[test]
fn identical_keys_train_identically() {
    let mut env = ToyEnv::with_keys(vec!["a".into(), "a".into(), "b".into()], 16, ToyReward::Quadratic { target: 0.3 });
    let mut tr = Trainer::new(&mut env, toy_cfg(512), 5).unwrap();
    tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
    let p = tr.policies();
    assert_eq!(p[0].params(), p[1].params());
    assert_ne!(p[0].params(), p[2].params());
}

#[test]
fn seeds_change_initial_weights() {
    let mut env = ToyEnv::new(1, 8, ToyReward::Constant(0.0));
    let a = Trainer::new(&mut env, toy_cfg(64), 1).unwrap();
    let b = Trainer::new(&mut env, toy_cfg(64), 2).unwrap();
    assert_ne!(a.agents[0].policy.params(), b.agents[0].policy.params());
}

#[test]
fn sequential_and_parallel_agree() {
    let run = |exec| {
        let mut env = ToyEnv::new(3, 16, ToyReward::Quadratic { target: -0.2 });
        let mut tr = Trainer::new(&mut env, toy_cfg(256), 9).unwrap();
        tr.exec = exec;
        tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        (tr.curves, tr.agents)
    };
    assert!(run(feeder_marl::par::ExecMode::Sequential) == run(feeder_marl::par::ExecMode::Parallel));
}

#[test]
fn learns_toy_target() {
    let target = 0.5;
    let mut pass = 0;
    for seed in 0..5 {
        let mut env = ToyEnv::new(1, 16, ToyReward::Quadratic { target });
        let mut tr = Trainer::new(&mut env, toy_cfg(5000), seed).unwrap();
        tr.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        let mean: f64 = (0..16).map(|t| tr.agents[0].policy.act(&env.observation(t))[0]).sum::<f64>() / 16.0;
        if (mean - target).abs() < 0.1 {
            pass += 1;
        }
    }
    assert!(pass >= 4, "{pass}/5 seeds reached the target");
}

#[test]
fn checkpoint_resume_reproduces_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_cfg(640);
    let mut env = ToyEnv::new(2, 12, ToyReward::Quadratic { target: 0.1 });
    let mut full = Trainer::new(&mut env, cfg.clone(), 4).unwrap();
    full.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();

    let mut env = ToyEnv::new(2, 12, ToyReward::Quadratic { target: 0.1 });
    let mut first = Trainer::new(&mut env, cfg, 4).unwrap();
    // Stop mid-episode, between updates.
    while first.steps < 300 {
        first.step(&mut env).unwrap();
    }
    let files = checkpoint::save(dir.path(), &first, &env, "h").unwrap();
    assert_eq!(files.len(), 3);
    drop(first);

    let mut env = ToyEnv::new(2, 12, ToyReward::Quadratic { target: 0.1 });
    let mut resumed = checkpoint::resume(dir.path(), &mut env, "h").unwrap();
    resumed.run(&mut env, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
    assert!(resumed.curves == full.curves);
    assert!(resumed.agents == full.agents);
}

#[test]
fn checkpoint_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = ToyEnv::new(2, 12, ToyReward::Constant(0.0));
    let tr = Trainer::new(&mut env, toy_cfg(64), 0).unwrap();
    checkpoint::save(dir.path(), &tr, &env, "h").unwrap();
    assert!(checkpoint::exists(dir.path()));

    let mut env = ToyEnv::new(2, 12, ToyReward::Constant(0.0));
    assert!(checkpoint::resume(dir.path(), &mut env, "other").is_err());
    let mut three = ToyEnv::new(3, 12, ToyReward::Constant(0.0));
    assert!(checkpoint::resume(dir.path(), &mut three, "h").is_err());
    assert!(checkpoint::load_policies(dir.path(), &three).unwrap_err().to_string().contains("agent 2"));

    std::fs::remove_file(dir.path().join(checkpoint::agent_file(1))).unwrap();
    let err = checkpoint::load_policies(dir.path(), &env).unwrap_err().to_string();
    assert!(err.contains("missing checkpoint for agent 1"), "{err}");
}

mod clipping {
    use feeder_marl::ppo::clipped_objective;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn never_exceeds_the_unclipped_term(r in 0.0f64..3.0, eps in 0.01f64..0.5, adv in -5.0f64..5.0) {
            let f = clipped_objective(r, eps, adv);
            prop_assert!(f <= r * adv);
            prop_assert!(f <= r.clamp(1.0 - eps, 1.0 + eps) * adv);
            prop_assert!(f == r * adv || f == r.clamp(1.0 - eps, 1.0 + eps) * adv);
        }

        #[test]
        fn identity_inside_the_trust_region(t in -1.0f64..1.0, eps in 0.01f64..0.5, adv in -5.0f64..5.0) {
            let r = 1.0 + t * eps;
            prop_assert!((clipped_objective(r, eps, adv) - r * adv).abs() < 1e-12);
        }

        #[test]
        fn gain_is_capped_past_the_region(r in 1.0f64..4.0, eps in 0.01f64..0.5, adv in 0.0f64..5.0) {
            prop_assert!(clipped_objective(r, eps, adv) <= (1.0 + eps) * adv + 1e-12);
        }
    }
}
