//! Clipped-surrogate loss, its analytic gradient, and the update loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{compute_targets, normalize, RolloutBuffer, Transition};
use super::nn::Cache;
use super::policy::{squash_correction, PolicyState, LOG_STD_MAX, LOG_STD_MIN};
use super::{PpoConfig, PpoError};

/// min(r·A, clip(r, 1−ε, 1+ε)·A) for one sample.
pub fn clipped_objective(ratio: f64, eps: f64, adv: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub tr: &'a Transition,
    pub adv: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Minibatch loss and its gradient with respect to `ps.params()`.
pub fn loss_and_grad(ps: &PolicyState, batch: &[BatchItem<'_>], cfg: &PpoConfig) -> (LossParts, Vec<f64>) {
    let na = ps.actor.n_params();
    let nd = ps.act_dim();
    let mut grad = vec![0.0; ps.n_params()];
    let (g_actor, rest) = grad.split_at_mut(na);
    let (g_std, g_critic) = rest.split_at_mut(nd);
    let ls = ps.clamped_log_std();
    let std_live: Vec<bool> = ps.log_std.iter().map(|s| (LOG_STD_MIN..=LOG_STD_MAX).contains(s)).collect();
    let inv_b = 1.0 / batch.len() as f64;
    let mut parts = LossParts::default();
    let mut cache_a = Cache::default();
    let mut cache_c = Cache::default();
    let mut d_mean = vec![0.0; nd];

    for item in batch {
        let tr = item.tr;
        let mean = ps.actor.forward_cached(&tr.obs, &mut cache_a);
        let u: Vec<f64> = (0..nd).map(|j| (tr.pre[j] - mean[j]) / ls[j].exp()).collect();
        let gauss: f64 = (0..nd).map(|j| -0.5 * u[j] * u[j] - ls[j]).sum::<f64>() - nd as f64 * 0.918_938_533_204_672_8;
        let logp = gauss - squash_correction(&tr.pre);
        let ratio = (logp - tr.log_prob).exp();
        let a = item.adv;
        let surr = clipped_objective(ratio, cfg.clip_eps, a);
        parts.policy -= surr * inv_b;
        parts.approx_kl += (tr.log_prob - logp) * inv_b;
        parts.mean_ratio += ratio * inv_b;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            parts.clip_fraction += inv_b;
        }
        // The unclipped branch carries the gradient whenever it is the minimum.
        if ratio * a <= ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a {
            let dlogp = -a * ratio * inv_b;
            for j in 0..nd {
                d_mean[j] = dlogp * u[j] / ls[j].exp();
                if std_live[j] {
                    g_std[j] += dlogp * (u[j] * u[j] - 1.0);
                }
            }
            ps.actor.backward(&cache_a, &d_mean, g_actor);
        }

        let v = ps.critic.forward_cached(&tr.obs, &mut cache_c)[0];
        let err = v - item.ret;
        parts.value += err * err * inv_b;
        ps.critic.backward(&cache_c, &[cfg.value_coef * 2.0 * err * inv_b], g_critic);
    }

    parts.entropy = ps.entropy();
    for j in 0..nd {
        if std_live[j] {
            g_std[j] -= cfg.entropy_coef;
        }
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    (parts, grad)
}

fn clip_norm(g: &mut [f64], max: f64) {
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > max && n > 0.0 {
        let k = max / n;
        g.iter_mut().for_each(|x| *x *= k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub minibatches: usize,
}

/// Runs `epochs_per_update` shuffled passes over the full buffer and clears it.
/// On a non-finite loss or gradient the parameters and optimizer are rolled
/// back to their state before the call.
pub fn ppo_update<R: Rng + ?Sized>(
    ps: &mut PolicyState,
    buf: &mut RolloutBuffer,
    last_value: f64,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    if !buf.is_full() {
        return Err(PpoError::BufferNotFull { len: buf.len(), capacity: buf.capacity() });
    }
    let (mut adv, ret) = compute_targets(buf.items(), last_value, cfg.gamma, cfg.gae_lambda);
    normalize(&mut adv);
    let items = buf.items();
    let backup = ps.clone();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut stats = UpdateStats::default();

    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<BatchItem<'_>> =
                chunk.iter().map(|&i| BatchItem { tr: &items[i], adv: adv[i], ret: ret[i] }).collect();
            let (parts, mut grad) = loss_and_grad(ps, &batch, cfg);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                *ps = backup;
                buf.clear();
                return Err(PpoError::NonFiniteLoss);
            }
            clip_norm(&mut grad, cfg.max_grad_norm);
            let mut p = ps.params();
            ps.optimizer.step(&mut p, &grad, cfg.lr);
            ps.set_params(&p);

            stats.minibatches += 1;
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.mean_ratio += parts.mean_ratio;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.mean_ratio /= k;
    buf.clear();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::policy::sample_action;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn objective_cases() {
        assert_eq!(clipped_objective(1.5, 0.2, 1.0), 1.2);
        assert_eq!(clipped_objective(0.5, 0.2, -1.0), -0.8);
        for a in [-2.0, -0.3, 0.0, 0.7, 5.0] {
            for eps in [0.01, 0.2, 0.9] {
                assert_eq!(clipped_objective(1.0, eps, a), a);
            }
        }
    }

    #[test]
    fn never_above_unclipped_for_positive_advantage() {
        for k in 0..200 {
            let r = k as f64 * 0.02;
            assert!(clipped_objective(r, 0.2, 1.3) <= r * 1.3);
        }
    }

    fn filled(ps: &PolicyState, n: usize, rng: &mut ChaCha8Rng) -> RolloutBuffer {
        let mut buf = RolloutBuffer::new(n);
        for i in 0..n {
            let obs = vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
            let s = sample_action(ps, &obs, false, rng);
            let reward = -(s.action[0] - 0.5).powi(2);
            buf.push(Transition { value: ps.value(&obs), obs, pre: s.pre, log_prob: s.log_prob, reward, done: true });
        }
        buf
    }

    #[test]
    fn first_minibatch_has_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = PolicyState::new(2, 1, &[8], 0.0, &mut rng);
        let buf = filled(&ps, 32, &mut rng);
        let (mut adv, ret) = compute_targets(buf.items(), 0.0, 0.99, 0.95);
        normalize(&mut adv);
        let batch: Vec<_> =
            buf.items().iter().zip(adv.iter().zip(&ret)).map(|(tr, (&a, &r))| BatchItem { tr, adv: a, ret: r }).collect();
        let cfg = PpoConfig::default();
        let (parts, _) = loss_and_grad(&ps, &batch, &cfg);
        assert!((parts.mean_ratio - 1.0).abs() < 1e-12);
        let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
        assert!((parts.policy + mean_adv).abs() < 1e-12);
        assert_eq!(parts.clip_fraction, 0.0);
    }

    #[test]
    fn update_requires_full_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ps = PolicyState::new(2, 1, &[8], 0.0, &mut rng);
        let mut buf = RolloutBuffer::new(4);
        let err = ppo_update(&mut ps, &mut buf, 0.0, &PpoConfig::default(), &mut rng);
        assert!(matches!(err, Err(PpoError::BufferNotFull { .. })));
    }

    #[test]
    fn non_finite_loss_rolls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = PolicyState::new(2, 1, &[8], 0.0, &mut rng);
        let mut buf = filled(&ps, 8, &mut rng);
        let mut items = buf.items().to_vec();
        items[3].obs[0] = f64::NAN;
        buf.clear();
        items.into_iter().for_each(|t| buf.push(t));
        let before = ps.clone();
        let cfg = PpoConfig { batch_size: 4, ..PpoConfig::default() };
        assert!(matches!(ppo_update(&mut ps, &mut buf, 0.0, &cfg, &mut rng), Err(PpoError::NonFiniteLoss)));
        assert_eq!(ps, before);
        assert!(buf.is_empty());
    }

    #[test]
    fn update_clears_buffer_and_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = PolicyState::new(2, 1, &[8], 0.0, &mut rng);
        let mut buf = filled(&ps, 64, &mut rng);
        let cfg = PpoConfig { batch_size: 16, epochs_per_update: 3, lr: 1e-3, ..PpoConfig::default() };
        let s = ppo_update(&mut ps, &mut buf, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!(s.minibatches, 12);
        assert!(buf.is_empty());
        assert!(s.approx_kl.is_finite() && s.clip_fraction >= 0.0);
    }
}
