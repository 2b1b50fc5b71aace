//! Clipped-surrogate policy optimization.
//!
//! The loss over a batch is
//!
//! ```text
//! L = -E[min(rho*A, clip(rho, 1-eps, 1+eps)*A)]
//!     + c_v * E[(V - R)^2] - c_e * H(pi)
//! ```
//!
//! with `rho` the density ratio of the raw stored action under the current
//! versus the collection-time policy. Gradients are analytic all the way
//! through the Gaussian density, the tanh action squash and both networks;
//! the unit tests pin them against central finite differences.

use rand::seq::SliceRandom;
use rand::Rng;

use super::buffer::RolloutBuffer;
use super::nn::{Adam, ForwardCache};
use super::policy::{entropy, log_prob, policy_forward, PolicyParams};
use super::{RlError, ACTION_DIM, OBS_DIM};
use serde::{Deserialize, Serialize};

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    /// Surrogate clip width.
    pub clip: f64,
    /// Discount factor for returns and GAE.
    pub discount: f64,
    /// GAE lambda.
    pub gae_lambda: f64,
    /// Optimization epochs per rollout.
    pub epochs: u32,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    /// Environment steps collected per update.
    pub rollout_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch_size: 256,
            learning_rate: 3e-4,
            value_coeff: 0.5,
            entropy_coeff: 0.0,
            rollout_steps: 4096,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err("clip must be in (0, 1)".into());
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err("discount must be in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err("gae_lambda must be in [0, 1]".into());
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_steps == 0 {
            return Err("epochs, minibatch_size, rollout_steps must be > 0".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be > 0".into());
        }
        if self.value_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return Err("loss coefficients must be >= 0".into());
        }
        Ok(())
    }
}

/// One training sample for the loss.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample {
    pub observation: [f64; OBS_DIM],
    pub action_raw: [f64; ACTION_DIM],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub return_target: f64,
}

/// Diagnostics of one `ppo_update`.
#[derive(Debug, Clone, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    /// Mean ratio over the first pass, before any parameter change.
    pub first_epoch_mean_ratio: f64,
    pub minibatches: u32,
}

/// Flatten trainable parameters as `[mean_net | log_std | value_net]`.
pub fn flat_params(params: &PolicyParams) -> Vec<f64> {
    let mut flat =
        Vec::with_capacity(params.param_count());
    flat.extend_from_slice(params.mean_net.params());
    flat.extend_from_slice(&params.log_std);
    flat.extend_from_slice(params.value_net.params());
    flat
}

/// Inverse of [`flat_params`].
pub fn set_flat_params(params: &mut PolicyParams, flat: &[f64]) {
    let m = params.mean_net.params().len();
    let v = params.value_net.params().len();
    assert_eq!(flat.len(), m + ACTION_DIM + v);
    params.mean_net.params_mut().copy_from_slice(&flat[..m]);
    params.log_std.copy_from_slice(&flat[m..m + ACTION_DIM]);
    params
        .value_net
        .params_mut()
        .copy_from_slice(&flat[m + ACTION_DIM..]);
}

/// Total loss and its gradient in the flat layout, averaged over `batch`.
pub fn ppo_loss_and_grad(
    params: &PolicyParams,
    batch: &[PpoSample],
    cfg: &PpoConfig,
) -> (f64, Vec<f64>, PpoStats) {
    let m = params.mean_net.params().len();
    let v = params.value_net.params().len();
    let mut grad = vec![0.0; m + ACTION_DIM + v];
    let (mean_grad, rest) = grad.split_at_mut(m);
    let (log_std_grad, value_grad) = rest.split_at_mut(ACTION_DIM);

    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut stats = PpoStats::default();
    let mut cache = ForwardCache::default();

    for sample in batch {
        let out = policy_forward(params, &sample.observation);
        let lp = log_prob(&out.mean, &out.std, &sample.action_raw);
        let ratio = (lp - sample.old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let surr_raw = ratio * sample.advantage;
        let surr_clip = clipped * sample.advantage;
        let policy_term = -surr_raw.min(surr_clip);

        let value_err = out.value - sample.return_target;
        let value_term = cfg.value_coeff * value_err * value_err;
        loss += (policy_term + value_term) * inv_n;

        stats.policy_loss += policy_term * inv_n;
        stats.value_loss += value_err * value_err * inv_n;
        stats.mean_ratio += ratio * inv_n;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += inv_n;
        }

        // d(policy_term)/d(log prob): the clipped branch has zero gradient
        // because it is only selected when the ratio sits outside the band.
        let d_lp = if surr_raw <= surr_clip {
            -ratio * sample.advantage * inv_n
        } else {
            0.0
        };
        if d_lp != 0.0 {
            let mut d_head = [0.0; ACTION_DIM];
            for j in 0..ACTION_DIM {
                let z = (sample.action_raw[j] - out.mean[j]) / out.std[j];
                // dlp/dmean, then through mean = bound * tanh(head).
                let d_mean = d_lp * z / out.std[j];
                let t = out.head[j].tanh();
                d_head[j] = d_mean * params.action_bound * (1.0 - t * t);
                // dlp/dlog_std = z^2 - 1.
                log_std_grad[j] += d_lp * (z * z - 1.0);
            }
            params.mean_net.forward(&sample.observation, &mut cache);
            params
                .mean_net
                .backward(&sample.observation, &cache, &d_head, mean_grad);
        }

        let d_value = [2.0 * cfg.value_coeff * value_err * inv_n];
        params.value_net.forward(&sample.observation, &mut cache);
        params
            .value_net
            .backward(&sample.observation, &cache, &d_value, value_grad);
    }

    // Entropy bonus: state independent, reaches only the log stds.
    let ent = entropy(&params.log_std);
    loss -= cfg.entropy_coeff * ent;
    stats.entropy = ent;
    for g in log_std_grad.iter_mut() {
        *g -= cfg.entropy_coeff;
    }

    (loss, grad, stats)
}

/// Run the clipped-surrogate update over a prepared rollout buffer.
///
/// The buffer must already hold advantages and returns (`compute_gae`);
/// advantages are normalized here, once per update. On a non-finite loss
/// the parameters are restored to their entry state and an error reports
/// the offending epoch.
pub fn ppo_update<R: Rng>(
    buffer: &mut RolloutBuffer,
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats, RlError> {
    if buffer.flat.is_empty() {
        return Err(RlError::EmptyRollout);
    }
    buffer.normalize_advantages();
    let samples: Vec<PpoSample> = buffer
        .flat
        .iter()
        .zip(buffer.advantages.iter().zip(buffer.returns.iter()))
        .map(|(r, (adv, ret))| PpoSample {
            observation: r.observation,
            action_raw: r.action_raw,
            old_log_prob: r.log_prob,
            advantage: *adv,
            return_target: *ret,
        })
        .collect();

    let snapshot = flat_params(params);
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut totals = PpoStats::default();
    let mut first_epoch_ratio_sum = 0.0;
    let mut first_epoch_count = 0usize;

    for epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size.min(samples.len())) {
            let batch: Vec<PpoSample> = chunk.iter().map(|&i| samples[i]).collect();
            let (loss, grad, stats) = ppo_loss_and_grad(params, &batch, cfg);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                set_flat_params(params, &snapshot);
                return Err(RlError::NonFiniteLoss { epoch });
            }
            if epoch == 0 {
                first_epoch_ratio_sum += stats.mean_ratio * batch.len() as f64;
                first_epoch_count += batch.len();
            }
            let mut flat = flat_params(params);
            optimizer.apply(&mut flat, &grad);
            set_flat_params(params, &flat);
            params.clamp_log_std();

            totals.policy_loss += stats.policy_loss;
            totals.value_loss += stats.value_loss;
            totals.entropy += stats.entropy;
            totals.mean_ratio += stats.mean_ratio;
            totals.clip_fraction += stats.clip_fraction;
            totals.minibatches += 1;
        }
    }

    let n = totals.minibatches.max(1) as f64;
    totals.policy_loss /= n;
    totals.value_loss /= n;
    totals.entropy /= n;
    totals.mean_ratio /= n;
    totals.clip_fraction /= n;
    totals.first_epoch_mean_ratio = first_epoch_ratio_sum / first_epoch_count.max(1) as f64;
    if !params.all_finite() {
        set_flat_params(params, &snapshot);
        return Err(RlError::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::buffer::StepRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_params(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::new(&[5], 1.0, -0.5, &mut rng)
    }

    fn random_batch(seed: u64, n: usize) -> Vec<PpoSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| PpoSample {
                observation: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                action_raw: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                old_log_prob: rng.gen_range(-4.0..0.0),
                advantage: rng.gen_range(-2.0..2.0),
                return_target: rng.gen_range(-1.0..3.0),
            })
            .collect()
    }

    fn test_cfg() -> PpoConfig {
        PpoConfig {
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = test_cfg();
        for seed in 0..5 {
            let mut params = tiny_params(seed);
            let batch = random_batch(seed + 100, 8);
            let (_, grad, _) = ppo_loss_and_grad(&params, &batch, &cfg);
            let flat = flat_params(&params);
            let h = 1e-6;
            for p in 0..flat.len() {
                let mut up = flat.clone();
                up[p] += h;
                set_flat_params(&mut params, &up);
                let (lu, _, _) = ppo_loss_and_grad(&params, &batch, &cfg);
                let mut down = flat.clone();
                down[p] -= h;
                set_flat_params(&mut params, &down);
                let (ld, _, _) = ppo_loss_and_grad(&params, &batch, &cfg);
                set_flat_params(&mut params, &flat);
                let numeric = (lu - ld) / (2.0 * h);
                let diff = (grad[p] - numeric).abs();
                let scale = grad[p].abs().max(numeric.abs()).max(1.0);
                assert!(
                    diff / scale < 1e-5,
                    "seed {seed} param {p}: analytic {} numeric {}",
                    grad[p],
                    numeric
                );
            }
        }
    }

    #[test]
    fn zero_advantage_leaves_policy_head_unmoved() {
        let cfg = PpoConfig {
            value_coeff: 0.5,
            entropy_coeff: 0.0,
            ..PpoConfig::default()
        };
        let params = tiny_params(7);
        let mut batch = random_batch(3, 6);
        for s in &mut batch {
            s.advantage = 0.0;
            // Density of this action under the current policy so ratios are 1.
            let out = policy_forward(&params, &s.observation);
            s.old_log_prob = log_prob(&out.mean, &out.std, &s.action_raw);
        }
        let (_, grad, stats) = ppo_loss_and_grad(&params, &batch, &cfg);
        let m = params.mean_net.params().len();
        assert!(stats.policy_loss.abs() < 1e-15);
        for g in &grad[..m + ACTION_DIM] {
            assert_eq!(*g, 0.0, "policy gradient must vanish at zero advantage");
        }
        // Value gradient still lives.
        assert!(grad[m + ACTION_DIM..].iter().any(|g| g.abs() > 0.0));
    }

    #[test]
    fn clipped_sample_has_zero_policy_gradient() {
        // Force the ratio to 1 + 2*clip with positive advantage: the min
        // picks the clipped branch whose gradient is exactly zero.
        let cfg = PpoConfig {
            value_coeff: 0.0,
            entropy_coeff: 0.0,
            ..PpoConfig::default()
        };
        let params = tiny_params(11);
        let mut sample = random_batch(5, 1)[0];
        sample.advantage = 1.5;
        let out = policy_forward(&params, &sample.observation);
        let lp = log_prob(&out.mean, &out.std, &sample.action_raw);
        sample.old_log_prob = lp - (1.0 + 2.0 * cfg.clip).ln();
        let (loss, grad, _) = ppo_loss_and_grad(&params, &[sample], &cfg);
        assert!((loss - -(1.0 + cfg.clip) * 1.5).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() == 0.0));
    }

    #[test]
    fn first_epoch_ratios_are_exactly_one() {
        let cfg = test_cfg();
        let mut params = tiny_params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buffer = RolloutBuffer::new(1);
        for i in 0..32 {
            let obs: [f64; OBS_DIM] = std::array::from_fn(|k| ((i + k) as f64 * 0.13).sin());
            let out = policy_forward(&params, &obs);
            let action =
                crate::rl::policy::sample_action(&out.mean, &out.std, 1.0, &mut rng);
            buffer.push(
                0,
                StepRecord {
                    observation: obs,
                    action_raw: action.raw,
                    log_prob: action.log_prob,
                    reward: (i as f64 * 0.3).cos(),
                    value: out.value,
                    done: false,
                    bootstrap_value: 0.0,
                },
            );
        }
        buffer.compute_gae(cfg.discount, cfg.gae_lambda, &[0.0]);
        let mut adam = Adam::new(params.param_count(), cfg.learning_rate);
        let stats = ppo_update(&mut buffer, &mut params, &mut adam, &cfg, &mut rng).unwrap();
        assert!(
            (stats.first_epoch_mean_ratio - 1.0).abs() < 1e-12,
            "first-epoch mean ratio {}",
            stats.first_epoch_mean_ratio
        );
    }

    #[test]
    fn non_finite_loss_aborts_and_restores() {
        let cfg = test_cfg();
        let mut params = tiny_params(4);
        let before = flat_params(&params);
        let mut buffer = RolloutBuffer::new(1);
        buffer.push(
            0,
            StepRecord {
                observation: [0.1; OBS_DIM],
                action_raw: [0.0; ACTION_DIM],
                log_prob: f64::NAN, // poisons the ratio
                reward: 1.0,
                value: 0.0,
                done: true,
                bootstrap_value: 0.0,
            },
        );
        buffer.compute_gae(cfg.discount, cfg.gae_lambda, &[0.0]);
        let mut adam = Adam::new(params.param_count(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = ppo_update(&mut buffer, &mut params, &mut adam, &cfg, &mut rng);
        assert!(matches!(err, Err(RlError::NonFiniteLoss { .. })));
        assert_eq!(flat_params(&params), before);
    }

    #[test]
    fn update_is_deterministic_for_a_seed() {
        let cfg = test_cfg();
        let run = || {
            let mut params = tiny_params(21);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut buffer = RolloutBuffer::new(1);
            for i in 0..64 {
                let obs: [f64; OBS_DIM] = std::array::from_fn(|k| ((i * k) as f64 * 0.07).sin());
                let out = policy_forward(&params, &obs);
                let action =
                    crate::rl::policy::sample_action(&out.mean, &out.std, 1.0, &mut rng);
                buffer.push(
                    0,
                    StepRecord {
                        observation: obs,
                        action_raw: action.raw,
                        log_prob: action.log_prob,
                        reward: -obs[0].abs(),
                        value: out.value,
                        done: i % 16 == 15,
                        bootstrap_value: 0.0,
                    },
                );
            }
            buffer.compute_gae(cfg.discount, cfg.gae_lambda, &[0.0]);
            let mut adam = Adam::new(params.param_count(), cfg.learning_rate);
            ppo_update(&mut buffer, &mut params, &mut adam, &cfg, &mut rng).unwrap();
            flat_params(&params)
        };
        assert_eq!(run(), run());
    }
}
