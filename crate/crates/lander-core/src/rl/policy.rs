//! Diagonal-Gaussian policy and value function over the 9-D relative
//! observation, with a versioned binary checkpoint format.

use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;

use super::nn::{ForwardCache, Mlp};
use super::{RlError, ACTION_DIM, OBS_DIM};
use crate::rl::CurriculumStage;

/// Bounds on the state-independent log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const CHECKPOINT_MAGIC: &[u8; 8] = b"LNDRPO1\n";

/// Policy mean network, value network and exploration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub mean_net: Mlp,
    pub value_net: Mlp,
    pub log_std: [f64; ACTION_DIM],
    /// Actions are `bound * tanh(head)` per axis, m/s.
    pub action_bound: f64,
}

impl PolicyParams {
    pub fn new<R: Rng>(hidden: &[usize], action_bound: f64, init_log_std: f64, rng: &mut R) -> Self {
        let mut mean_dims = vec![OBS_DIM];
        mean_dims.extend_from_slice(hidden);
        mean_dims.push(ACTION_DIM);
        let mut value_dims = vec![OBS_DIM];
        value_dims.extend_from_slice(hidden);
        value_dims.push(1);
        Self {
            mean_net: Mlp::new(&mean_dims, 0.01, rng),
            value_net: Mlp::new(&value_dims, 1.0, rng),
            log_std: [init_log_std; ACTION_DIM],
            action_bound,
        }
    }

    /// Total number of trainable parameters (mean net + log std + value net).
    pub fn param_count(&self) -> usize {
        self.mean_net.params().len() + ACTION_DIM + self.value_net.params().len()
    }

    pub fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.mean_net.params().iter().all(|p| p.is_finite())
            && self.value_net.params().iter().all(|p| p.is_finite())
            && self.log_std.iter().all(|p| p.is_finite())
    }
}

/// Output of one policy evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PolicyOutput {
    pub mean: [f64; ACTION_DIM],
    pub std: [f64; ACTION_DIM],
    pub value: f64,
    /// Pre-squash head outputs, needed for the backward pass.
    pub head: [f64; ACTION_DIM],
}

/// Evaluate mean, standard deviation and value for one observation.
pub fn policy_forward(params: &PolicyParams, observation: &[f64; OBS_DIM]) -> PolicyOutput {
    let mut cache = ForwardCache::default();
    let head_out = params.mean_net.forward(observation, &mut cache);
    let mut mean = [0.0; ACTION_DIM];
    let mut head = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        head[i] = head_out[i];
        mean[i] = params.action_bound * head_out[i].tanh();
    }
    let value = params.value_net.forward(observation, &mut cache)[0];
    let mut std = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        std[i] = params.log_std[i].exp();
    }
    PolicyOutput {
        mean,
        std,
        value,
        head,
    }
}

/// Sampled action: the raw Gaussian draw (used for densities) and the
/// clamped command actually sent to the controller.
#[derive(Debug, Clone, Copy)]
pub struct SampledAction {
    pub raw: [f64; ACTION_DIM],
    pub clamped: [f64; ACTION_DIM],
    pub log_prob: f64,
}

/// Draw from the diagonal Gaussian and clamp to the action bound. The log
/// probability is the pre-clamp density of the raw draw.
pub fn sample_action<R: Rng>(
    mean: &[f64; ACTION_DIM],
    std: &[f64; ACTION_DIM],
    bound: f64,
    rng: &mut R,
) -> SampledAction {
    let mut raw = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        let eps: f64 = rng.sample(StandardNormal);
        raw[i] = mean[i] + std[i] * eps;
    }
    let clamped = raw.map(|a| a.clamp(-bound, bound));
    SampledAction {
        raw,
        clamped,
        log_prob: log_prob(mean, std, &raw),
    }
}

/// Diagonal-Gaussian log density of `action` under (mean, std).
pub fn log_prob(
    mean: &[f64; ACTION_DIM],
    std: &[f64; ACTION_DIM],
    action: &[f64; ACTION_DIM],
) -> f64 {
    let mut lp = 0.0;
    for i in 0..ACTION_DIM {
        let z = (action[i] - mean[i]) / std[i];
        lp += -0.5 * z * z - std[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    lp
}

/// Differential entropy of the diagonal Gaussian (state independent).
pub fn entropy(log_std: &[f64; ACTION_DIM]) -> f64 {
    let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    log_std.iter().map(|s| s + half_log_2pi_e).sum()
}

/// Checkpoint payload: parameters plus the training progress needed to
/// resume (curriculum stage and environment step count).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub stage: CurriculumStage,
    pub env_steps: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let write_dims = |buf: &mut Vec<u8>, dims: &[usize]| {
            buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in dims {
                buf.extend_from_slice(&(*d as u32).to_le_bytes());
            }
        };
        write_dims(&mut buf, self.params.mean_net.dims());
        write_dims(&mut buf, self.params.value_net.dims());
        buf.push(match self.stage {
            CurriculumStage::PositionHold => 0,
            CurriculumStage::PositionSet => 1,
        });
        buf.extend_from_slice(&self.env_steps.to_le_bytes());
        buf.extend_from_slice(&self.params.action_bound.to_le_bytes());
        for s in &self.params.log_std {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        for p in self.params.mean_net.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        for p in self.params.value_net.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)
            .map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        file.write_all(&buf)
            .map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], RlError> {
            if *cursor + n > bytes.len() {
                return Err(RlError::Checkpoint("truncated checkpoint".into()));
            }
            let slice = &bytes[*cursor..*cursor + n];
            *cursor += n;
            Ok(slice)
        };
        if take(&mut cursor, 8)? != CHECKPOINT_MAGIC {
            return Err(RlError::Checkpoint("bad magic; not a policy checkpoint".into()));
        }
        let read_u32 = |cursor: &mut usize| -> Result<u32, RlError> {
            Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
        };
        let read_dims = |cursor: &mut usize| -> Result<Vec<usize>, RlError> {
            let n = read_u32(cursor)? as usize;
            if n < 2 || n > 16 {
                return Err(RlError::Checkpoint(format!("implausible layer count {n}")));
            }
            (0..n).map(|_| Ok(read_u32(cursor)? as usize)).collect()
        };
        let mean_dims = read_dims(&mut cursor)?;
        let value_dims = read_dims(&mut cursor)?;
        let stage = match take(&mut cursor, 1)?[0] {
            0 => CurriculumStage::PositionHold,
            1 => CurriculumStage::PositionSet,
            other => {
                return Err(RlError::Checkpoint(format!("unknown stage tag {other}")))
            }
        };
        let env_steps = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
        let read_f64 = |cursor: &mut usize| -> Result<f64, RlError> {
            Ok(f64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
        };
        let action_bound = read_f64(&mut cursor)?;
        let mut log_std = [0.0; ACTION_DIM];
        for s in &mut log_std {
            *s = read_f64(&mut cursor)?;
        }
        let read_net = |cursor: &mut usize, dims: &[usize]| -> Result<Mlp, RlError> {
            let count = Mlp::param_count(dims);
            let mut params = Vec::with_capacity(count);
            for _ in 0..count {
                params.push(read_f64(cursor)?);
            }
            Mlp::from_params(dims, params)
                .ok_or_else(|| RlError::Checkpoint("parameter count mismatch".into()))
        };
        let mean_net = read_net(&mut cursor, &mean_dims)?;
        let value_net = read_net(&mut cursor, &value_dims)?;
        if cursor != bytes.len() {
            return Err(RlError::Checkpoint(format!(
                "{} trailing bytes in checkpoint",
                bytes.len() - cursor
            )));
        }
        if mean_dims[0] != OBS_DIM
            || *mean_dims.last().unwrap() != ACTION_DIM
            || value_dims[0] != OBS_DIM
            || *value_dims.last().unwrap() != 1
        {
            return Err(RlError::Checkpoint(format!(
                "architecture mismatch: mean {mean_dims:?}, value {value_dims:?}"
            )));
        }
        Ok(Self {
            params: PolicyParams {
                mean_net,
                value_net,
                log_std,
                action_bound,
            },
            stage,
            env_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_forward() {
        let params = PolicyParams {
            mean_net: Mlp::zeros(&[OBS_DIM, 4, ACTION_DIM]),
            value_net: Mlp::zeros(&[OBS_DIM, 4, 1]),
            log_std: [-0.5; ACTION_DIM],
            action_bound: 1.0,
        };
        let out = policy_forward(&params, &[0.4; OBS_DIM]);
        assert_eq!(out.mean, [0.0; ACTION_DIM]);
        assert_eq!(out.value, 0.0);
        for s in out.std {
            assert!((s - (-0.5f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_tiny_network() {
        // mean net 9 -> 1 -> 3 with hand weights; check one output channel.
        let mut w = vec![0.0; Mlp::param_count(&[OBS_DIM, 1, ACTION_DIM])];
        w[0] = 0.2; // first input weight of the hidden unit
        w[OBS_DIM] = 0.1; // hidden bias
        w[OBS_DIM + 1] = 0.7; // hidden -> action 0 weight
        w[OBS_DIM + 1 + ACTION_DIM] = -0.05; // action 0 bias
        let params = PolicyParams {
            mean_net: Mlp::from_params(&[OBS_DIM, 1, ACTION_DIM], w).unwrap(),
            value_net: Mlp::zeros(&[OBS_DIM, 4, 1]),
            log_std: [0.0; ACTION_DIM],
            action_bound: 2.0,
        };
        let mut obs = [0.0; OBS_DIM];
        obs[0] = 0.5;
        let out = policy_forward(&params, &obs);
        let hidden = (0.2 * 0.5 + 0.1_f64).tanh();
        let head = 0.7 * hidden - 0.05;
        assert!((out.mean[0] - 2.0 * head.tanh()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_eval_action_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PolicyParams::new(&[16, 16], 1.0, -0.5, &mut rng);
        let out = policy_forward(&params, &[0.1; OBS_DIM]);
        // Eval mode uses the mean directly; equivalently the std -> 0 limit.
        let eval_action = out.mean;
        for a in eval_action {
            assert!(a.abs() <= params.action_bound);
        }
    }

    #[test]
    fn zero_noise_sample_matches_hand_density() {
        // With epsilon = 0 the density is -sum(log(std * sqrt(2pi))).
        let mean = [0.3, -0.2, 0.0];
        let std = [0.5, 0.5, 0.5];
        let lp = log_prob(&mean, &std, &mean);
        let expected: f64 = -3.0 * (0.5_f64 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn seeded_sampling_replays_identically() {
        let mean = [0.1, 0.2, -0.3];
        let std = [0.4, 0.4, 0.4];
        let a = sample_action(&mean, &std, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_action(&mean, &std, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.log_prob, b.log_prob);
    }

    #[test]
    fn gaussian_density_integrates_to_one_on_a_slice() {
        // 1-D slice through the diagonal density: trapezoid over +-8 sigma.
        let mean = [0.2, 0.0, 0.0];
        let std = [0.7, 1.0, 1.0];
        let n = 4000;
        let lo = mean[0] - 8.0 * std[0];
        let hi = mean[0] + 8.0 * std[0];
        let h = (hi - lo) / n as f64;
        let slice_density = |x: f64| {
            let z = (x - mean[0]) / std[0];
            (-0.5 * z * z).exp() / (std[0] * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut integral = 0.5 * (slice_density(lo) + slice_density(hi));
        for i in 1..n {
            integral += slice_density(lo + i as f64 * h);
        }
        integral *= h;
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
        // And the slice density agrees with exp(log_prob) up to the other axes.
        let x = [0.5, 0.0, 0.0];
        let lp = log_prob(&mean, &std, &x);
        let other_axes = (std[1] * (2.0 * std::f64::consts::PI).sqrt()).recip()
            * (std[2] * (2.0 * std::f64::consts::PI).sqrt()).recip();
        assert!((lp.exp() - slice_density(0.5) * other_axes).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ckpt = Checkpoint {
            params: PolicyParams::new(&[8, 8], 1.0, -0.5, &mut rng),
            stage: CurriculumStage::PositionSet,
            env_steps: 123_456,
        };
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn checkpoint_rejects_truncation_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ckpt = Checkpoint {
            params: PolicyParams::new(&[8], 1.0, -0.5, &mut rng),
            stage: CurriculumStage::PositionHold,
            env_steps: 5,
        };
        ckpt.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
