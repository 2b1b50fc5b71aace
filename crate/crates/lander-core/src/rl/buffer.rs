//! Rollout storage and generalized advantage estimation.
//!
//! Transitions are collected per stream (one stream per training
//! environment). Episode boundaries cut the GAE recursion; a boundary
//! carries a bootstrap value, zero for true terminations (crash, out of
//! bounds) and V(s') for truncations (horizon, touchdown — the process
//! physically continues, the episode just stops being scored).

use super::{ACTION_DIM, OBS_DIM};

/// One collected step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub observation: [f64; OBS_DIM],
    /// Raw Gaussian draw (pre-clamp); densities are evaluated on this.
    pub action_raw: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// True when this step ended its episode.
    pub done: bool,
    /// Value carried across the boundary when `done`: zero for terminal
    /// states, V(next observation) for truncations.
    pub bootstrap_value: f64,
}

/// Rollout of one or more streams plus computed advantages/returns.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    streams: Vec<Vec<StepRecord>>,
    /// Flattened in fixed stream order after `compute_gae`.
    pub flat: Vec<StepRecord>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_streams: usize) -> Self {
        Self {
            streams: vec![Vec::new(); num_streams],
            ..Self::default()
        }
    }

    pub fn push(&mut self, stream: usize, record: StepRecord) {
        self.streams[stream].push(record);
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        for s in &mut self.streams {
            s.clear();
        }
        self.flat.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    /// GAE(γ, λ) per stream, then flatten in stream order.
    ///
    /// `tail_values` holds V(current state) per stream for rollouts cut
    /// mid-episode; a stream whose last record is `done` ignores its entry.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64, tail_values: &[f64]) {
        assert_eq!(tail_values.len(), self.streams.len());
        self.flat.clear();
        self.advantages.clear();
        self.returns.clear();
        for (stream, tail) in self.streams.iter().zip(tail_values) {
            let n = stream.len();
            let mut adv = vec![0.0; n];
            let mut next_advantage = 0.0;
            let mut next_value = *tail;
            for t in (0..n).rev() {
                let r = &stream[t];
                if r.done {
                    next_value = r.bootstrap_value;
                    next_advantage = 0.0;
                }
                let delta = r.reward + gamma * next_value - r.value;
                adv[t] = delta + gamma * lambda * next_advantage;
                next_advantage = adv[t];
                next_value = r.value;
            }
            for (t, r) in stream.iter().enumerate() {
                self.flat.push(*r);
                self.advantages.push(adv[t]);
                self.returns.push(adv[t] + r.value);
            }
        }
    }

    /// Normalize advantages to zero mean, unit variance over the batch.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// Discounted return of a reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for r in rewards.iter().rev() {
        total = r + gamma * total;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(reward: f64, value: f64) -> StepRecord {
        StepRecord {
            observation: [0.0; OBS_DIM],
            action_raw: [0.0; ACTION_DIM],
            log_prob: 0.0,
            reward,
            value,
            done: false,
            bootstrap_value: 0.0,
        }
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0], 0.3), 1.0);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
        assert_eq!(discounted_return(&[0.0, 0.0, 0.0], 0.9), 0.0);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let mut buf = RolloutBuffer::new(1);
        let (rewards, values) = ([1.0, -0.5, 2.0], [0.3, 0.8, -0.1]);
        for i in 0..3 {
            buf.push(0, record(rewards[i], values[i]));
        }
        let tail = 0.6;
        buf.compute_gae(0.9, 0.0, &[tail]);
        for t in 0..3 {
            let next_v = if t == 2 { tail } else { values[t + 1] };
            let delta = rewards[t] + 0.9 * next_v - values[t];
            assert!((buf.advantages[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_one_with_zero_values_is_discounted_return() {
        let mut buf = RolloutBuffer::new(1);
        let rewards = [0.5, 1.0, -1.0, 2.0];
        for (i, r) in rewards.iter().enumerate() {
            let mut rec = record(*r, 0.0);
            if i == rewards.len() - 1 {
                rec.done = true; // terminal: bootstrap 0
            }
            buf.push(0, rec);
        }
        buf.compute_gae(0.8, 1.0, &[0.0]);
        for t in 0..rewards.len() {
            let expected = discounted_return(&rewards[t..], 0.8);
            assert!(
                (buf.advantages[t] - expected).abs() < 1e-12,
                "t={t}: {} vs {expected}",
                buf.advantages[t]
            );
        }
    }

    #[test]
    fn three_step_hand_unroll() {
        // gamma = 0.9, lambda = 0.5; r = [1, 2, 3], V = [0.5, 1.0, 1.5],
        // tail bootstrap 2.0 (rollout cut mid-episode).
        // delta_2 = 3 + 0.9*2.0 - 1.5 = 3.3
        // delta_1 = 2 + 0.9*1.5 - 1.0 = 2.35
        // delta_0 = 1 + 0.9*1.0 - 0.5 = 1.4
        // A_2 = 3.3; A_1 = 2.35 + 0.45*3.3 = 3.835; A_0 = 1.4 + 0.45*3.835
        let mut buf = RolloutBuffer::new(1);
        buf.push(0, record(1.0, 0.5));
        buf.push(0, record(2.0, 1.0));
        buf.push(0, record(3.0, 1.5));
        buf.compute_gae(0.9, 0.5, &[2.0]);
        assert!((buf.advantages[2] - 3.3).abs() < 1e-12);
        assert!((buf.advantages[1] - 3.835).abs() < 1e-12);
        assert!((buf.advantages[0] - (1.4 + 0.45 * 3.835)).abs() < 1e-12);
        assert!((buf.returns[0] - (buf.advantages[0] + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn episode_boundary_cuts_the_recursion() {
        let mut buf = RolloutBuffer::new(1);
        let mut terminal = record(1.0, 0.4);
        terminal.done = true;
        terminal.bootstrap_value = 0.0;
        buf.push(0, terminal);
        buf.push(0, record(5.0, 0.2));
        buf.compute_gae(0.9, 0.95, &[1.0]);
        // First step sees only its own delta: 1 + 0.9*0 - 0.4.
        assert!((buf.advantages[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn truncation_bootstraps_the_next_value() {
        let mut buf = RolloutBuffer::new(1);
        let mut cut = record(1.0, 0.4);
        cut.done = true;
        cut.bootstrap_value = 3.0; // truncated: V(s') carries across
        buf.push(0, cut);
        buf.compute_gae(0.9, 0.95, &[0.0]);
        assert!((buf.advantages[0] - (1.0 + 0.9 * 3.0 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn normalization_hits_zero_mean_unit_variance() {
        let mut buf = RolloutBuffer::new(2);
        for i in 0..40 {
            buf.push(i % 2, record(i as f64 * 0.37 - 3.0, 0.1 * i as f64));
        }
        buf.compute_gae(0.99, 0.95, &[0.0, 0.0]);
        buf.normalize_advantages();
        let n = buf.advantages.len() as f64;
        let mean = buf.advantages.iter().sum::<f64>() / n;
        let var = buf.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "var {var}");
    }

    #[test]
    fn streams_flatten_in_fixed_order() {
        let mut buf = RolloutBuffer::new(2);
        buf.push(1, record(2.0, 0.0));
        buf.push(0, record(1.0, 0.0));
        buf.compute_gae(0.9, 0.9, &[0.0, 0.0]);
        assert_eq!(buf.flat[0].reward, 1.0);
        assert_eq!(buf.flat[1].reward, 2.0);
    }
}
