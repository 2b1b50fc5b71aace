//! The learning stack: observation and reward construction, the
//! diagonal-Gaussian policy, GAE, the clipped-surrogate update and the
//! two-stage curriculum.

pub mod buffer;
pub mod nn;
pub mod policy;
pub mod ppo;

pub use buffer::{discounted_return, RolloutBuffer, StepRecord};
pub use nn::{Adam, ForwardCache, Mlp};
pub use policy::{
    entropy, log_prob, policy_forward, sample_action, Checkpoint, PolicyOutput, PolicyParams,
    SampledAction,
};
pub use ppo::{flat_params, ppo_loss_and_grad, ppo_update, set_flat_params, PpoConfig, PpoSample, PpoStats};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Observation dimension: relative position, velocity, acceleration.
pub const OBS_DIM: usize = 9;
/// Action dimension: a velocity setpoint per axis.
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss during epoch {epoch}; update aborted")]
    NonFiniteLoss { epoch: u32 },
    #[error("empty rollout buffer")]
    EmptyRollout,
}

/// Linear kinematics of one body: position, velocity, acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl LinearState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }
}

/// The 9-D relative observation, target minus drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn relative_position(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn relative_velocity(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn relative_acceleration(&self) -> Vector3<f64> {
        Vector3::new(self.0[6], self.0[7], self.0[8])
    }
}

/// Componentwise difference of the target (pad) state and the drone state,
/// scaled by a fixed per-component vector (identity by default).
pub fn observe(drone: &LinearState, target: &LinearState, scale: &[f64; OBS_DIM]) -> Observation {
    let p = target.position - drone.position;
    let v = target.velocity - drone.velocity;
    let a = target.acceleration - drone.acceleration;
    Observation([
        p.x * scale[0],
        p.y * scale[1],
        p.z * scale[2],
        v.x * scale[3],
        v.y * scale[4],
        v.z * scale[5],
        a.x * scale[6],
        a.y * scale[7],
        a.z * scale[8],
    ])
}

/// Reward coefficients. `gamma_u` is the control-penalty weight (the
/// discount factor is a separate knob, `PpoConfig::discount`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Velocity-error weight.
    pub alpha: f64,
    /// Acceleration-error weight.
    pub beta: f64,
    /// Control-magnitude penalty weight.
    pub gamma_u: f64,
    /// Proximity bonus granted each step inside the threshold.
    pub xi: f64,
    /// Proximity threshold on the relative position norm, m.
    pub proximity_threshold: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.01,
            gamma_u: 0.05,
            xi: 2.0,
            proximity_threshold: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma_u < 0.0 || self.xi < 0.0 {
            return Err("reward weights must be >= 0".into());
        }
        if !(self.proximity_threshold > 0.0) {
            return Err("proximity_threshold must be > 0".into());
        }
        Ok(())
    }
}

/// Per-step reward: negative distance, velocity, acceleration and control
/// magnitudes, plus the proximity bonus inside the threshold.
pub fn reward(observation: &Observation, action: &[f64; ACTION_DIM], w: &RewardWeights) -> f64 {
    let distance = observation.relative_position().norm();
    let velocity_err = observation.relative_velocity().norm();
    let accel_err = observation.relative_acceleration().norm();
    let control = (action[0] * action[0] + action[1] * action[1] + action[2] * action[2]).sqrt();
    let bonus = if distance < w.proximity_threshold {
        w.xi
    } else {
        0.0
    };
    -distance - w.alpha * velocity_err - w.beta * accel_err - w.gamma_u * control + bonus
}

/// The two training stages: hold a position, then reach one and land.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurriculumStage {
    PositionHold,
    PositionSet,
}

/// Promote when the running mean episode return clears the threshold.
/// `recent_mean_return` must cover at least 20 episodes (pass `None` until
/// then). Stages never demote; the second stage is terminal.
pub fn curriculum_step(
    stage: CurriculumStage,
    recent_mean_return: Option<f64>,
    promotion_threshold: f64,
) -> CurriculumStage {
    match (stage, recent_mean_return) {
        (CurriculumStage::PositionHold, Some(mean)) if mean > promotion_threshold => {
            CurriculumStage::PositionSet
        }
        (stage, _) => stage,
    }
}
