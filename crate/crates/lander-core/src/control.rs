//! Velocity -> attitude -> body-rate PID cascade.
//!
//! The agent commands a velocity vector; this module turns it into motor
//! thrusts. The outer loop converts velocity error into a desired specific
//! force, the middle loop converts the implied tilt into body-rate
//! setpoints, and the inner loop converts rate error into torques which go
//! through the motor mixer. All three loops run at the physics rate and yaw
//! is held at zero throughout (the action space has no yaw channel).

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{motor_mix, DroneParams, MotorCommand, RigidBodyState, GRAVITY};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid timestep {0}")]
    BadTimestep(f64),
}

/// Velocity setpoint in m/s, world frame, clamped to the configured maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand(pub Vector3<f64>);

impl VelocityCommand {
    pub fn clamped(v: Vector3<f64>, max_speed: f64) -> Self {
        Self(Vector3::new(
            v.x.clamp(-max_speed, max_speed),
            v.y.clamp(-max_speed, max_speed),
            v.z.clamp(-max_speed, max_speed),
        ))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

/// Gains and limits for one PID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Symmetric output clamp, must be > 0.
    pub output_limit: f64,
    /// Symmetric clamp on the integral accumulator, must be > 0.
    pub integrator_limit: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        if self.kp < 0.0 || self.ki < 0.0 || self.kd < 0.0 {
            return Err("pid gains must be >= 0".into());
        }
        if !(self.output_limit > 0.0) || !(self.integrator_limit > 0.0) {
            return Err("pid limits must be > 0".into());
        }
        Ok(())
    }
}

/// Mutable state of one PID loop.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integrator: f64,
    pub previous_error: f64,
    initialized: bool,
}

/// One PID update. Returns the clamped output and the advanced state.
///
/// The integrator is clamped every step (anti-windup) and the derivative is
/// taken on the error difference; the first call after reset uses a zero
/// derivative.
pub fn pid_step(
    gains: &PidGains,
    state: &PidState,
    error: f64,
    dt: f64,
) -> Result<(f64, PidState), ControlError> {
    if !error.is_finite() {
        return Err(ControlError::NonFinite("error"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ControlError::BadTimestep(dt));
    }
    let integrator = (state.integrator + error * dt)
        .clamp(-gains.integrator_limit, gains.integrator_limit);
    let derivative = if state.initialized {
        (error - state.previous_error) / dt
    } else {
        0.0
    };
    let raw = gains.kp * error + gains.ki * integrator + gains.kd * derivative;
    let output = raw.clamp(-gains.output_limit, gains.output_limit);
    Ok((
        output,
        PidState {
            integrator,
            previous_error: error,
            initialized: true,
        },
    ))
}

/// All cascade tunables. Shipped defaults were tuned once against the
/// velocity-tracking requirement (steady-state error < 5% within 3 s) and
/// then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeGains {
    pub velocity_xy: PidGains,
    pub velocity_z: PidGains,
    /// Attitude loop: tilt error (rad) -> body-rate setpoint (rad/s).
    pub attitude: PidGains,
    /// Rate loop: rate error (rad/s) -> angular acceleration (rad/s²),
    /// scaled by inertia into torque.
    pub rate: PidGains,
    /// Maximum commanded speed per axis, m/s.
    pub max_speed: f64,
    /// Maximum commanded tilt, rad.
    pub max_tilt: f64,
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self {
            velocity_xy: PidGains {
                kp: 4.0,
                ki: 0.5,
                kd: 0.0,
                output_limit: 3.5,
                integrator_limit: 0.5,
            },
            velocity_z: PidGains {
                kp: 4.0,
                ki: 1.0,
                kd: 0.0,
                output_limit: 5.0,
                integrator_limit: 0.5,
            },
            attitude: PidGains {
                kp: 12.0,
                ki: 0.0,
                kd: 0.0,
                output_limit: 8.0,
                integrator_limit: 1.0,
            },
            rate: PidGains {
                kp: 80.0,
                ki: 0.0,
                kd: 0.0,
                output_limit: 400.0,
                integrator_limit: 10.0,
            },
            max_speed: 1.0,
            max_tilt: 20.0_f64.to_radians(),
        }
    }
}

impl CascadeGains {
    pub fn validate(&self) -> Result<(), String> {
        self.velocity_xy.validate()?;
        self.velocity_z.validate()?;
        self.attitude.validate()?;
        self.rate.validate()?;
        if !(self.max_speed > 0.0) {
            return Err("max_speed must be > 0".into());
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < std::f64::consts::FRAC_PI_2) {
            return Err("max_tilt must be in (0, 90°)".into());
        }
        Ok(())
    }
}

/// Per-drone controller state: one PID state per axis per loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CascadeState {
    velocity: [PidState; 3],
    attitude: [PidState; 2],
    rate: [PidState; 3],
}

impl CascadeState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One control step: velocity command in, motor command out.
pub fn cascade_step(
    drone: &RigidBodyState,
    cmd: &VelocityCommand,
    gains: &CascadeGains,
    state: &mut CascadeState,
    params: &DroneParams,
    dt: f64,
) -> Result<MotorCommand, ControlError> {
    if !drone.is_finite() || cmd.0.iter().any(|v| !v.is_finite()) {
        return Err(ControlError::NonFinite("cascade input"));
    }
    let setpoint = VelocityCommand::clamped(cmd.0, gains.max_speed).0;

    // Outer loop: velocity error -> desired world acceleration.
    let mut accel_des = Vector3::zeros();
    for axis in 0..3 {
        let g = if axis == 2 {
            &gains.velocity_z
        } else {
            &gains.velocity_xy
        };
        let err = setpoint[axis] - drone.velocity[axis];
        let (out, next) = pid_step(g, &state.velocity[axis], err, dt)?;
        state.velocity[axis] = next;
        accel_des[axis] = out;
    }

    // Desired specific force; its direction fixes the desired body z-axis.
    let mut force_dir = accel_des + Vector3::new(0.0, 0.0, GRAVITY);
    if force_dir.z < 0.1 * GRAVITY {
        force_dir.z = 0.1 * GRAVITY; // never command an inverted thrust axis
    }

    // Clamp tilt: limit the horizontal component relative to vertical.
    let horiz = force_dir.xy().norm();
    let max_horiz = force_dir.z * gains.max_tilt.tan();
    if horiz > max_horiz {
        let scale = max_horiz / horiz;
        force_dir.x *= scale;
        force_dir.y *= scale;
    }

    let z_des = force_dir.normalize();
    // Desired attitude with zero yaw: rotation taking +z onto z_des.
    let attitude_des = UnitQuaternion::rotation_between(&Vector3::z(), &z_des)
        .unwrap_or_else(UnitQuaternion::identity);

    // Middle loop: attitude error (rotation vector, body frame) -> rate setpoints.
    let err_quat = drone.attitude.inverse() * attitude_des;
    let att_err = err_quat.scaled_axis();
    let mut rate_sp = Vector3::zeros();
    for axis in 0..2 {
        let (out, next) = pid_step(&gains.attitude, &state.attitude[axis], att_err[axis], dt)?;
        state.attitude[axis] = next;
        rate_sp[axis] = out;
    }
    // Yaw rate damps residual yaw error directly.
    rate_sp.z = gains.attitude.kp * att_err.z;

    // Inner loop: rate error -> angular acceleration -> torque.
    let mut torque = Vector3::zeros();
    for axis in 0..3 {
        let err = rate_sp[axis] - drone.body_rates[axis];
        let (out, next) = pid_step(&gains.rate, &state.rate[axis], err, dt)?;
        state.rate[axis] = next;
        torque[axis] = out * params.inertia[axis];
    }

    // Collective thrust along the current body z-axis.
    let body_z = drone.attitude * Vector3::z();
    let thrust = (params.mass * force_dir.dot(&body_z))
        .clamp(0.0, 4.0 * params.max_motor_thrust);

    Ok(motor_mix(thrust, torque, params))
}
