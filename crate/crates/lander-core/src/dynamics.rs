//! Fixed-timestep rigid-body simulation of a micro-quadrotor driven by four
//! motor thrust commands.
//!
//! The model is a standard X-configuration quadrotor: four rotors produce
//! thrust along the body z-axis and differential thrust produces body
//! torques. Forces are gravity, collective thrust and a linear drag term.
//! Integration is symplectic (velocity first, trapezoidal position update),
//! which keeps a constant-acceleration trajectory exact and hover an exact
//! fixed point.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.81;

/// Largest physics step the integrator accepts, seconds.
pub const MAX_DT: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("invalid timestep {0} (must be in (0, {MAX_DT}])")]
    BadTimestep(f64),
}

/// Physical constants of one quadrotor.
///
/// Defaults are Crazyflie-class. `arm` is the moment arm of each motor about
/// the roll and pitch axes (motors sit at (±arm, ±arm) in the body plane).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneParams {
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Diagonal body inertia (Ixx, Iyy, Izz), kg·m².
    pub inertia: [f64; 3],
    /// Motor moment arm about roll/pitch axes, m.
    pub arm: f64,
    /// Maximum thrust per motor, N.
    pub max_motor_thrust: f64,
    /// Yaw reaction torque per newton of motor thrust, N·m/N.
    pub yaw_torque_coeff: f64,
    /// Linear drag coefficient, N·s/m.
    pub drag_coeff: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            mass: 0.03,
            inertia: [1.4e-5, 1.4e-5, 2.2e-5],
            arm: 0.046,
            max_motor_thrust: 0.15,
            yaw_torque_coeff: 0.006,
            drag_coeff: 5.0e-4,
        }
    }
}

impl DroneParams {
    /// Collective thrust that exactly balances gravity, N.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * GRAVITY
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0) {
            return Err("mass must be > 0".into());
        }
        if self.inertia.iter().any(|i| !(*i > 0.0)) {
            return Err("inertia components must be > 0".into());
        }
        if !(self.arm > 0.0) {
            return Err("arm must be > 0".into());
        }
        if 4.0 * self.max_motor_thrust <= self.mass * GRAVITY {
            return Err("hover infeasible: 4*max_motor_thrust <= mass*g".into());
        }
        Ok(())
    }
}

/// Per-motor thrusts in newtons, already clamped to `[0, max]`.
///
/// Motor order (top view, x forward, y left): 0 front-right, 1 rear-right,
/// 2 rear-left, 3 front-left. Motors 0 and 2 spin opposite to 1 and 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorCommand {
    pub thrusts: [f64; 4],
    /// True when the requested mix had to be clamped into `[0, max]`.
    pub saturated: bool,
}

impl MotorCommand {
    pub fn total_thrust(&self) -> f64 {
        self.thrusts.iter().sum()
    }
}

/// Full kinematic state of one rigid body.
///
/// `acceleration` is the net specific force (thrust + drag + gravity) over
/// mass computed at the step that produced this state; a hovering drone
/// reports zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub body_rates: Vector3<f64>,
}

impl RigidBodyState {
    /// At rest, level, at the given position.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.acceleration.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
    }
}

/// Map a requested collective thrust and body torques onto four motors.
///
/// The unsaturated mix satisfies the requested totals exactly; when any
/// motor must be clamped the command is flagged `saturated` and the sum is
/// rescaled so the collective thrust is preserved whenever that is possible
/// without leaving `[0, max]`.
pub fn motor_mix(
    total_thrust: f64,
    body_torques: Vector3<f64>,
    params: &DroneParams,
) -> MotorCommand {
    let quarter = total_thrust / 4.0;
    let rx = body_torques.x / (4.0 * params.arm);
    let ry = body_torques.y / (4.0 * params.arm);
    let rz = body_torques.z / (4.0 * params.yaw_torque_coeff);

    // Signs per motor layout: torque about x = arm*(-t0 - t1 + t2 + t3),
    // about y = arm*(-t0 + t1 + t2 - t3), yaw = c*(t0 - t1 + t2 - t3).
    let raw = [
        quarter - rx - ry + rz,
        quarter - rx + ry - rz,
        quarter + rx + ry + rz,
        quarter + rx - ry - rz,
    ];

    let mut thrusts = [0.0; 4];
    let mut saturated = false;
    for (out, r) in thrusts.iter_mut().zip(raw.iter()) {
        let clamped = r.clamp(0.0, params.max_motor_thrust);
        if clamped != *r {
            saturated = true;
        }
        *out = clamped;
    }

    // Restore the collective thrust lost to clamping, staying inside limits.
    if saturated {
        let deficit = total_thrust.clamp(0.0, 4.0 * params.max_motor_thrust)
            - thrusts.iter().sum::<f64>();
        if deficit.abs() > 1e-12 {
            let share = deficit / 4.0;
            for t in thrusts.iter_mut() {
                *t = (*t + share).clamp(0.0, params.max_motor_thrust);
            }
        }
    }

    MotorCommand { thrusts, saturated }
}

/// Advance the rigid body one step under the given motor command.
///
/// Velocity and body rates update first; position uses the average of old
/// and new velocity, so constant-acceleration segments integrate exactly.
/// The attitude quaternion is renormalized every step.
pub fn step_dynamics(
    state: &RigidBodyState,
    cmd: &MotorCommand,
    params: &DroneParams,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0) || dt > MAX_DT || !dt.is_finite() {
        return Err(DynamicsError::BadTimestep(dt));
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if cmd.thrusts.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::NonFinite("motor command"));
    }

    let total_thrust: f64 = cmd.thrusts.iter().sum();
    let thrust_world = state.attitude * Vector3::new(0.0, 0.0, total_thrust);
    let drag = -params.drag_coeff * state.velocity;
    let gravity = Vector3::new(0.0, 0.0, -GRAVITY * params.mass);
    let accel = (thrust_world + drag + gravity) / params.mass;

    let velocity = state.velocity + accel * dt;
    let position = state.position + (state.velocity + velocity) * (0.5 * dt);

    // Body torques from differential thrust, then Euler's equations with
    // diagonal inertia.
    let t = &cmd.thrusts;
    let torque = Vector3::new(
        params.arm * (-t[0] - t[1] + t[2] + t[3]),
        params.arm * (-t[0] + t[1] + t[2] - t[3]),
        params.yaw_torque_coeff * (t[0] - t[1] + t[2] - t[3]),
    );
    let inertia = Vector3::new(params.inertia[0], params.inertia[1], params.inertia[2]);
    let angular_momentum = inertia.component_mul(&state.body_rates);
    let rate_dot =
        (torque - state.body_rates.cross(&angular_momentum)).component_div(&inertia);
    let body_rates = state.body_rates + rate_dot * dt;

    let attitude = UnitQuaternion::new_normalize(
        (state.attitude * UnitQuaternion::from_scaled_axis(body_rates * dt)).into_inner(),
    );

    let next = RigidBodyState {
        position,
        velocity,
        acceleration: accel,
        attitude,
        body_rates,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite("integration result"));
    }
    Ok(next)
}
