//! Desk-scale quadrotor landing simulator: a self-leveling legged landing
//! platform plus micro-drones that learn to land on its pads.
//!
//! The crate is organized as a stack:
//! - [`dynamics`]: fixed-timestep rigid-body simulation of one quadrotor,
//! - [`control`]: the velocity -> attitude -> rate PID cascade and motor mixer,
//! - [`gear`]: the adaptive landing gear (leg IK, servo-load feedback, the
//!   lift-percent state machine, quasi-static platform pose solver),
//! - [`rl`]: diagonal-Gaussian MLP policy, GAE, clipped-surrogate policy
//!   optimization and the two-stage curriculum,
//! - [`env`]: episode orchestration for the even / uneven / relocate
//!   scenarios with two drones and two pads,
//! - [`config`]: the single run-configuration file shared by everything.
//!
//! Everything is `f64`, seeded, and deterministic: identical configuration
//! and seed reproduce identical trajectories byte for byte.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod gear;
pub mod rl;
pub mod train;


