//! Episode orchestration: the three experiment scenarios with two drones
//! and two pads, plus the single-drone curriculum worlds used in training.

pub mod logging;
pub mod platform;
pub mod world;

pub use logging::{
    read_trajectory, write_trajectory, MetricsSummary, TrajectoryRow, TrialRecord,
    TRAJECTORY_HEADER,
};
pub use platform::{PlatformPhase, PlatformSim, PAD_BODY_OFFSETS, PLATFORM_DECK_RADIUS};
pub use world::{
    detect_touchdown, landing_shift_cm, DoneReason, DroneOutcome, DronePhase, DroneSim,
    DroneStepResult, EpisodeConfig, Scenario, World, WorldMode, AGENT_PERIOD, PHYSICS_DT,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode invalid: {0}")]
    InvalidEpisode(crate::gear::GearError),
    #[error("non-finite simulation state: {0}")]
    NonFiniteState(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
}

pub mod eval;
pub mod replay;

pub use eval::{outcome_label, run_evaluation};
pub use replay::{replay, replay_drone, ReplayReport, ReplayedRecord};
