//! Episode world: drones, platform, terrain and the 0.1 s agent step that
//! advances 50 physics steps with zero-order-held velocity commands.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::platform::{PlatformPhase, PlatformSim, PLATFORM_DECK_RADIUS};
use super::EnvError;
use crate::control::{cascade_step, CascadeGains, CascadeState, VelocityCommand};
use crate::dynamics::{step_dynamics, DroneParams, RigidBodyState};
use crate::gear::{GearConfig, PlatformPose, Terrain};
use crate::rl::{observe, reward, LinearState, Observation, RewardWeights, ACTION_DIM, OBS_DIM};

/// Physics timestep, seconds.
pub const PHYSICS_DT: f64 = 0.002;
/// Agent decision period: one action per 50 physics steps.
pub const AGENT_PERIOD: f64 = 0.1;

/// The three experiment scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    EvenStatic,
    UnevenStatic,
    RelocateThenLand,
}

impl Scenario {
    pub fn cli_name(&self) -> &'static str {
        match self {
            Scenario::EvenStatic => "even-static",
            Scenario::UnevenStatic => "uneven-static",
            Scenario::RelocateThenLand => "relocate",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        match name {
            "even-static" => Some(Scenario::EvenStatic),
            "uneven-static" => Some(Scenario::UnevenStatic),
            "relocate" => Some(Scenario::RelocateThenLand),
            _ => None,
        }
    }
}

/// Experiment layout constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub drone_count: usize,
    /// Lateral spacing between the two drones at start, m.
    pub drone_spacing: f64,
    /// Straight-line distance from each drone's start to its pad, m.
    pub start_distance: f64,
    pub pad_diameter: f64,
    /// Episode horizon, seconds of simulated time.
    pub horizon: f64,
    /// Altitude above the pad the scripted takeoff climbs to, m.
    pub takeoff_clearance: f64,
    /// Maximum per-foot terrain step for uneven scenarios, m.
    pub max_terrain_step: f64,
    /// Relocation path length, m.
    pub relocation_distance: f64,
    /// Relocation cruise speed, m/s.
    pub relocation_speed: f64,
    /// Relocation acceleration, m/s².
    pub relocation_accel: f64,
    /// Horizontal half-extent of the flight volume, m.
    pub bounds: f64,
    /// Near-miss logging threshold between drones, m.
    pub min_separation: f64,
    /// Fixed observation scale vector.
    pub observation_scale: [f64; OBS_DIM],
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            drone_count: 2,
            drone_spacing: 0.75,
            start_distance: 1.5,
            pad_diameter: 0.20,
            horizon: 15.0,
            takeoff_clearance: 0.5,
            max_terrain_step: 0.08,
            relocation_distance: 1.0,
            relocation_speed: 0.1,
            relocation_accel: 0.05,
            bounds: 5.0,
            min_separation: 0.15,
            observation_scale: [1.0; OBS_DIM],
        }
    }
}

impl EpisodeConfig {
    pub fn pad_radius(&self) -> f64 {
        self.pad_diameter / 2.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.drone_count == 0 || self.drone_count > 2 {
            return Err("drone_count must be 1 or 2".into());
        }
        if !(self.horizon > 1.0) {
            return Err("horizon must exceed 1 s".into());
        }
        if !(self.pad_diameter > 0.0) {
            return Err("pad_diameter must be > 0".into());
        }
        if self.max_terrain_step < 0.0 {
            return Err("max_terrain_step must be >= 0".into());
        }
        if !(self.relocation_speed > 0.0 && self.relocation_accel > 0.0) {
            return Err("relocation profile must have positive speed and accel".into());
        }
        Ok(())
    }
}

/// Why a drone's episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DoneReason {
    /// Gentle pad-plane contact. Scored; episode truncates (the drone
    /// keeps existing on the pad).
    Touchdown,
    /// Hard impact on the deck or contact with the floor.
    Crash,
    OutOfBounds,
    Horizon,
}

impl DoneReason {
    /// Terminations zero the value bootstrap; truncations carry it.
    pub fn is_termination(&self) -> bool {
        matches!(self, DoneReason::Crash | DoneReason::OutOfBounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DronePhase {
    Takeoff,
    Flying,
    Done,
}

impl DronePhase {
    pub fn label(&self) -> &'static str {
        match self {
            DronePhase::Takeoff => "takeoff",
            DronePhase::Flying => "flying",
            DronePhase::Done => "done",
        }
    }
}

/// Per-drone outcome, filled when the drone finishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneOutcome {
    pub reason: DoneReason,
    /// World position at the final event.
    pub final_position: [f64; 3],
    /// Pad center at the final event.
    pub pad_center: [f64; 3],
    /// Horizontal distance to the pad center, cm (touchdowns only).
    pub landing_shift_cm: Option<f64>,
    pub landed_on_pad: bool,
}

#[derive(Debug, Clone)]
pub struct DroneSim {
    pub body: RigidBodyState,
    pub cascade: CascadeState,
    pub phase: DronePhase,
    pub assigned_pad: usize,
    pub held_command: VelocityCommand,
    pub outcome: Option<DroneOutcome>,
    takeoff_target_z: f64,
}

impl DroneSim {
    pub fn linear_state(&self) -> LinearState {
        LinearState {
            position: self.body.position,
            velocity: self.body.velocity,
            acceleration: self.body.acceleration,
        }
    }
}

/// Result of one agent step for one drone.
#[derive(Debug, Clone, Copy)]
pub struct DroneStepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: Option<DoneReason>,
}

/// Gentle-contact test against a pad: within a centimeter of the surface,
/// descending slower than 0.1 m/s, drifting slower than 0.1 m/s.
pub fn detect_touchdown(drone: &RigidBodyState, pad_pose: &PlatformPose, pad_center: &Vector3<f64>) -> bool {
    let normal = pad_pose.rotation() * Vector3::z();
    let gap = normal.dot(&(drone.position - pad_center));
    let descent = -drone.velocity.z;
    let horizontal = drone.velocity.xy().norm();
    gap.abs() < 0.01 && descent < 0.1 && descent > -0.1 && horizontal < 0.1
}

/// Horizontal distance from a touchdown point to the pad center, cm.
pub fn landing_shift_cm(touchdown: &Vector3<f64>, pad_center: &Vector3<f64>) -> f64 {
    ((touchdown.x - pad_center.x).powi(2) + (touchdown.y - pad_center.y).powi(2)).sqrt() * 100.0
}

/// What kind of episode this world runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldMode {
    /// The full two-drone experiment for a scenario.
    Evaluation(Scenario),
    /// Single-drone curriculum task: hold a hover target.
    TrainHold,
    /// Single-drone curriculum task: reach the pad and land.
    TrainSet,
}

#[derive(Debug, Clone)]
pub struct World {
    pub mode: WorldMode,
    pub config: EpisodeConfig,
    pub drone_params: DroneParams,
    pub gains: CascadeGains,
    pub reward_weights: RewardWeights,
    pub platform: PlatformSim,
    pub drones: Vec<DroneSim>,
    pub time: f64,
    /// Hover target for the hold task, world frame.
    pub hold_target: Option<Vector3<f64>>,
    pub near_miss_count: u32,
    substeps: u64,
}

impl World {
    /// Build a world for a scenario (or training task) from a seed.
    /// Terrain, stabilization noise and spawn positions all derive from it.
    #[allow(clippy::too_many_arguments)]
    pub fn reset(
        mode: WorldMode,
        config: &EpisodeConfig,
        gear: &GearConfig,
        drone_params: &DroneParams,
        gains: &CascadeGains,
        reward_weights: &RewardWeights,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terrain_rng_seed: u64 = rng.gen();
        let gear_rng_seed: u64 = rng.gen();

        let uneven = matches!(
            mode,
            WorldMode::Evaluation(Scenario::UnevenStatic)
                | WorldMode::Evaluation(Scenario::RelocateThenLand)
        );
        let relocating = matches!(mode, WorldMode::Evaluation(Scenario::RelocateThenLand));

        // The platform stands at the origin; a relocation run starts there
        // and walks +x by the configured distance onto its uneven patch.
        let platform_xy = (0.0, 0.0);
        let reloc_target = (config.relocation_distance, 0.0);
        let terrain = if uneven {
            let mut trng = ChaCha8Rng::seed_from_u64(terrain_rng_seed);
            let feet = gear.foot_positions_xy();
            let centers: Vec<(f64, f64)> = feet
                .iter()
                .map(|(x, y)| {
                    if relocating {
                        (x + reloc_target.0, y + reloc_target.1)
                    } else {
                        (*x, *y)
                    }
                })
                .collect();
            Terrain::foot_blocks(&centers, config.max_terrain_step, 0.09, &mut trng)
        } else {
            Terrain::flat(config.bounds.max(2.0))
        };

        let platform = PlatformSim::stabilized(
            terrain,
            gear.clone(),
            platform_xy,
            ChaCha8Rng::seed_from_u64(gear_rng_seed),
        )
        .map_err(EnvError::InvalidEpisode)?;

        let mut world = Self {
            mode,
            config: config.clone(),
            drone_params: drone_params.clone(),
            gains: gains.clone(),
            reward_weights: *reward_weights,
            platform,
            drones: Vec::new(),
            time: 0.0,
            hold_target: None,
            near_miss_count: 0,
            substeps: 0,
        };

        match mode {
            WorldMode::Evaluation(scenario) => {
                world.spawn_evaluation_drones(scenario)?;
                if relocating {
                    world
                        .platform
                        .begin_relocation(
                            reloc_target,
                            config.relocation_speed,
                            config.relocation_accel,
                        )
                        .map_err(EnvError::InvalidEpisode)?;
                }
            }
            WorldMode::TrainHold => {
                let pad = world.platform.pad_center(0);
                let target = pad + Vector3::new(0.0, 0.0, config.takeoff_clearance);
                world.hold_target = Some(target);
                let spawn = target
                    + Vector3::new(
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.3..0.5),
                    );
                world.spawn_flying_drone(spawn, 0);
            }
            WorldMode::TrainSet => {
                let pad = world.platform.pad_center(0);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let radius = rng.gen_range(0.5..1.5);
                let height = rng.gen_range(0.3..1.0);
                let spawn = pad + Vector3::new(angle.cos() * radius, angle.sin() * radius, height);
                world.spawn_flying_drone(spawn, 0);
            }
        }
        Ok(world)
    }

    fn spawn_evaluation_drones(&mut self, scenario: Scenario) -> Result<(), EnvError> {
        let n = self.config.drone_count;
        for i in 0..n {
            // Drone 0 starts on the right (-y), drone 1 on the left (+y);
            // assignments are crossed: right drone -> left pad and so on.
            let side = if i == 0 { -1.0 } else { 1.0 };
            let assigned_pad = if i == 0 { 0 } else { 1 };
            let pad = self.platform.pad_center(assigned_pad);
            let (start, takeoff_z) = if scenario == Scenario::RelocateThenLand {
                // Transported on the gear: take off from the pad itself.
                (
                    pad + Vector3::new(0.0, 0.0, 0.01),
                    pad.z + self.config.takeoff_clearance,
                )
            } else {
                // On the floor, spaced laterally, at the configured
                // straight-line distance from the assigned pad.
                let dy = side * self.config.drone_spacing / 2.0;
                let lateral = dy - pad.y;
                let d2 = self.config.start_distance.powi(2) - lateral.powi(2)
                    - pad.z.powi(2);
                let dx = d2.max(0.01).sqrt();
                let ground = self
                    .platform
                    .terrain
                    .height_at(pad.x + dx, dy);
                (
                    Vector3::new(pad.x + dx, dy, ground),
                    pad.z + self.config.takeoff_clearance,
                )
            };
            let body = RigidBodyState::at_rest(start);
            self.drones.push(DroneSim {
                body,
                cascade: CascadeState::default(),
                phase: DronePhase::Takeoff,
                assigned_pad,
                held_command: VelocityCommand::zero(),
                outcome: None,
                takeoff_target_z: takeoff_z,
            });
        }
        Ok(())
    }

    fn spawn_flying_drone(&mut self, position: Vector3<f64>, pad: usize) {
        self.drones.push(DroneSim {
            body: RigidBodyState::at_rest(position),
            cascade: CascadeState::default(),
            phase: DronePhase::Flying,
            assigned_pad: pad,
            held_command: VelocityCommand::zero(),
            outcome: None,
            takeoff_target_z: 0.0,
        });
    }

    /// Target kinematic state a drone observes: its pad, or the hold point.
    pub fn target_state(&self, drone_index: usize) -> LinearState {
        if let Some(target) = self.hold_target {
            LinearState::at_rest(target)
        } else {
            self.platform.pad_state(self.drones[drone_index].assigned_pad)
        }
    }

    pub fn observation(&self, drone_index: usize) -> Observation {
        observe(
            &self.drones[drone_index].linear_state(),
            &self.target_state(drone_index),
            &self.config.observation_scale,
        )
    }

    /// Raw (unscaled) relative state used for rewards.
    fn raw_observation(&self, drone_index: usize) -> Observation {
        observe(
            &self.drones[drone_index].linear_state(),
            &self.target_state(drone_index),
            &[1.0; OBS_DIM],
        )
    }

    /// Advance one agent period (0.1 s) with one held command per drone.
    /// Drones that are already done ignore their slot.
    pub fn step(&mut self, actions: &[[f64; ACTION_DIM]]) -> Result<Vec<DroneStepResult>, EnvError> {
        assert_eq!(actions.len(), self.drones.len(), "one action per drone");
        for (drone, action) in self.drones.iter_mut().zip(actions) {
            if drone.phase == DronePhase::Flying {
                drone.held_command =
                    VelocityCommand::clamped(Vector3::new(action[0], action[1], action[2]), self.gains.max_speed);
            }
        }

        let substeps = (AGENT_PERIOD / PHYSICS_DT).round() as usize;
        for _ in 0..substeps {
            self.substep()?;
        }

        let mut results = Vec::with_capacity(self.drones.len());
        for i in 0..self.drones.len() {
            let raw = self.raw_observation(i);
            let action = match self.drones[i].phase {
                DronePhase::Done => [0.0; ACTION_DIM],
                _ => {
                    let c = self.drones[i].held_command.0;
                    [c.x, c.y, c.z]
                }
            };
            let r = reward(&raw, &action, &self.reward_weights);
            let done = self.drones[i].outcome.as_ref().map(|o| o.reason);
            results.push(DroneStepResult {
                observation: self.observation(i),
                reward: r,
                done,
            });
        }
        Ok(results)
    }

    fn substep(&mut self) -> Result<(), EnvError> {
        self.platform
            .advance(PHYSICS_DT)
            .map_err(EnvError::InvalidEpisode)?;
        self.substeps += 1;
        self.time = self.substeps as f64 * PHYSICS_DT;

        for i in 0..self.drones.len() {
            if self.drones[i].phase == DronePhase::Done {
                continue;
            }
            let command = match self.drones[i].phase {
                DronePhase::Takeoff => {
                    // Scripted vertical ascent onto station.
                    if self.drones[i].body.position.z
                        >= self.drones[i].takeoff_target_z
                    {
                        self.drones[i].phase = DronePhase::Flying;
                        self.drones[i].held_command
                    } else {
                        VelocityCommand(Vector3::new(0.0, 0.0, 0.5))
                    }
                }
                _ => self.drones[i].held_command,
            };
            let drone = &mut self.drones[i];
            let motor = cascade_step(
                &drone.body,
                &command,
                &self.gains,
                &mut drone.cascade,
                &self.drone_params,
                PHYSICS_DT,
            )
            .map_err(|e| EnvError::NonFiniteState(format!("drone {i}: {e}")))?;
            drone.body = step_dynamics(&drone.body, &motor, &self.drone_params, PHYSICS_DT)
                .map_err(|e| EnvError::NonFiniteState(format!("drone {i}: {e}")))?;

            if self.drones[i].phase == DronePhase::Flying {
                self.check_events(i);
            }
        }

        // Horizon cut for everything still flying.
        if self.time >= self.config.horizon {
            for i in 0..self.drones.len() {
                if self.drones[i].phase != DronePhase::Done {
                    let pad = self.platform.pad_center(self.drones[i].assigned_pad);
                    let p = self.drones[i].body.position;
                    self.finish_drone(i, DoneReason::Horizon, p, pad, None, false);
                }
            }
        }

        // Near-miss monitor (no collision physics; downwash is out of scope).
        if self.drones.len() == 2
            && self.drones[0].phase == DronePhase::Flying
            && self.drones[1].phase == DronePhase::Flying
        {
            let gap = (self.drones[0].body.position - self.drones[1].body.position).norm();
            if gap < self.config.min_separation {
                self.near_miss_count += 1;
            }
        }
        Ok(())
    }

    fn check_events(&mut self, i: usize) {
        let body = self.drones[i].body.clone();
        let p = body.position;
        let pad_index = self.drones[i].assigned_pad;
        let pad = self.platform.pad_center(pad_index);
        let pose = self.platform.pose;

        // Out of the flight volume.
        if p.x.abs() > self.config.bounds
            || p.y.abs() > self.config.bounds
            || p.z > 4.0
            || p.z < -0.2
        {
            self.finish_drone(i, DoneReason::OutOfBounds, p, pad, None, false);
            return;
        }

        let over_deck = (p - pose.position).xy().norm() < PLATFORM_DECK_RADIUS;
        if over_deck {
            // Landings only count once the platform is halted and settled.
            if self.platform.cleared_for_landing()
                && detect_touchdown(&body, &pose, &pad)
            {
                let shift = landing_shift_cm(&p, &pad);
                let on_pad = shift <= self.config.pad_radius() * 100.0;
                self.finish_drone(i, DoneReason::Touchdown, p, pad, Some(shift), on_pad);
                return;
            }
            // Crossing the deck plane without a gentle touchdown is a crash.
            let normal = pose.rotation() * Vector3::z();
            let gap = normal.dot(&(p - pad));
            if gap < -0.005 {
                self.finish_drone(i, DoneReason::Crash, p, pad, None, false);
                return;
            }
        } else {
            // Floor contact away from the platform.
            let ground = self.platform.terrain.height_at(p.x, p.y);
            if p.z <= ground + 0.01 && body.velocity.z < 0.0 {
                self.finish_drone(i, DoneReason::Crash, p, pad, None, false);
            }
        }
    }

    fn finish_drone(
        &mut self,
        i: usize,
        reason: DoneReason,
        position: Vector3<f64>,
        pad: Vector3<f64>,
        shift: Option<f64>,
        on_pad: bool,
    ) {
        self.drones[i].phase = DronePhase::Done;
        self.drones[i].outcome = Some(DroneOutcome {
            reason,
            final_position: [position.x, position.y, position.z],
            pad_center: [pad.x, pad.y, pad.z],
            landing_shift_cm: shift,
            landed_on_pad: on_pad,
        });
    }

    pub fn all_done(&self) -> bool {
        self.drones.iter().all(|d| d.phase == DronePhase::Done)
    }
}
