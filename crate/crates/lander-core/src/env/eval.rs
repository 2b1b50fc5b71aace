//! Deterministic evaluation: run N trials of a scenario with the policy in
//! eval mode (action = mean), log 10 Hz trajectories and build the metrics
//! summary.

use super::logging::{MetricsSummary, TrajectoryRow, TrialRecord};
use super::world::{DoneReason, DronePhase, Scenario, World, WorldMode, AGENT_PERIOD};
use super::EnvError;
use crate::config::RunConfig;
use crate::rl::{discounted_return, policy_forward, PolicyParams, ACTION_DIM};

/// Label for the phase column; the final row of a drone carries its
/// outcome instead of a flight phase.
fn phase_label(phase: DronePhase, done: Option<DoneReason>) -> &'static str {
    match done {
        Some(DoneReason::Touchdown) => "landed",
        Some(DoneReason::Crash) => "crashed",
        Some(DoneReason::OutOfBounds) => "oob",
        Some(DoneReason::Horizon) => "horizon",
        None => phase.label(),
    }
}

pub fn outcome_label(reason: DoneReason) -> &'static str {
    match reason {
        DoneReason::Touchdown => "landed",
        DoneReason::Crash => "crashed",
        DoneReason::OutOfBounds => "oob",
        DoneReason::Horizon => "horizon",
    }
}

/// Run `trials` deterministic episodes; returns the trajectory rows and the
/// finalized summary. Trial seeds derive from the master seed by offset.
pub fn run_evaluation(
    config: &RunConfig,
    params: &PolicyParams,
    scenario: Scenario,
    trials: u32,
) -> Result<(Vec<TrajectoryRow>, MetricsSummary), EnvError> {
    let mut rows = Vec::new();
    let mut summary = MetricsSummary {
        scenario: scenario.cli_name().to_string(),
        trials,
        drones_per_trial: config.episode.drone_count,
        invalid_trials: 0,
        touchdown_count: 0,
        pad_hit_rate: 0.0,
        mean_landing_shift_cm: None,
        std_landing_shift_cm: None,
        mean_discounted_return: 0.0,
        near_miss_count: 0,
        records: Vec::new(),
    };

    for trial in 0..trials {
        let seed = config.seed.wrapping_add(trial as u64);
        let mut world = match World::reset(
            WorldMode::Evaluation(scenario),
            &config.episode,
            &config.gear,
            &config.drone,
            &config.control,
            &config.reward,
            seed,
        ) {
            Ok(world) => world,
            Err(EnvError::InvalidEpisode(_)) => {
                summary.invalid_trials += 1;
                continue;
            }
            Err(e) => return Err(e),
        };

        let drone_count = world.drones.len();
        let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); drone_count];
        // Generous safety cap: horizon plus relocation and takeoff time.
        let max_steps = ((world.config.horizon + 60.0) / AGENT_PERIOD) as usize;

        for _ in 0..max_steps {
            let mut actions = vec![[0.0; ACTION_DIM]; drone_count];
            for (i, action) in actions.iter_mut().enumerate() {
                if world.drones[i].phase == DronePhase::Flying {
                    let out = policy_forward(params, &world.observation(i).0);
                    *action = out
                        .mean
                        .map(|a| a.clamp(-params.action_bound, params.action_bound));
                }
            }
            let was_done: Vec<bool> = world
                .drones
                .iter()
                .map(|d| d.phase == DronePhase::Done)
                .collect();
            let results = world.step(&actions)?;
            for i in 0..drone_count {
                if was_done[i] {
                    continue;
                }
                rewards[i].push(results[i].reward);
                let body = &world.drones[i].body;
                let cmd = actions[i];
                rows.push(TrajectoryRow {
                    trial,
                    drone: i,
                    t: world.time,
                    position: [body.position.x, body.position.y, body.position.z],
                    velocity: [body.velocity.x, body.velocity.y, body.velocity.z],
                    acceleration: [
                        body.acceleration.x,
                        body.acceleration.y,
                        body.acceleration.z,
                    ],
                    command: cmd,
                    reward: results[i].reward,
                    phase: phase_label(world.drones[i].phase, results[i].done).to_string(),
                });
            }
            if world.all_done() {
                break;
            }
        }

        for (i, drone) in world.drones.iter().enumerate() {
            let outcome = drone.outcome.unwrap_or(super::world::DroneOutcome {
                reason: DoneReason::Horizon,
                final_position: [
                    drone.body.position.x,
                    drone.body.position.y,
                    drone.body.position.z,
                ],
                pad_center: {
                    let c = world.platform.pad_center(drone.assigned_pad);
                    [c.x, c.y, c.z]
                },
                landing_shift_cm: None,
                landed_on_pad: false,
            });
            // Landed-on-pad must agree with the shift/pad-radius test.
            if let Some(shift) = outcome.landing_shift_cm {
                assert_eq!(
                    outcome.landed_on_pad,
                    shift <= config.episode.pad_radius() * 100.0,
                    "landed flag must match shift <= pad radius"
                );
            }
            summary.records.push(TrialRecord {
                trial,
                drone: i,
                outcome: outcome_label(outcome.reason).to_string(),
                pad_center: outcome.pad_center,
                final_position: outcome.final_position,
                landing_shift_cm: outcome.landing_shift_cm,
                landed_on_pad: outcome.landed_on_pad,
                discounted_return: discounted_return(&rewards[i], config.ppo.discount),
            });
        }
        summary.near_miss_count += world.near_miss_count;
    }

    summary.finalize();
    Ok((rows, summary))
}
