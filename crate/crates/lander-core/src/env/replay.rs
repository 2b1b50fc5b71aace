//! Replay: recompute evaluation metrics from a logged trajectory and check
//! them against the original summary.

use std::collections::BTreeMap;
use std::path::Path;

use super::logging::{read_trajectory, MetricsSummary, TrajectoryRow};
use super::EnvError;
use crate::rl::discounted_return;

/// Metrics recomputed purely from logged rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedRecord {
    pub trial: u32,
    pub drone: usize,
    pub landing_shift_cm: Option<f64>,
    pub discounted_return: f64,
}

/// Recompute the landing shift (distance of the final logged position from
/// the given pad center) and the discounted return of one drone's rows.
pub fn replay_drone(
    rows: &[&TrajectoryRow],
    pad_center: &[f64; 3],
    discount: f64,
) -> ReplayedRecord {
    let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
    let last = rows.last().expect("drone stream has at least one row");
    let shift = if last.phase == "landed" {
        let dx = last.position[0] - pad_center[0];
        let dy = last.position[1] - pad_center[1];
        Some((dx * dx + dy * dy).sqrt() * 100.0)
    } else {
        None
    };
    ReplayedRecord {
        trial: last.trial,
        drone: last.drone,
        landing_shift_cm: shift,
        discounted_return: discounted_return(&rewards, discount),
    }
}

/// Outcome of replaying one evaluation output directory.
#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub records: Vec<ReplayedRecord>,
    /// Largest absolute deviation from the stored summary.
    pub worst_deviation: f64,
    pub matches: bool,
}

/// Replay a trajectory CSV against its sibling metrics summary. Every
/// recomputed shift and return must agree within `tolerance`.
pub fn replay(
    trajectory_path: &Path,
    summary: &MetricsSummary,
    discount: f64,
    tolerance: f64,
) -> Result<ReplayReport, EnvError> {
    let rows = read_trajectory(trajectory_path)?;
    let mut streams: BTreeMap<(u32, usize), Vec<&TrajectoryRow>> = BTreeMap::new();
    for row in &rows {
        streams.entry((row.trial, row.drone)).or_default().push(row);
    }

    let mut records = Vec::new();
    let mut worst: f64 = 0.0;
    for record in &summary.records {
        let key = (record.trial, record.drone);
        let stream = streams.get(&key).ok_or_else(|| {
            EnvError::Trajectory(format!(
                "summary names trial {} drone {} but the trajectory has no such rows",
                record.trial, record.drone
            ))
        })?;
        let replayed = replay_drone(stream, &record.pad_center, discount);
        worst = worst.max(
            (replayed.discounted_return - record.discounted_return).abs(),
        );
        match (replayed.landing_shift_cm, record.landing_shift_cm) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        }
        records.push(replayed);
    }
    Ok(ReplayReport {
        records,
        worst_deviation: worst,
        matches: worst <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_two_row_trajectory_gives_pythagorean_shift() {
        let mk = |t: f64, x: f64, y: f64, reward: f64, phase: &str| TrajectoryRow {
            trial: 0,
            drone: 0,
            t,
            position: [x, y, 0.2],
            velocity: [0.0; 3],
            acceleration: [0.0; 3],
            command: [0.0; 3],
            reward,
            phase: phase.to_string(),
        };
        let rows = vec![mk(0.1, 0.5, 0.0, -1.0, "flying"), mk(0.2, 0.03, 0.04, 2.0, "landed")];
        let refs: Vec<&TrajectoryRow> = rows.iter().collect();
        let replayed = replay_drone(&refs, &[0.0, 0.0, 0.2], 0.5);
        assert!((replayed.landing_shift_cm.unwrap() - 5.0).abs() < 1e-12);
        assert!((replayed.discounted_return - (-1.0 + 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn no_landing_means_no_shift() {
        let row = TrajectoryRow {
            trial: 1,
            drone: 1,
            t: 0.1,
            position: [1.0, 1.0, 1.0],
            velocity: [0.0; 3],
            acceleration: [0.0; 3],
            command: [0.0; 3],
            reward: -2.0,
            phase: "horizon".to_string(),
        };
        let replayed = replay_drone(&[&row], &[0.0; 3], 0.99);
        assert_eq!(replayed.landing_shift_cm, None);
    }
}
