//! Trajectory CSV and metrics-summary formats.
//!
//! Trajectory rows are written with Rust's shortest-roundtrip float
//! formatting, so parsing a file back reproduces every value bit for bit
//! and replay checks can demand 1e-9 agreement.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const TRAJECTORY_HEADER: &str =
    "trial,drone,t,x,y,z,vx,vy,vz,ax,ay,az,ux,uy,uz,reward,phase";

/// One 10 Hz telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub trial: u32,
    pub drone: usize,
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
    pub command: [f64; 3],
    pub reward: f64,
    pub phase: String,
}

impl TrajectoryRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = String::with_capacity(160);
        write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.drone,
            self.t,
            self.position[0],
            self.position[1],
            self.position[2],
            self.velocity[0],
            self.velocity[1],
            self.velocity[2],
            self.acceleration[0],
            self.acceleration[1],
            self.acceleration[2],
            self.command[0],
            self.command[1],
            self.command[2],
            self.reward,
            self.phase
        )
        .expect("writing to a String cannot fail");
        line
    }

    pub fn parse(line: &str, lineno: usize) -> Result<Self, EnvError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 17 {
            return Err(EnvError::Trajectory(format!(
                "line {lineno}: expected 17 fields, found {}",
                fields.len()
            )));
        }
        let bad = |what: &str| EnvError::Trajectory(format!("line {lineno}: bad {what}"));
        let f = |idx: usize, what: &str| -> Result<f64, EnvError> {
            fields[idx].parse::<f64>().map_err(|_| bad(what))
        };
        Ok(Self {
            trial: fields[0].parse().map_err(|_| bad("trial"))?,
            drone: fields[1].parse().map_err(|_| bad("drone"))?,
            t: f(2, "t")?,
            position: [f(3, "x")?, f(4, "y")?, f(5, "z")?],
            velocity: [f(6, "vx")?, f(7, "vy")?, f(8, "vz")?],
            acceleration: [f(9, "ax")?, f(10, "ay")?, f(11, "az")?],
            command: [f(12, "ux")?, f(13, "uy")?, f(14, "uz")?],
            reward: f(15, "reward")?,
            phase: fields[16].to_string(),
        })
    }
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<(), EnvError> {
    let mut out = String::with_capacity(rows.len() * 160 + 64);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| EnvError::Trajectory(format!("{}: {e}", path.display())))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, EnvError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EnvError::Trajectory(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line != TRAJECTORY_HEADER {
                return Err(EnvError::Trajectory(format!(
                    "line 1: unexpected header {line:?}"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(TrajectoryRow::parse(line, idx + 1)?);
    }
    Ok(rows)
}

/// Outcome bookkeeping per (trial, drone), carried inside the summary so a
/// replay can re-derive shifts without re-simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub drone: usize,
    pub outcome: String,
    pub pad_center: [f64; 3],
    pub final_position: [f64; 3],
    pub landing_shift_cm: Option<f64>,
    pub landed_on_pad: bool,
    pub discounted_return: f64,
}

/// The structured metrics summary written next to every evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub trials: u32,
    pub drones_per_trial: usize,
    pub invalid_trials: u32,
    pub touchdown_count: u32,
    pub pad_hit_rate: f64,
    pub mean_landing_shift_cm: Option<f64>,
    pub std_landing_shift_cm: Option<f64>,
    pub mean_discounted_return: f64,
    pub near_miss_count: u32,
    pub records: Vec<TrialRecord>,
}

impl MetricsSummary {
    /// Aggregate shift statistics and rates from the per-drone records.
    pub fn finalize(&mut self) {
        let shifts: Vec<f64> = self
            .records
            .iter()
            .filter_map(|r| r.landing_shift_cm)
            .collect();
        self.touchdown_count = shifts.len() as u32;
        let attempts = self.records.len().max(1) as f64;
        let hits = self.records.iter().filter(|r| r.landed_on_pad).count();
        self.pad_hit_rate = hits as f64 / attempts;
        if shifts.is_empty() {
            self.mean_landing_shift_cm = None;
            self.std_landing_shift_cm = None;
        } else {
            let n = shifts.len() as f64;
            let mean = shifts.iter().sum::<f64>() / n;
            let var = shifts.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            self.mean_landing_shift_cm = Some(mean);
            self.std_landing_shift_cm = Some(var.sqrt());
        }
        let n = self.records.len().max(1) as f64;
        self.mean_discounted_return =
            self.records.iter().map(|r| r.discounted_return).sum::<f64>() / n;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| EnvError::Trajectory(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Trajectory(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| EnvError::Trajectory(format!("{}: {e}", path.display())))
    }
}
