//! Adaptive landing gear: vertical-line leg kinematics, synthetic servo
//! loads, the lift-percent control rule and the closed stabilization loop
//! over a terrain heightfield.
//!
//! The control rule is deliberately tiny: every 0.05 s each leg averages
//! its last 0.15 s of load samples; a filtered load in `[5, 15]` raises the
//! limb by 10 percent of its stroke, a load in `[-9, -4]` lowers it by 5,
//! anything else leaves it alone. The stabilize loop interleaves that rule
//! with the quasi-static pose solve until the platform goes quiet.

pub mod kinematics;
pub mod load;
pub mod pose;
pub mod terrain;

pub use kinematics::{foot_position, foot_position_at_lift, ik_vertical, LegGeometry, LIFT_RANGE_M};
pub use load::{estimate_load, LegMotion};
pub use pose::{solve_platform_pose, PlatformPose, PoseSolution};
pub use terrain::Terrain;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GearError {
    #[error("terrain: {0}")]
    Terrain(String),
    #[error("kinematics: {0}")]
    Kinematics(String),
    #[error("load model: {0}")]
    Load(String),
    #[error("unstable pose: {0}")]
    UnstablePose(String),
    #[error(
        "stabilization did not converge in {ticks} ticks \
         (final roll {roll_deg:.2} deg, pitch {pitch_deg:.2} deg); \
         limb range or load bands exhausted"
    )]
    NonConvergence {
        ticks: u32,
        roll_deg: f64,
        pitch_deg: f64,
        last_pose: PlatformPose,
    },
}

/// Number of raw samples the load filter averages (0.15 s at 0.05 s ticks).
pub const FILTER_WINDOW: usize = 3;

/// Gear tick period, seconds.
pub const TICK_PERIOD: f64 = 0.05;

/// Everything tunable about the platform and its load model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GearConfig {
    /// Platform mass carried by the four legs, kg.
    pub platform_mass: f64,
    /// Half side of the square hip layout, m (hips at (±s, ±s)).
    pub hip_half_spacing: f64,
    /// Hip-to-shoulder offset, m.
    pub l1: f64,
    /// Upper link length, m.
    pub l2: f64,
    /// Lower link length, m.
    pub l3: f64,
    /// Radial shoulder-to-foot reach held during vertical motion, m.
    pub nominal_reach: f64,
    /// Foot height at lift 0 relative to the shoulder pivot, m.
    pub lowest_foot_z: f64,
    /// Static compression of one leg under its nominal share, m. Sets the
    /// contact spring constant; softer legs spread twist loads across all
    /// four feet instead of rocking on a diagonal.
    pub static_compression: f64,
    /// Load reading of a leg carrying its nominal share on a level body,
    /// percent of stall torque.
    pub load_baseline: f64,
    /// Extra load per radian of body lean toward the leg, percent/rad.
    pub lean_gain: f64,
    /// Gaussian noise on static load samples, percent of stall torque.
    pub load_noise_sigma: f64,
    /// Ticks of total silence required to declare convergence.
    pub quiet_ticks: u32,
    /// Default tick budget for `stabilize`.
    pub max_ticks: u32,
}

impl Default for GearConfig {
    fn default() -> Self {
        Self {
            platform_mass: 8.0,
            hip_half_spacing: 0.15,
            l1: 0.06,
            l2: 0.12,
            l3: 0.12,
            nominal_reach: 0.12,
            lowest_foot_z: -0.19,
            static_compression: 0.05,
            load_baseline: 4.0,
            lean_gain: 50.0,
            load_noise_sigma: 0.5,
            quiet_ticks: 10,
            max_ticks: 400,
        }
    }
}

impl GearConfig {
    /// Weight share of one leg with the body level on flat ground, N.
    pub fn nominal_share(&self) -> f64 {
        self.platform_mass * crate::dynamics::GRAVITY / 4.0
    }

    /// Contact spring constant per leg, N/m.
    pub fn spring_constant(&self) -> f64 {
        self.nominal_share() / self.static_compression
    }

    /// Geometry of leg `index` (0..4), laid out on the diagonals.
    pub fn leg_geometry(&self, index: usize) -> LegGeometry {
        assert!(index < 4, "leg index {index} out of range");
        let s = self.hip_half_spacing;
        let (sx, sy) = match index {
            0 => (1.0, 1.0),
            1 => (1.0, -1.0),
            2 => (-1.0, -1.0),
            _ => (-1.0, 1.0),
        };
        LegGeometry {
            hip_position: [sx * s, sy * s, 0.0],
            shoulder_yaw: f64::atan2(sy, sx),
            l1: self.l1,
            l2: self.l2,
            l3: self.l3,
            nominal_reach: self.nominal_reach,
            lowest_foot_z: self.lowest_foot_z,
        }
    }

    pub fn foot_positions_xy(&self) -> [(f64, f64); 4] {
        std::array::from_fn(|i| self.leg_geometry(i).foot_xy())
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.platform_mass > 0.0) {
            return Err("platform_mass must be > 0".into());
        }
        if !(self.static_compression > 0.0) {
            return Err("static_compression must be > 0".into());
        }
        if self.load_noise_sigma < 0.0 || !self.load_noise_sigma.is_finite() {
            return Err("load_noise_sigma must be finite and >= 0".into());
        }
        if self.quiet_ticks == 0 || self.max_ticks <= self.quiet_ticks {
            return Err("need max_ticks > quiet_ticks > 0".into());
        }
        for i in 0..4 {
            self.leg_geometry(i).validate()?;
        }
        Ok(())
    }
}

/// Ring buffer over the last `FILTER_WINDOW` raw load samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadFilter {
    samples: [f64; FILTER_WINDOW],
    len: usize,
    head: usize,
}

impl LoadFilter {
    /// Push one raw sample and return the mean of the buffered samples.
    /// Before the window fills, the mean runs over what is available.
    pub fn push(&mut self, sample: f64) -> f64 {
        self.samples[self.head] = sample;
        self.head = (self.head + 1) % FILTER_WINDOW;
        self.len = (self.len + 1).min(FILTER_WINDOW);
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.samples[..FILTER_WINDOW.min(self.len)]
                .iter()
                .take(self.len)
                .sum::<f64>()
                / self.len as f64
        }
    }
}

/// Per-leg controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct LegState {
    /// Lift percent, 0..=100; maps linearly onto the 0.10 m stroke.
    pub lift_percent: u8,
    /// Joint angles `[hip yaw, shoulder, knee]` matching the lift.
    pub joint_angles: [f64; 3],
    /// Filtered load, percent of stall torque.
    pub filtered_load: f64,
    filter: LoadFilter,
}

impl LegState {
    pub fn new(lift_percent: u8) -> Self {
        Self {
            lift_percent: lift_percent.min(100),
            joint_angles: [0.0; 3],
            filtered_load: 0.0,
            filter: LoadFilter::default(),
        }
    }
}

/// Push one raw sample through a leg's averaging filter; returns and stores
/// the filtered load.
pub fn filter_step(leg: &mut LegState, sample: f64) -> f64 {
    leg.filtered_load = leg.filter.push(sample);
    leg.filtered_load
}

/// The landing-control update rule for one leg.
///
/// A filtered load in `[5, 15]` raises the limb by 10, clamped to 100; a
/// load in `[-9, -4]` lowers it by 5, clamped to 0; anything else holds.
pub fn gear_update(lift_percent: u8, filtered_load: f64) -> u8 {
    if (5.0..=15.0).contains(&filtered_load) {
        (lift_percent + 10).min(100)
    } else if (-9.0..=-4.0).contains(&filtered_load) {
        lift_percent.saturating_sub(5)
    } else {
        lift_percent.min(100)
    }
}

/// Outcome of a stabilization run.
#[derive(Debug, Clone)]
pub struct StabilizeReport {
    pub pose: PlatformPose,
    pub legs: [LegState; 4],
    pub ticks_used: u32,
}

/// Run the closed stabilization loop until the platform goes quiet.
///
/// Each 0.05 s tick: settle the quasi-static pose, sample every leg's load
/// with the limbs at rest, filter, apply the update rule, move the limbs.
/// Converged means no rule fired for `quiet_ticks` consecutive ticks while
/// every filtered load sits inside the settled band. Hitting `max_ticks`
/// first is a non-convergence error carrying the last pose.
pub fn stabilize<R: Rng>(
    terrain: &Terrain,
    cfg: &GearConfig,
    xy: (f64, f64),
    yaw: f64,
    max_ticks: u32,
    rng: &mut R,
) -> Result<StabilizeReport, GearError> {
    let mut legs: [LegState; 4] = std::array::from_fn(|i| {
        let mut leg = LegState::new(0);
        leg.joint_angles = ik_vertical(&cfg.leg_geometry(i), 0)
            .expect("validated geometry reaches lift 0");
        leg
    });

    let mut quiet = 0u32;
    let mut last_pose = None;
    for tick in 1..=max_ticks {
        let sol = solve_platform_pose(&legs, terrain, cfg, xy, yaw)?;
        let mut settled = true;
        let mut new_lifts = [0u8; 4];
        for i in 0..4 {
            let motion = if sol.contact_forces[i] > 1e-9 {
                LegMotion::Static
            } else {
                LegMotion::Airborne
            };
            let sample =
                estimate_load(sol.contact_forces[i], motion, sol.leans[i], cfg, rng)?;
            let filtered = filter_step(&mut legs[i], sample);
            let lift = legs[i].lift_percent;
            new_lifts[i] = gear_update(lift, filtered);
            // Settled means the load rests strictly between the lower and
            // raise bands. Loads inside an action band obviously are not
            // settled, but neither is a limb parked beyond a band edge
            // (for example an overload past 15 with the lift already
            // saturated): it still demands motion the rule cannot deliver.
            if !(-4.0 < filtered && filtered < 5.0) {
                settled = false;
            }
        }
        for i in 0..4 {
            if new_lifts[i] != legs[i].lift_percent {
                legs[i].lift_percent = new_lifts[i];
                legs[i].joint_angles = ik_vertical(&cfg.leg_geometry(i), new_lifts[i])?;
            }
        }
        last_pose = Some(sol.pose);
        quiet = if settled { quiet + 1 } else { 0 };
        if quiet >= cfg.quiet_ticks {
            return Ok(StabilizeReport {
                pose: sol.pose,
                legs,
                ticks_used: tick,
            });
        }
    }

    let pose = last_pose.expect("max_ticks >= 1");
    Err(GearError::NonConvergence {
        ticks: max_ticks,
        roll_deg: pose.roll.to_degrees(),
        pitch_deg: pose.pitch.to_degrees(),
        last_pose: pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn update_rule_examples() {
        assert_eq!(gear_update(40, 10.0), 50);
        assert_eq!(gear_update(95, 10.0), 100);
        assert_eq!(gear_update(3, -5.0), 0);
        assert_eq!(gear_update(40, 0.0), 40);
    }

    #[test]
    fn update_rule_band_edges_are_inclusive() {
        assert_eq!(gear_update(40, 5.0), 50);
        assert_eq!(gear_update(40, 15.0), 50);
        assert_eq!(gear_update(40, 15.1), 40);
        assert_eq!(gear_update(40, 4.9), 40);
        assert_eq!(gear_update(40, -4.0), 35);
        assert_eq!(gear_update(40, -9.0), 35);
        assert_eq!(gear_update(40, -9.1), 40);
        assert_eq!(gear_update(40, -3.9), 40);
    }

    #[test]
    fn filter_averages_last_three() {
        let mut leg = LegState::new(0);
        assert_eq!(filter_step(&mut leg, 6.0), 6.0);
        assert_eq!(filter_step(&mut leg, 6.0), 6.0);
        assert_eq!(filter_step(&mut leg, 6.0), 6.0);
        let mut leg = LegState::new(0);
        filter_step(&mut leg, 0.0);
        filter_step(&mut leg, 6.0);
        assert_eq!(filter_step(&mut leg, 12.0), 6.0);
        // Window slides: a fourth sample evicts the first.
        assert_eq!(filter_step(&mut leg, 12.0), 10.0);
    }

    #[test]
    fn filter_startup_uses_available_samples() {
        let mut leg = LegState::new(0);
        assert_eq!(filter_step(&mut leg, 9.0), 9.0);
        assert_eq!(filter_step(&mut leg, 3.0), 6.0);
    }

    proptest! {
        #[test]
        fn lift_stays_in_range_for_any_load_stream(
            loads in proptest::collection::vec(-60.0f64..60.0, 1..300),
            start in 0u8..=100,
        ) {
            let mut x = start;
            for f in loads {
                x = gear_update(x, f);
                prop_assert!(x <= 100);
            }
        }

        #[test]
        fn sustained_raise_band_reaches_top_in_ten(
            start in 0u8..=100,
            load in 5.0f64..=15.0,
        ) {
            let mut x = start;
            for _ in 0..10 {
                x = gear_update(x, load);
            }
            prop_assert_eq!(x, 100);
        }

        #[test]
        fn sustained_lower_band_reaches_bottom_in_twenty(
            start in 0u8..=100,
            load in -9.0f64..=-4.0,
        ) {
            let mut x = start;
            for _ in 0..20 {
                x = gear_update(x, load);
            }
            prop_assert_eq!(x, 0);
        }
    }

    #[test]
    fn flat_terrain_converges_immediately_with_zero_lifts() {
        let cfg = GearConfig::default();
        let terrain = Terrain::flat(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = stabilize(&terrain, &cfg, (0.0, 0.0), 0.0, cfg.max_ticks, &mut rng).unwrap();
        assert!(report.pose.tilt() < 1e-6);
        for leg in &report.legs {
            assert_eq!(leg.lift_percent, 0);
        }
        assert!(report.ticks_used <= cfg.quiet_ticks + 2);
    }

    #[test]
    fn single_block_converges_near_its_height() {
        // 0.08 m under one foot: that leg ends near lift 80 and the body
        // levels out. Zero noise makes the trajectory exactly reproducible.
        let cfg = GearConfig {
            load_noise_sigma: 0.0,
            ..GearConfig::default()
        };
        let foot = cfg.leg_geometry(0).foot_xy();
        let terrain = Terrain::single_block(foot, 0.08, 0.09);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = stabilize(&terrain, &cfg, (0.0, 0.0), 0.0, cfg.max_ticks, &mut rng).unwrap();
        let lift = report.legs[0].lift_percent;
        assert!(
            (70..=90).contains(&lift),
            "block leg lift {lift} should be near 80"
        );
        assert!(
            report.pose.tilt().to_degrees() < 2.0,
            "final tilt {} deg",
            report.pose.tilt().to_degrees()
        );
    }

    #[test]
    fn oversized_step_exhausts_the_limb_range() {
        let cfg = GearConfig::default();
        let foot = cfg.leg_geometry(0).foot_xy();
        let terrain = Terrain::single_block(foot, 0.15, 0.09);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = stabilize(&terrain, &cfg, (0.0, 0.0), 0.0, cfg.max_ticks, &mut rng);
        assert!(
            matches!(err, Err(GearError::NonConvergence { .. })),
            "0.15 m step must not converge: {err:?}"
        );
    }

    #[test]
    fn stabilize_is_deterministic_for_a_seed() {
        let cfg = GearConfig::default();
        let feet = cfg.foot_positions_xy();
        let run = |seed: u64| {
            let mut terrain_rng = ChaCha8Rng::seed_from_u64(seed);
            let terrain = Terrain::foot_blocks(&feet, 0.08, 0.09, &mut terrain_rng);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            stabilize(&terrain, &cfg, (0.0, 0.0), 0.0, cfg.max_ticks, &mut rng)
                .map(|r| (r.ticks_used, r.legs.map(|l| l.lift_percent), r.pose.tilt()))
                .ok()
        };
        assert_eq!(run(42), run(42));
    }
}
