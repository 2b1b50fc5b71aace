//! The landing platform inside an episode: stabilized pose, pad poses,
//! straight-line relocation with a trapezoidal speed profile, and the live
//! adaptive-gear loop that re-settles the legs after a relocation halt.

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;

use crate::gear::{
    estimate_load, filter_step, gear_update, ik_vertical, solve_platform_pose, GearConfig,
    GearError, LegMotion, LegState, PlatformPose, Terrain, TICK_PERIOD,
};
use crate::rl::LinearState;

/// Body-frame pad centers: two 0.20 m pads embedded left and right of the
/// body center, slightly above the leg plane.
pub const PAD_BODY_OFFSETS: [[f64; 3]; 2] = [[0.0, 0.125, 0.03], [0.0, -0.125, 0.03]];

/// Radius of the platform top surface around the body center; descending
/// inside it meets the deck, outside it continues to the floor.
pub const PLATFORM_DECK_RADIUS: f64 = 0.35;

#[derive(Debug, Clone)]
struct RelocationProfile {
    start: Vector3<f64>,
    direction: Vector3<f64>,
    length: f64,
    cruise_speed: f64,
    accel: f64,
    elapsed: f64,
}

impl RelocationProfile {
    fn new(start: Vector3<f64>, end: Vector3<f64>, cruise_speed: f64, accel: f64) -> Self {
        let delta = end - start;
        let length = delta.norm();
        let direction = if length > 1e-12 {
            delta / length
        } else {
            Vector3::zeros()
        };
        Self {
            start,
            direction,
            length,
            cruise_speed,
            accel,
            elapsed: 0.0,
        }
    }

    /// Distance, speed and acceleration along the path at time t.
    fn sample(&self, t: f64) -> (f64, f64, f64) {
        let a = self.accel;
        let v = self
            .cruise_speed
            .min((self.accel * self.length).sqrt()); // triangular if short
        let t_ramp = v / a;
        let s_ramp = 0.5 * v * v / a;
        let s_cruise = (self.length - 2.0 * s_ramp).max(0.0);
        let t_cruise = s_cruise / v;
        if t < t_ramp {
            (0.5 * a * t * t, a * t, a)
        } else if t < t_ramp + t_cruise {
            (s_ramp + v * (t - t_ramp), v, 0.0)
        } else {
            let td = t - t_ramp - t_cruise;
            if td < t_ramp {
                (
                    s_ramp + s_cruise + v * td - 0.5 * a * td * td,
                    v - a * td,
                    -a,
                )
            } else {
                (self.length, 0.0, 0.0)
            }
        }
    }

    fn halted(&self) -> bool {
        let (s, v, _) = self.sample(self.elapsed);
        s >= self.length - 1e-12 && v <= 1e-12
    }
}

/// Platform state machine within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatformPhase {
    /// Standing still, gear settled, landings accepted.
    Cleared,
    /// Following the relocation path; no landings.
    Relocating,
    /// Halted, gear loop re-settling the legs; no landings yet.
    Adapting,
}

#[derive(Debug, Clone)]
pub struct PlatformSim {
    pub gear: GearConfig,
    pub terrain: Terrain,
    pub legs: [LegState; 4],
    pub pose: PlatformPose,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub phase: PlatformPhase,
    relocation: Option<RelocationProfile>,
    settled_quiet: u32,
    rng: ChaCha8Rng,
    ticks_since_start: u64,
}

impl PlatformSim {
    /// Stand the platform at `xy` on the terrain and run the stabilization
    /// loop to completion before the episode starts.
    pub fn stabilized(
        terrain: Terrain,
        gear: GearConfig,
        xy: (f64, f64),
        mut rng: ChaCha8Rng,
    ) -> Result<Self, GearError> {
        let report =
            crate::gear::stabilize(&terrain, &gear, xy, 0.0, gear.max_ticks, &mut rng)?;
        Ok(Self {
            gear,
            terrain,
            legs: report.legs,
            pose: report.pose,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            phase: PlatformPhase::Cleared,
            relocation: None,
            settled_quiet: 0,
            rng,
            ticks_since_start: 0,
        })
    }

    /// Begin a straight-line relocation to `end_xy`. The path must stay
    /// inside the terrain bounds.
    pub fn begin_relocation(
        &mut self,
        end_xy: (f64, f64),
        cruise_speed: f64,
        accel: f64,
    ) -> Result<(), GearError> {
        if !self.terrain.contains(end_xy.0, end_xy.1) {
            return Err(GearError::Terrain(format!(
                "relocation target ({}, {}) leaves the terrain bounds",
                end_xy.0, end_xy.1
            )));
        }
        let start = self.pose.position;
        let end = Vector3::new(end_xy.0, end_xy.1, start.z);
        self.relocation = Some(RelocationProfile::new(start, end, cruise_speed, accel));
        self.phase = PlatformPhase::Relocating;
        Ok(())
    }

    /// Advance the platform by one physics step; runs a gear tick every
    /// 0.05 s while the platform is adapting.
    pub fn advance(&mut self, dt: f64) -> Result<(), GearError> {
        match self.phase {
            PlatformPhase::Cleared => {}
            PlatformPhase::Relocating => {
                let profile = self.relocation.as_mut().expect("relocating needs a path");
                profile.elapsed += dt;
                let (s, v, a) = profile.sample(profile.elapsed);
                let dir = profile.direction;
                self.pose.position = profile.start + dir * s;
                self.velocity = dir * v;
                self.acceleration = dir * a;
                if profile.halted() {
                    self.velocity = Vector3::zeros();
                    self.acceleration = Vector3::zeros();
                    // Drop the legs and let the gear re-settle in place.
                    for (i, leg) in self.legs.iter_mut().enumerate() {
                        *leg = LegState::new(0);
                        leg.joint_angles = ik_vertical(&self.gear.leg_geometry(i), 0)?;
                    }
                    self.settled_quiet = 0;
                    self.phase = PlatformPhase::Adapting;
                }
            }
            PlatformPhase::Adapting => {
                self.ticks_since_start += 1;
                let steps_per_tick = (TICK_PERIOD / dt).round().max(1.0) as u64;
                if self.ticks_since_start % steps_per_tick == 0 {
                    self.gear_tick()?;
                }
            }
        }
        Ok(())
    }

    /// One adaptive-gear tick: settle the pose, sample loads at rest,
    /// filter, apply the update rule.
    fn gear_tick(&mut self) -> Result<(), GearError> {
        let xy = (self.pose.position.x, self.pose.position.y);
        let sol = solve_platform_pose(&self.legs, &self.terrain, &self.gear, xy, self.pose.yaw)?;
        self.pose = sol.pose;
        let mut settled = true;
        let mut new_lifts = [0u8; 4];
        for i in 0..4 {
            let motion = if sol.contact_forces[i] > 1e-9 {
                LegMotion::Static
            } else {
                LegMotion::Airborne
            };
            let sample = estimate_load(
                sol.contact_forces[i],
                motion,
                sol.leans[i],
                &self.gear,
                &mut self.rng,
            )?;
            let filtered = filter_step(&mut self.legs[i], sample);
            new_lifts[i] = gear_update(self.legs[i].lift_percent, filtered);
            if !(-4.0 < filtered && filtered < 5.0) {
                settled = false;
            }
        }
        for i in 0..4 {
            if new_lifts[i] != self.legs[i].lift_percent {
                self.legs[i].lift_percent = new_lifts[i];
                self.legs[i].joint_angles =
                    ik_vertical(&self.gear.leg_geometry(i), new_lifts[i])?;
            }
        }
        self.settled_quiet = if settled { self.settled_quiet + 1 } else { 0 };
        if self.settled_quiet >= self.gear.quiet_ticks {
            self.phase = PlatformPhase::Cleared;
        }
        Ok(())
    }

    pub fn cleared_for_landing(&self) -> bool {
        self.phase == PlatformPhase::Cleared
    }

    /// World-frame center of one pad.
    pub fn pad_center(&self, pad: usize) -> Vector3<f64> {
        let o = PAD_BODY_OFFSETS[pad];
        self.pose.transform(&Vector3::new(o[0], o[1], o[2]))
    }

    /// Linear kinematic state of one pad (platform motion applies rigidly).
    pub fn pad_state(&self, pad: usize) -> LinearState {
        LinearState {
            position: self.pad_center(pad),
            velocity: self.velocity,
            acceleration: self.acceleration,
        }
    }
}
