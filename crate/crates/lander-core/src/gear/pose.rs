//! Quasi-static platform pose on a heightfield.
//!
//! Contact is a stiff vertical spring per foot (the combined servo and
//! structure compliance), so the resting pose is the minimum of
//!
//! ```text
//! E(z, roll, pitch) = m g z + 1/2 k * sum_i max(0, h_i - foot_z_i)^2
//! ```
//!
//! over body height and tilt at fixed XY and yaw. The minimizer is a damped
//! Gauss-Newton iteration; contact forces fall out of the spring law. With
//! at least three loaded feet the equilibrium is unique and the solve is
//! deterministic.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::kinematics::foot_position;
use super::terrain::Terrain;
use super::{GearConfig, GearError, LegState};

/// Pose of the platform body: world position plus roll/pitch/yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformPose {
    pub position: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl PlatformPose {
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    /// Tilt magnitude: angle between the body z-axis and vertical, rad.
    pub fn tilt(&self) -> f64 {
        let z = self.rotation() * Vector3::z();
        z.z.clamp(-1.0, 1.0).acos()
    }

    /// Map a body-frame point to the world frame.
    pub fn transform(&self, body_point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * body_point + self.position
    }
}

/// Result of one pose solve.
#[derive(Debug, Clone)]
pub struct PoseSolution {
    pub pose: PlatformPose,
    /// Vertical contact force per leg, N; zero for feet above the surface.
    pub contact_forces: [f64; 4],
    /// Tilt component toward each leg: z-component of the rotated radial
    /// unit vector pointing at that hip. Positive when that corner of the
    /// body points uphill.
    pub leans: [f64; 4],
}

const MAX_TILT_RAD: f64 = 30.0f64.to_radians();

/// Solve the quasi-static pose for the given leg states.
///
/// `xy` and `yaw` are held fixed; body height, roll and pitch settle under
/// gravity against the terrain. Errors if fewer than three feet end up
/// loaded or the pose runs away past ±30° of tilt.
pub fn solve_platform_pose(
    legs: &[LegState; 4],
    terrain: &Terrain,
    cfg: &GearConfig,
    xy: (f64, f64),
    yaw: f64,
) -> Result<PoseSolution, GearError> {
    let feet_body: Vec<Vector3<f64>> = (0..4)
        .map(|i| foot_position(&cfg.leg_geometry(i), &legs[i].joint_angles))
        .collect();
    let spring_k = cfg.spring_constant();
    let weight = cfg.platform_mass * crate::dynamics::GRAVITY;

    // Penetration of every foot for a candidate (z, roll, pitch).
    let penetrations = |q: &Vector3<f64>| -> [f64; 4] {
        let rot = Rotation3::from_euler_angles(q.y, q.z, yaw);
        let mut pens = [0.0; 4];
        for (i, fb) in feet_body.iter().enumerate() {
            let world = rot * fb + Vector3::new(xy.0, xy.1, q.x);
            pens[i] = terrain.height_at(world.x, world.y) - world.z;
        }
        pens
    };
    let energy = |q: &Vector3<f64>| -> f64 {
        let pens = penetrations(q);
        weight * q.x
            + 0.5 * spring_k * pens.iter().map(|p| p.max(0.0).powi(2)).sum::<f64>()
    };

    // Start slightly below the height where the highest foot touches, so at
    // least one spring is engaged and the Hessian is well conditioned.
    let mut z0 = f64::NEG_INFINITY;
    for fb in &feet_body {
        let h = terrain.height_at(xy.0 + fb.x, xy.1 + fb.y);
        z0 = z0.max(h - fb.z);
    }
    let mut q = Vector3::new(z0 - 0.5 * cfg.static_compression, 0.0, 0.0); // (z, roll, pitch)

    let eps = 1e-7;
    let mut converged = false;
    for _ in 0..80 {
        // Jacobian of penetrations wrt q by central differences.
        let mut jac = [[0.0f64; 3]; 4];
        for axis in 0..3 {
            let mut hi = q;
            let mut lo = q;
            hi[axis] += eps;
            lo[axis] -= eps;
            let ph = penetrations(&hi);
            let pl = penetrations(&lo);
            for i in 0..4 {
                jac[i][axis] = (ph[i] - pl[i]) / (2.0 * eps);
            }
        }
        let pens = penetrations(&q);
        let mut grad = Vector3::new(weight, 0.0, 0.0);
        let mut hess = Matrix3::identity() * (1e-9 * spring_k);
        for i in 0..4 {
            if pens[i] > 0.0 {
                let j = Vector3::new(jac[i][0], jac[i][1], jac[i][2]);
                grad += spring_k * pens[i] * j;
                hess += spring_k * j * j.transpose();
            }
        }
        if grad.norm() < 1e-7 * weight {
            converged = true;
            break;
        }
        let mut step = hess
            .lu()
            .solve(&(-grad))
            .ok_or_else(|| GearError::UnstablePose("singular pose Hessian".into()))?;
        // Keep single steps small enough that the active contact set can
        // only change by a little; Newton re-converges on the next pass.
        let clamp = (0.1 / step.x.abs().max(1e-12))
            .min(0.15 / step.y.abs().max(1e-12))
            .min(0.15 / step.z.abs().max(1e-12));
        if clamp < 1.0 {
            step *= clamp;
        }
        // Backtracking line search keeps the energy monotone.
        let e0 = energy(&q);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = q + step * scale;
            if energy(&trial) <= e0 {
                q = trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            converged = grad.norm() < 1e-6 * weight;
            break;
        }
        if q.y.abs() > MAX_TILT_RAD || q.z.abs() > MAX_TILT_RAD {
            return Err(GearError::UnstablePose(format!(
                "tilt ran past 30 deg (roll {:.1} deg, pitch {:.1} deg)",
                q.y.to_degrees(),
                q.z.to_degrees()
            )));
        }
    }
    if !converged {
        return Err(GearError::UnstablePose("pose solve did not converge".into()));
    }

    let pens = penetrations(&q);
    let mut contact_forces = [0.0; 4];
    let mut loaded = 0;
    for i in 0..4 {
        contact_forces[i] = spring_k * pens[i].max(0.0);
        if contact_forces[i] > 1e-9 {
            loaded += 1;
        }
    }
    if loaded < 3 {
        return Err(GearError::UnstablePose(format!(
            "only {loaded} feet loaded; static pose needs at least 3"
        )));
    }

    let pose = PlatformPose {
        position: Vector3::new(xy.0, xy.1, q.x),
        roll: q.y,
        pitch: q.z,
        yaw,
    };
    let rot = pose.rotation();
    let mut leans = [0.0; 4];
    for i in 0..4 {
        let hip = cfg.leg_geometry(i).hip_position;
        let radial = Vector3::new(hip[0], hip[1], 0.0);
        if radial.norm() > 1e-12 {
            leans[i] = (rot * radial.normalize()).z;
        }
    }

    Ok(PoseSolution {
        pose,
        contact_forces,
        leans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gear::kinematics::ik_vertical;

    fn legs_at_lift(cfg: &GearConfig, lifts: [u8; 4]) -> [LegState; 4] {
        std::array::from_fn(|i| {
            let mut leg = LegState::new(lifts[i]);
            leg.joint_angles = ik_vertical(&cfg.leg_geometry(i), lifts[i]).unwrap();
            leg
        })
    }

    /// Independent oracle: minimize the same static equilibrium energy with
    /// a derivative-free nested grid search instead of Gauss-Newton.
    fn grid_search_pose(
        cfg: &GearConfig,
        legs: &[LegState; 4],
        terrain: &Terrain,
    ) -> (f64, f64, f64) {
        let feet: Vec<Vector3<f64>> = (0..4)
            .map(|i| foot_position(&cfg.leg_geometry(i), &legs[i].joint_angles))
            .collect();
        let k = cfg.spring_constant();
        let w = cfg.platform_mass * crate::dynamics::GRAVITY;
        let energy = |z: f64, roll: f64, pitch: f64| -> f64 {
            let rot = Rotation3::from_euler_angles(roll, pitch, 0.0);
            let mut e = w * z;
            for fb in &feet {
                let world = rot * fb + Vector3::new(0.0, 0.0, z);
                let pen = terrain.height_at(world.x, world.y) - world.z;
                if pen > 0.0 {
                    e += 0.5 * k * pen * pen;
                }
            }
            e
        };
        let (mut bz, mut br, mut bp) = (0.25, 0.0, 0.0);
        let (mut dz, mut da) = (0.1, 0.2);
        for _ in 0..40 {
            let (mut best, mut arg) = (f64::INFINITY, (bz, br, bp));
            for iz in -4..=4 {
                for ir in -4..=4 {
                    for ip in -4..=4 {
                        let z = bz + iz as f64 * dz / 4.0;
                        let r = br + ir as f64 * da / 4.0;
                        let p = bp + ip as f64 * da / 4.0;
                        let e = energy(z, r, p);
                        if e < best {
                            best = e;
                            arg = (z, r, p);
                        }
                    }
                }
            }
            (bz, br, bp) = arg;
            dz *= 0.5;
            da *= 0.5;
        }
        (bz, br, bp)
    }

    #[test]
    fn flat_terrain_level_equal_shares() {
        let cfg = GearConfig::default();
        let legs = legs_at_lift(&cfg, [0; 4]);
        let terrain = Terrain::flat(1.0);
        let sol = solve_platform_pose(&legs, &terrain, &cfg, (0.0, 0.0), 0.0).unwrap();
        assert!(sol.pose.roll.abs() < 1e-7);
        assert!(sol.pose.pitch.abs() < 1e-7);
        let share = cfg.platform_mass * crate::dynamics::GRAVITY / 4.0;
        for f in sol.contact_forces {
            assert!((f - share).abs() < 1e-6 * share, "force {f} != share {share}");
        }
    }

    #[test]
    fn block_under_one_foot_tilts_and_overloads_it() {
        let cfg = GearConfig::default();
        let legs = legs_at_lift(&cfg, [0; 4]);
        let foot = cfg.leg_geometry(0).foot_xy();
        let terrain = Terrain::single_block(foot, 0.05, 0.09);
        let sol = solve_platform_pose(&legs, &terrain, &cfg, (0.0, 0.0), 0.0).unwrap();
        let share = cfg.platform_mass * crate::dynamics::GRAVITY / 4.0;
        assert!(sol.pose.tilt() > 0.01, "body should tilt");
        assert!(
            sol.contact_forces[0] > 1.1 * share,
            "block leg force {} should exceed the share {}",
            sol.contact_forces[0],
            share
        );
        // Independent oracle agreement.
        let (z, roll, pitch) = grid_search_pose(&cfg, &legs, &terrain);
        assert!((sol.pose.position.z - z).abs() < 1e-4);
        assert!((sol.pose.roll - roll).abs() < 1e-4);
        assert!((sol.pose.pitch - pitch).abs() < 1e-4);
    }

    #[test]
    fn lift_cancels_step_height() {
        let cfg = GearConfig::default();
        let legs = legs_at_lift(&cfg, [50, 0, 0, 0]);
        let foot = cfg.leg_geometry(0).foot_xy();
        let terrain = Terrain::single_block(foot, 0.05, 0.09);
        let sol = solve_platform_pose(&legs, &terrain, &cfg, (0.0, 0.0), 0.0).unwrap();
        assert!(sol.pose.roll.abs() < 1e-3, "roll {}", sol.pose.roll);
        assert!(sol.pose.pitch.abs() < 1e-3, "pitch {}", sol.pose.pitch);
    }

    #[test]
    fn equilibrium_residuals_vanish() {
        // Force and moment balance checked directly on the solver output.
        let cfg = GearConfig::default();
        let legs = legs_at_lift(&cfg, [0; 4]);
        let foot = cfg.leg_geometry(2).foot_xy();
        let terrain = Terrain::single_block(foot, 0.04, 0.09);
        let sol = solve_platform_pose(&legs, &terrain, &cfg, (0.0, 0.0), 0.0).unwrap();
        let weight = cfg.platform_mass * crate::dynamics::GRAVITY;
        let total: f64 = sol.contact_forces.iter().sum();
        assert!((total - weight).abs() < 1e-6 * weight);
        // Moments of the vertical contact forces about the body origin.
        let rot = sol.pose.rotation();
        let (mut mx, mut my) = (0.0, 0.0);
        for i in 0..4 {
            let fb = foot_position(&cfg.leg_geometry(i), &legs[i].joint_angles);
            let world = rot * fb;
            mx += sol.contact_forces[i] * world.y;
            my -= sol.contact_forces[i] * world.x;
        }
        assert!(mx.abs() < 1e-5 * weight, "moment x {mx}");
        assert!(my.abs() < 1e-5 * weight, "moment y {my}");
    }

    #[test]
    fn cliff_under_two_feet_is_unstable() {
        // Everything on the +x side drops away: the two feet there hang,
        // the remaining pair forms a contact line and the body tips over.
        let cfg = GearConfig::default();
        let legs = legs_at_lift(&cfg, [0; 4]);
        let cell = 0.05;
        let n = 40;
        let origin = (-1.0, -1.0);
        let mut heights = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let x = origin.0 + c as f64 * cell;
                if x > 0.05 {
                    heights[r * n + c] = -1.0;
                }
            }
        }
        let terrain = Terrain::new(heights, n, n, cell, origin).unwrap();
        assert!(matches!(
            solve_platform_pose(&legs, &terrain, &cfg, (0.0, 0.0), 0.0),
            Err(GearError::UnstablePose(_))
        ));
    }
}
