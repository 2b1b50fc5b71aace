//! Per-leg kinematics: the foot travels a strictly vertical line.
//!
//! Each leg has three joints: a yaw joint at the hip that fixes the working
//! plane, and two pitch joints (shoulder, knee) forming a planar two-link
//! chain. Lift percent maps linearly onto the vertical stroke; the radial
//! foot offset stays at its nominal value so the foot XY never moves.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GearError;

/// Total vertical travel of one foot, meters (lift 0..100 maps onto it).
pub const LIFT_RANGE_M: f64 = 0.10;

/// Geometry of one leg, body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegGeometry {
    /// Hip yaw-axis location in the body frame, m.
    pub hip_position: [f64; 3],
    /// Direction of the leg working plane in the body XY plane, rad.
    pub shoulder_yaw: f64,
    /// Horizontal hip-to-shoulder offset, m.
    pub l1: f64,
    /// Upper link length, m.
    pub l2: f64,
    /// Lower link length, m.
    pub l3: f64,
    /// Radial shoulder-to-foot distance held during vertical motion, m.
    pub nominal_reach: f64,
    /// Foot height at lift 0, relative to the shoulder pivot, m (negative).
    pub lowest_foot_z: f64,
}

impl LegGeometry {
    pub fn validate(&self) -> Result<(), String> {
        if self.l1 <= 0.0 || self.l2 <= 0.0 || self.l3 <= 0.0 {
            return Err("link lengths must be > 0".into());
        }
        // Both stroke endpoints must be strictly inside the annular
        // workspace of the two-link chain.
        for z in [self.lowest_foot_z, self.lowest_foot_z + LIFT_RANGE_M] {
            let d = (self.nominal_reach.powi(2) + z.powi(2)).sqrt();
            if d >= self.l2 + self.l3 - 1e-6 || d <= (self.l2 - self.l3).abs() + 1e-6 {
                return Err(format!(
                    "vertical stroke endpoint at z={z} is outside the leg workspace"
                ));
            }
        }
        Ok(())
    }

    /// Unit vector of the working plane in the body XY plane.
    pub fn outward(&self) -> Vector3<f64> {
        Vector3::new(self.shoulder_yaw.cos(), self.shoulder_yaw.sin(), 0.0)
    }

    /// Foot XY in the body frame; constant for all lifts.
    pub fn foot_xy(&self) -> (f64, f64) {
        let o = self.outward();
        let r = self.l1 + self.nominal_reach;
        (
            self.hip_position[0] + r * o.x,
            self.hip_position[1] + r * o.y,
        )
    }
}

/// Joint angles of one leg: `[hip yaw, shoulder pitch, knee pitch]`, rad.
pub type JointAngles = [f64; 3];

/// Inverse kinematics for the vertical line: place the foot at the nominal
/// radial reach and `lowest_foot_z + lift/100 * 0.10` below the shoulder.
pub fn ik_vertical(geom: &LegGeometry, lift_percent: u8) -> Result<JointAngles, GearError> {
    if lift_percent > 100 {
        return Err(GearError::Kinematics(format!(
            "lift percent {lift_percent} outside 0..=100"
        )));
    }
    let r = geom.nominal_reach;
    let z = geom.lowest_foot_z + f64::from(lift_percent) / 100.0 * LIFT_RANGE_M;
    let d2 = r * r + z * z;
    let d = d2.sqrt();
    if d >= geom.l2 + geom.l3 || d <= (geom.l2 - geom.l3).abs() {
        return Err(GearError::Kinematics(format!(
            "target (r={r}, z={z}) unreachable with links {}/{}",
            geom.l2, geom.l3
        )));
    }
    // Knee angle measured from the straight-leg configuration; negative
    // bends the lower link down and back (knee-up stance).
    let cos_knee = (d2 - geom.l2 * geom.l2 - geom.l3 * geom.l3) / (2.0 * geom.l2 * geom.l3);
    let knee = -cos_knee.clamp(-1.0, 1.0).acos();
    let gamma = z.atan2(r);
    let beta = ((geom.l2 * geom.l2 + d2 - geom.l3 * geom.l3) / (2.0 * geom.l2 * d))
        .clamp(-1.0, 1.0)
        .acos();
    let shoulder = gamma + beta;
    Ok([geom.shoulder_yaw, shoulder, knee])
}

/// Forward kinematics: foot position in the body frame.
pub fn foot_position(geom: &LegGeometry, joints: &JointAngles) -> Vector3<f64> {
    let [_, shoulder, knee] = *joints;
    let radial = geom.l1
        + geom.l2 * shoulder.cos()
        + geom.l3 * (shoulder + knee).cos();
    let vertical = geom.l2 * shoulder.sin() + geom.l3 * (shoulder + knee).sin();
    let o = geom.outward();
    Vector3::new(
        geom.hip_position[0] + radial * o.x,
        geom.hip_position[1] + radial * o.y,
        geom.hip_position[2] + vertical,
    )
}

/// Foot position for a lift percent directly (IK followed by FK).
pub fn foot_position_at_lift(
    geom: &LegGeometry,
    lift_percent: u8,
) -> Result<Vector3<f64>, GearError> {
    Ok(foot_position(geom, &ik_vertical(geom, lift_percent)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gear::GearConfig;

    fn leg() -> LegGeometry {
        GearConfig::default().leg_geometry(0)
    }

    #[test]
    fn lift_zero_is_lowest_point() {
        let geom = leg();
        let foot = foot_position_at_lift(&geom, 0).unwrap();
        assert!((foot.z - (geom.hip_position[2] + geom.lowest_foot_z)).abs() < 1e-9);
    }

    #[test]
    fn lift_hundred_raises_exactly_ten_centimeters() {
        let geom = leg();
        let low = foot_position_at_lift(&geom, 0).unwrap();
        let high = foot_position_at_lift(&geom, 100).unwrap();
        assert!((high.z - low.z - LIFT_RANGE_M).abs() < 1e-9);
        assert!((high.x - low.x).abs() < 1e-9);
        assert!((high.y - low.y).abs() < 1e-9);
    }

    #[test]
    fn roundtrip_at_fifty_percent() {
        let geom = leg();
        let foot = foot_position_at_lift(&geom, 50).unwrap();
        let (fx, fy) = geom.foot_xy();
        assert!((foot.x - fx).abs() < 1e-6);
        assert!((foot.y - fy).abs() < 1e-6);
        let expected_z = geom.hip_position[2] + geom.lowest_foot_z + 0.05;
        assert!((foot.z - expected_z).abs() < 1e-6);
    }

    #[test]
    fn roundtrip_error_below_micron_for_all_lifts() {
        let geom = leg();
        let (fx, fy) = geom.foot_xy();
        for lift in 0..=100u8 {
            let foot = foot_position_at_lift(&geom, lift).unwrap();
            let z = geom.hip_position[2]
                + geom.lowest_foot_z
                + f64::from(lift) / 100.0 * LIFT_RANGE_M;
            let err = ((foot.x - fx).powi(2)
                + (foot.y - fy).powi(2)
                + (foot.z - z).powi(2))
            .sqrt();
            assert!(err < 1e-6, "lift {lift}: FK∘IK error {err}");
        }
    }

    #[test]
    fn unreachable_geometry_is_rejected() {
        let mut geom = leg();
        geom.lowest_foot_z = -0.5; // far beyond l2 + l3
        assert!(ik_vertical(&geom, 0).is_err());
        assert!(geom.validate().is_err());
    }

    #[test]
    fn out_of_range_lift_is_rejected() {
        assert!(ik_vertical(&leg(), 101).is_err());
    }
}
