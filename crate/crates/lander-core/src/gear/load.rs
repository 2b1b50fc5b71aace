//! Synthetic servo-load readings, percent of stall torque.
//!
//! The physical gear reads the load register of each shoulder servo. Here
//! the reading is reconstructed from the quasi-static solution: the share of
//! weight a leg carries and how far its corner of the body points uphill
//! (the moment arm of a vertical contact force about the shoulder axis grows
//! with that lean). Bands are calibrated so that a leg carrying its nominal
//! share on a level body reads the static baseline, a leg carrying twice its
//! share reads 15-20, an unloaded limb reads below 4, and limbs in motion
//! read in the clockwise/counterclockwise bands.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{GearConfig, GearError};

/// What a limb is doing while its load register is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegMotion {
    Raising,
    Lowering,
    Static,
    Airborne,
}

/// One raw load sample, percent of stall torque.
///
/// `lean` is the tilt component toward the leg (see `PoseSolution::leans`).
pub fn estimate_load<R: Rng>(
    contact_force: f64,
    motion: LegMotion,
    lean: f64,
    cfg: &GearConfig,
    rng: &mut R,
) -> Result<f64, GearError> {
    if !(contact_force >= 0.0) || !contact_force.is_finite() {
        return Err(GearError::Load(format!(
            "negative or non-finite contact force {contact_force}"
        )));
    }
    match motion {
        LegMotion::Airborne => Ok(rng.gen_range(0.0..4.0)),
        LegMotion::Raising => Ok(rng.gen_range(20.0..=50.0)),
        LegMotion::Lowering => Ok(rng.gen_range(-50.0..=-20.0)),
        LegMotion::Static => {
            let share = cfg.nominal_share();
            let ratio = contact_force / share;
            let base = cfg.load_baseline * ratio * ratio + cfg.lean_gain * lean;
            let noisy = if cfg.load_noise_sigma > 0.0 {
                let normal = Normal::new(0.0, cfg.load_noise_sigma)
                    .expect("sigma validated as finite and non-negative");
                base + normal.sample(rng)
            } else {
                base
            };
            Ok(noisy)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet_cfg() -> GearConfig {
        GearConfig {
            load_noise_sigma: 0.0,
            ..GearConfig::default()
        }
    }

    #[test]
    fn airborne_reads_below_four() {
        let cfg = GearConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = estimate_load(0.0, LegMotion::Airborne, 0.0, &cfg, &mut rng).unwrap();
            assert!((0.0..4.0).contains(&s));
        }
    }

    #[test]
    fn nominal_share_reads_the_baseline_exactly_without_noise() {
        let cfg = quiet_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let share = cfg.nominal_share();
        let s = estimate_load(share, LegMotion::Static, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!(s, cfg.load_baseline);
        assert_eq!(cfg.load_baseline, 4.0);
    }

    #[test]
    fn double_share_reads_in_overload_band() {
        let cfg = quiet_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s =
            estimate_load(2.0 * cfg.nominal_share(), LegMotion::Static, 0.0, &cfg, &mut rng)
                .unwrap();
        assert!((15.0..=20.0).contains(&s), "overloaded leg reads {s}");
    }

    #[test]
    fn motion_bands_match_the_servo_spec() {
        let cfg = GearConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let up = estimate_load(1.0, LegMotion::Raising, 0.0, &cfg, &mut rng).unwrap();
            assert!((20.0..=50.0).contains(&up));
            let down = estimate_load(1.0, LegMotion::Lowering, 0.0, &cfg, &mut rng).unwrap();
            assert!((-50.0..=-20.0).contains(&down));
        }
    }

    #[test]
    fn uphill_lean_raises_the_reading() {
        let cfg = quiet_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let share = cfg.nominal_share();
        let level = estimate_load(share, LegMotion::Static, 0.0, &cfg, &mut rng).unwrap();
        let uphill = estimate_load(share, LegMotion::Static, 0.05, &cfg, &mut rng).unwrap();
        let downhill = estimate_load(share, LegMotion::Static, -0.05, &cfg, &mut rng).unwrap();
        assert!(uphill > level && level > downhill);
    }

    #[test]
    fn negative_force_is_rejected() {
        let cfg = GearConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(estimate_load(-1.0, LegMotion::Static, 0.0, &cfg, &mut rng).is_err());
    }
}
