//! Predefined excitation motions used to observe a rope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{
    chirp_trajectory, to_base_motion, wiggle_trajectory, ArmModel, JointTrajectory, JointVector, HOME,
    NUM_JOINTS, PLANAR_JOINTS,
};
use crate::error::{Error, Result};
use crate::sim::BaseMotion;

/// Shape of the joint motion. Joints are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WiggleMotion {
    Sine {
        joint: usize,
        amplitude_deg: f64,
        frequency_hz: f64,
    },
    /// Linear frequency sweep over the whole recording.
    Chirp {
        joint: usize,
        amplitude_deg: f64,
        start_hz: f64,
        end_hz: f64,
    },
    /// Smooth path through `knots` random offsets of the planar joints,
    /// starting and ending at home. Fixed by `seed`, so every rope sees
    /// the same motion.
    Random {
        seed: u64,
        amplitude_deg: f64,
        knots: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiggleSpec {
    pub motion: WiggleMotion,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_home")]
    pub home: JointVector,
}

fn default_frames() -> usize {
    400
}

fn default_rate() -> f64 {
    60.0
}

fn default_home() -> JointVector {
    HOME
}

impl Default for WiggleSpec {
    /// Joint 6, 25°, 0.75 Hz.
    fn default() -> Self {
        WiggleSpec::sine(6, 25.0, 0.75)
    }
}

impl WiggleSpec {
    pub fn sine(joint: usize, amplitude_deg: f64, frequency_hz: f64) -> Self {
        WiggleSpec::with_motion(WiggleMotion::Sine {
            joint,
            amplitude_deg,
            frequency_hz,
        })
    }

    pub fn chirp(joint: usize, amplitude_deg: f64, start_hz: f64, end_hz: f64) -> Self {
        WiggleSpec::with_motion(WiggleMotion::Chirp {
            joint,
            amplitude_deg,
            start_hz,
            end_hz,
        })
    }

    pub fn random(seed: u64, amplitude_deg: f64, knots: usize) -> Self {
        WiggleSpec::with_motion(WiggleMotion::Random {
            seed,
            amplitude_deg,
            knots,
        })
    }

    /// Higher-jerk test motion: joint 6 sweeping 0.5 → 2 Hz at 30°.
    pub fn test_chirp() -> Self {
        WiggleSpec::chirp(6, 30.0, 0.5, 2.0)
    }

    fn with_motion(motion: WiggleMotion) -> Self {
        WiggleSpec {
            motion,
            frames: default_frames(),
            rate: default_rate(),
            home: HOME,
        }
    }

    pub fn duration(&self) -> f64 {
        (self.frames.max(1) - 1) as f64 / self.rate
    }

    pub fn check(&self) -> Result<()> {
        if self.frames < 2 || !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::invalid("wiggle needs at least two frames and a positive rate"));
        }
        let joint = match &self.motion {
            WiggleMotion::Sine { joint, .. } | WiggleMotion::Chirp { joint, .. } => Some(*joint),
            WiggleMotion::Random { knots, .. } => {
                if *knots < 3 {
                    return Err(Error::invalid("random wiggle needs at least three knots"));
                }
                None
            }
        };
        if let Some(j) = joint {
            if j == 0 || j > NUM_JOINTS {
                return Err(Error::invalid(format!("joint {j} does not exist")));
            }
        }
        Ok(())
    }

    pub fn joint_trajectory(&self, arm: &ArmModel) -> Result<JointTrajectory> {
        self.check()?;
        match &self.motion {
            WiggleMotion::Sine {
                joint,
                amplitude_deg,
                frequency_hz,
            } => wiggle_trajectory(
                arm,
                joint - 1,
                amplitude_deg.to_radians(),
                *frequency_hz,
                self.frames,
                self.rate,
                &self.home,
            ),
            WiggleMotion::Chirp {
                joint,
                amplitude_deg,
                start_hz,
                end_hz,
            } => chirp_trajectory(
                arm,
                joint - 1,
                amplitude_deg.to_radians(),
                *start_hz,
                *end_hz,
                self.frames,
                self.rate,
                &self.home,
            ),
            WiggleMotion::Random {
                seed,
                amplitude_deg,
                knots,
            } => self.random_trajectory(arm, *seed, amplitude_deg.to_radians(), *knots),
        }
    }

    fn random_trajectory(&self, arm: &ArmModel, seed: u64, amplitude: f64, knots: usize) -> Result<JointTrajectory> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("amplitude must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = vec![self.home; knots];
        for q in positions.iter_mut().take(knots - 1).skip(1) {
            for j in PLANAR_JOINTS {
                q[j] += rng.random_range(-amplitude..=amplitude);
            }
            if !arm.in_limits(q) {
                return Err(Error::invalid("random wiggle leaves the joint limits"));
            }
        }
        let knot_rate = (knots - 1) as f64 / self.duration();
        // Catmull-Rom slopes, at rest at both ends.
        let mut velocities = vec![[0.0; NUM_JOINTS]; knots];
        for k in 1..knots - 1 {
            for j in 0..NUM_JOINTS {
                velocities[k][j] = (positions[k + 1][j] - positions[k - 1][j]) * knot_rate / 2.0;
            }
        }
        let coarse = JointTrajectory::from_samples(knot_rate, positions, velocities)?;
        let fine = coarse.resampled(self.rate)?;
        if fine.len() != self.frames {
            return Err(Error::Shape {
                expected: format!("{} frames", self.frames),
                actual: fine.len().to_string(),
            });
        }
        Ok(fine)
    }

    pub fn base_motion(&self, arm: &ArmModel) -> Result<BaseMotion> {
        to_base_motion(arm, &self.joint_trajectory(arm)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_400_frames_at_60_hz() {
        let w = WiggleSpec::default();
        assert_eq!((w.frames, w.rate), (400, 60.0));
        assert!((w.duration() - 399.0 / 60.0).abs() < 1e-12);
        let t = w.joint_trajectory(&ArmModel::default()).unwrap();
        assert_eq!(t.len(), 400);
    }

    #[test]
    fn sine_moves_only_the_named_joint() {
        let arm = ArmModel::default();
        let t = WiggleSpec::sine(6, 20.0, 0.5).joint_trajectory(&arm).unwrap();
        let peak = t.positions().iter().map(|q| (q[5] - HOME[5]).abs()).fold(0.0, f64::max);
        assert!((peak - 20f64.to_radians()).abs() < 1e-3);
        for q in t.positions() {
            for j in (0..NUM_JOINTS).filter(|j| *j != 5) {
                assert_eq!(q[j], HOME[j]);
            }
        }
    }

    #[test]
    fn random_wiggle_is_planar_seeded_and_starts_at_home() {
        let arm = ArmModel::default();
        let a = WiggleSpec::random(1, 20.0, 8).joint_trajectory(&arm).unwrap();
        let b = WiggleSpec::random(1, 20.0, 8).joint_trajectory(&arm).unwrap();
        let c = WiggleSpec::random(2, 20.0, 8).joint_trajectory(&arm).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_ne!(a.positions(), c.positions());
        assert_eq!(a.len(), 400);
        let first = a.positions()[0];
        let last = a.positions()[399];
        for j in 0..NUM_JOINTS {
            assert!((first[j] - HOME[j]).abs() < 1e-12);
            assert!((last[j] - HOME[j]).abs() < 1e-9);
        }
        for q in a.positions() {
            for j in [0, 2, 4, 6] {
                assert_eq!(q[j], HOME[j]);
            }
        }
    }

    #[test]
    fn chirp_and_config_round_trip() {
        let w = WiggleSpec::test_chirp();
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.contains("\"kind\":\"chirp\""));
        let back: WiggleSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        let short: WiggleSpec =
            serde_json::from_str(r#"{"motion":{"kind":"sine","joint":6,"amplitude_deg":20,"frequency_hz":0.5}}"#)
                .unwrap();
        assert_eq!(short, WiggleSpec::sine(6, 20.0, 0.5));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let arm = ArmModel::default();
        assert!(WiggleSpec::sine(0, 20.0, 0.5).joint_trajectory(&arm).is_err());
        assert!(WiggleSpec::sine(8, 20.0, 0.5).joint_trajectory(&arm).is_err());
        assert!(WiggleSpec::random(1, 20.0, 2).joint_trajectory(&arm).is_err());
        let w = WiggleSpec {
            frames: 1,
            ..WiggleSpec::default()
        };
        assert!(w.joint_trajectory(&arm).is_err());
    }
}
