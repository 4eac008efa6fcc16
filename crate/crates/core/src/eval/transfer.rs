use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{held_out_ropes, mean, point_distance, spectral_correlation, Table};
use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::observation::{CameraModel, TrackedPoints};
use crate::params::{sample_uniform, ParamBounds, RopeParams};
use crate::seeds::derive_seed;
use crate::sim::{BaseMotion, SceneGeometry, SimConfig};
use crate::sysid::observe;
use crate::wiggle::WiggleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub bounds: ParamBounds,
    /// Observed wiggle the identification sees.
    pub motion_a: WiggleSpec,
    /// Unseen motion the identified rope is judged on.
    pub motion_b: WiggleSpec,
    pub ropes: usize,
    /// Stable random ropes forming the control.
    pub random_ropes: usize,
    pub camera: CameraModel,
    pub scene: SceneGeometry,
    pub sim: SimConfig,
    pub arm: ArmModel,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            bounds: ParamBounds::default(),
            motion_a: WiggleSpec::default(),
            motion_b: WiggleSpec::test_chirp(),
            ropes: 20,
            random_ropes: 10,
            camera: CameraModel::default(),
            scene: SceneGeometry::default(),
            sim: SimConfig::default(),
            arm: ArmModel::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRow {
    pub rope: usize,
    pub truth: RopeParams,
    pub identified: RopeParams,
    pub correlation_identified: f64,
    pub distance_identified_cm: f64,
    /// Means over the random control ropes.
    pub correlation_random: f64,
    pub distance_random_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferSummary {
    pub ropes: usize,
    pub random_ropes: usize,
    pub mean_correlation_identified: f64,
    pub mean_correlation_random: f64,
    pub mean_distance_identified_cm: f64,
    pub mean_distance_random_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferTable {
    pub random_ropes: usize,
    pub rows: Vec<TransferRow>,
}

impl Table for TransferTable {
    type Summary = TransferSummary;

    fn header(&self) -> &'static [&'static str] {
        &[
            "rope",
            "correlation_identified",
            "distance_identified_cm",
            "correlation_random",
            "distance_random_cm",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.rope.to_string(),
                    r.correlation_identified.to_string(),
                    r.distance_identified_cm.to_string(),
                    r.correlation_random.to_string(),
                    r.distance_random_cm.to_string(),
                ]
            })
            .collect()
    }

    fn summary(&self) -> TransferSummary {
        let col = |f: fn(&TransferRow) -> f64| mean(&self.rows.iter().map(f).collect::<Vec<_>>());
        TransferSummary {
            ropes: self.rows.len(),
            random_ropes: self.random_ropes,
            mean_correlation_identified: col(|r| r.correlation_identified),
            mean_correlation_random: col(|r| r.correlation_random),
            mean_distance_identified_cm: col(|r| r.distance_identified_cm),
            mean_distance_random_cm: col(|r| r.distance_random_cm),
        }
    }
}

fn watch(params: &RopeParams, motion: &BaseMotion, spec: &WiggleSpec, cfg: &TransferConfig) -> Result<TrackedPoints> {
    observe(params, motion, &cfg.camera, &cfg.scene, &cfg.sim, spec.rate, spec.frames)
}

fn matched(track: TrackedPoints, reference: &TrackedPoints) -> Result<TrackedPoints> {
    if track.num_points() == reference.num_points() {
        Ok(track)
    } else {
        track.resample_points(reference.num_points())
    }
}

/// Identifies each held-out rope from motion A, then compares motion B
/// simulated with the identified and the true parameters. Random ropes
/// that stay stable under B form the control.
pub fn transfer_experiment(
    cfg: &TransferConfig,
    identify: impl Fn(&TrackedPoints) -> Result<RopeParams> + Sync,
) -> Result<TransferTable> {
    cfg.bounds.check()?;
    cfg.camera.check()?;
    if cfg.ropes == 0 || cfg.random_ropes == 0 {
        return Err(Error::invalid("transfer needs at least one rope and one control"));
    }
    let motion_a = cfg.motion_a.base_motion(&cfg.arm)?;
    let motion_b = cfg.motion_b.base_motion(&cfg.arm)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let mut controls = Vec::with_capacity(cfg.random_ropes);
    let mut attempts = 0;
    while controls.len() < cfg.random_ropes {
        attempts += 1;
        if attempts > 20 * cfg.random_ropes {
            return Err(Error::Optimization("too few stable random ropes".into()));
        }
        let p = sample_uniform(&cfg.bounds, &mut rng);
        match watch(&p, &motion_b, &cfg.motion_b, cfg) {
            Ok(track) => controls.push(track),
            Err(e) if e.is_divergence() => continue,
            Err(e) => return Err(e),
        }
    }

    let ropes = held_out_ropes(&cfg.bounds, cfg.ropes, cfg.seed);
    let rows = ropes
        .par_iter()
        .enumerate()
        .map(|(rope, truth)| {
            let observed = watch(truth, &motion_a, &cfg.motion_a, cfg)?;
            let identified = identify(&observed)?;
            let reference = watch(truth, &motion_b, &cfg.motion_b, cfg)?;
            let replay = matched(watch(&identified, &motion_b, &cfg.motion_b, cfg)?, &reference)?;
            let mut corr = Vec::with_capacity(controls.len());
            let mut dist = Vec::with_capacity(controls.len());
            for c in &controls {
                let c = matched(c.clone(), &reference)?;
                corr.push(spectral_correlation(&c, &reference)?);
                dist.push(point_distance(&c, &reference, &cfg.camera)?);
            }
            Ok(TransferRow {
                rope,
                truth: *truth,
                identified,
                correlation_identified: spectral_correlation(&replay, &reference)?,
                distance_identified_cm: point_distance(&replay, &reference, &cfg.camera)?,
                correlation_random: mean(&corr),
                distance_random_cm: mean(&dist),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferTable {
        random_ropes: cfg.random_ropes,
        rows,
    })
}
