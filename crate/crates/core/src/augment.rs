//! Domain randomization for synthetic observations (camera calibration
//! error, correlated tracking noise, start delays) and the curriculum
//! frame-masking schedule used during training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{CameraModel, FeatureTensor, TrackedPoints};

/// One row of the masking schedule, active from `start_epoch` until the
/// next row starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskStage {
    pub start_epoch: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
    /// Favour block starts near the beginning of the recording.
    pub front_biased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub calib_sigma_m: f64,
    /// Upper end of the per-trajectory longitudinal tracking noise std, px.
    pub track_px_max: f64,
    pub track_alpha: f64,
    /// Lateral std as a fraction of the longitudinal std.
    pub lateral_ratio: f64,
    pub pad_max: usize,
    pub mask_block_len: usize,
    pub mask_schedule: Vec<MaskStage>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            calib_sigma_m: 0.02,
            track_px_max: 3.0,
            track_alpha: 0.8,
            lateral_ratio: 0.5,
            pad_max: 20,
            mask_block_len: 50,
            mask_schedule: vec![
                MaskStage {
                    start_epoch: 50,
                    min_blocks: 1,
                    max_blocks: 2,
                    front_biased: false,
                },
                MaskStage {
                    start_epoch: 200,
                    min_blocks: 1,
                    max_blocks: 2,
                    front_biased: true,
                },
                MaskStage {
                    start_epoch: 400,
                    min_blocks: 7,
                    max_blocks: 7,
                    front_biased: false,
                },
            ],
        }
    }
}

impl AugmentConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.calib_sigma_m >= 0.0
            && self.track_px_max >= 0.0
            && (0.0..1.0).contains(&self.track_alpha)
            && self.lateral_ratio >= 0.0
            && self.mask_block_len > 0;
        if !ok {
            return Err(Error::invalid("augmentation settings out of range"));
        }
        let mut last = None;
        for s in &self.mask_schedule {
            if s.min_blocks > s.max_blocks || last.is_some_and(|e| s.start_epoch <= e) {
                return Err(Error::invalid("mask schedule must be increasing with min <= max blocks"));
            }
            last = Some(s.start_epoch);
        }
        Ok(())
    }

    /// Schedule row in force at `epoch`, if any.
    pub fn mask_stage(&self, epoch: usize) -> Option<&MaskStage> {
        self.mask_schedule.iter().rev().find(|s| epoch >= s.start_epoch)
    }

    /// Stable digest of the settings, for dataset manifests.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(serde_json::to_string(self).expect("plain struct").as_bytes())
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma checked non-negative")
}

/// Perturbs camera position and look-at point independently per coordinate.
pub fn calibration_noise(camera: &CameraModel, sigma: f64, seed: u64) -> CameraModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gaussian(sigma.max(0.0));
    let mut out = camera.clone();
    for v in out.position.iter_mut().chain(out.lookat.iter_mut()) {
        *v += n.sample(&mut rng);
    }
    out
}

/// Adds AR(1) tracking noise with a longitudinal std drawn uniformly from
/// `[0, track_px_max]` for the whole trajectory.
pub fn tracking_noise(tracked: &TrackedPoints, cfg: &AugmentConfig, seed: u64) -> TrackedPoints {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = rng.random::<f64>() * cfg.track_px_max;
    tracking_noise_with(tracked, std, cfg, rng.random())
}

/// Tracking noise with a fixed longitudinal std in pixels.
///
/// Each point carries a noise state `n_t = α n_{t−1} + ε_t` expressed in
/// the local segment frame (along / across the rope), started from its
/// stationary distribution and rotated into the image every frame.
pub fn tracking_noise_with(tracked: &TrackedPoints, long_std: f64, cfg: &AugmentConfig, seed: u64) -> TrackedPoints {
    let mut out = tracked.clone();
    if long_std <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = cfg.track_alpha;
    let n_long = gaussian(long_std);
    let n_lat = gaussian(long_std * cfg.lateral_ratio);
    let stationary = 1.0 / (1.0 - alpha * alpha).sqrt();
    let np = tracked.num_points();
    let mut state = vec![[0.0f64; 2]; np];
    for s in &mut state {
        *s = [n_long.sample(&mut rng) * stationary, n_lat.sample(&mut rng) * stationary];
    }
    for t in 0..tracked.num_frames() {
        let frame = tracked.frame(t);
        let dirs: Vec<[f64; 2]> = (0..np)
            .map(|i| {
                let (a, b) = if i == 0 { (0, 1) } else { (i - 1, i) };
                let d = [frame[b][0] - frame[a][0], frame[b][1] - frame[a][1]];
                let len = d[0].hypot(d[1]);
                if len > 1e-12 {
                    [d[0] / len, d[1] / len]
                } else {
                    [1.0, 0.0]
                }
            })
            .collect();
        let row = &mut out.data_mut()[t * np..(t + 1) * np];
        for i in 0..np {
            if t > 0 {
                state[i][0] = alpha * state[i][0] + n_long.sample(&mut rng);
                state[i][1] = alpha * state[i][1] + n_lat.sample(&mut rng);
            }
            let [l, c] = state[i];
            let [dx, dy] = dirs[i];
            row[i][0] += l * dx - c * dy;
            row[i][1] += l * dy + c * dx;
        }
    }
    out
}

/// Prepends `k` copies of frame 0.
pub fn pad_start_by(tracked: &TrackedPoints, k: usize, t_max: usize) -> Result<TrackedPoints> {
    if tracked.num_frames() + k > t_max {
        return Err(Error::Shape {
            expected: format!("at most {t_max} frames"),
            actual: format!("{} after padding", tracked.num_frames() + k),
        });
    }
    let first = tracked.frame(0);
    let mut data = Vec::with_capacity((tracked.num_frames() + k) * tracked.num_points());
    for _ in 0..k {
        data.extend_from_slice(first);
    }
    data.extend_from_slice(tracked.data());
    TrackedPoints::new(tracked.num_points(), tracked.frame_rate(), data)
}

/// Prepends a uniformly random number of copies of frame 0 in `0..=pad_max`.
pub fn pad_start(tracked: &TrackedPoints, cfg: &AugmentConfig, t_max: usize, seed: u64) -> Result<TrackedPoints> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(0..=cfg.pad_max);
    pad_start_by(tracked, k, t_max)
}

/// Start frames of the blocks masked at `epoch`.
pub fn mask_blocks(t_max: usize, epoch: usize, cfg: &AugmentConfig, seed: u64) -> Vec<usize> {
    let Some(stage) = cfg.mask_stage(epoch) else {
        return Vec::new();
    };
    let len = cfg.mask_block_len.min(t_max);
    let last_start = t_max - len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(stage.min_blocks..=stage.max_blocks);
    if stage.front_biased {
        let weights = (0..=last_start).map(|s| (t_max - s) as f64);
        let dist = WeightedIndex::new(weights).expect("positive weights");
        (0..count).map(|_| dist.sample(&mut rng)).collect()
    } else {
        (0..count).map(|_| rng.random_range(0..=last_start)).collect()
    }
}

/// Zeroes the blocks chosen by the schedule for `epoch` across all channels.
pub fn curriculum_mask(features: &FeatureTensor, epoch: usize, cfg: &AugmentConfig, seed: u64) -> FeatureTensor {
    let starts = mask_blocks(features.t_max(), epoch, cfg, seed);
    let mut out = features.clone();
    let len = cfg.mask_block_len.min(features.t_max());
    for s in starts {
        out.zero_frames(s..s + len);
    }
    out
}
