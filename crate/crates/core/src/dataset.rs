//! Synthetic wiggle datasets: LHS ropes, simulated and projected wiggles,
//! domain randomization, feature files and a self-validating manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::augment::{calibration_noise, pad_start, tracking_noise, AugmentConfig};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::nn::TrainSet;
use crate::observation::{extract_features, project, CameraModel, FeatureLayout, FeatureTensor, PointSampling, TrackedPoints};
use crate::params::{normalize, sample_lhs, ParamBounds, RopeParams, NUM_PARAMS};
use crate::seeds::derive_seed;
use crate::sim::{simulate, BaseMotion, SceneGeometry, SimConfig};
use crate::wiggle::WiggleSpec;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Share of divergent samples above which the manifest carries a warning.
const DIVERGENCE_WARN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub bounds: ParamBounds,
    pub count: usize,
    pub wiggle: WiggleSpec,
    pub camera: CameraModel,
    pub augment: AugmentConfig,
    /// Calibration noise, tracking noise and start padding.
    pub domain_randomization: bool,
    pub layout: FeatureLayout,
    pub sim: SimConfig,
    pub scene: SceneGeometry,
    pub arm: ArmModel,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            bounds: ParamBounds::default(),
            count: 1000,
            wiggle: WiggleSpec::default(),
            camera: CameraModel::default(),
            augment: AugmentConfig::default(),
            domain_randomization: true,
            layout: FeatureLayout::default(),
            sim: SimConfig::default(),
            scene: SceneGeometry::default(),
            arm: ArmModel::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn check(&self) -> Result<()> {
        self.bounds.check()?;
        self.wiggle.check()?;
        self.camera.check()?;
        self.augment.check()?;
        self.sim.check()?;
        self.arm.check()?;
        let longest = self.wiggle.frames + if self.domain_randomization { self.augment.pad_max } else { 0 };
        if longest > self.layout.t_max {
            return Err(Error::invalid(format!(
                "wiggle of {longest} frames does not fit a {}-frame layout",
                self.layout.t_max
            )));
        }
        Ok(())
    }
}

/// Observation of one rope as the tracker would report it.
pub fn observe_sample(
    params: &RopeParams,
    motion: &BaseMotion,
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<TrackedPoints> {
    let traj = simulate(params, motion, &cfg.scene, &cfg.sim, cfg.wiggle.rate, cfg.wiggle.frames)?;
    let camera = if cfg.domain_randomization {
        calibration_noise(&cfg.camera, cfg.augment.calib_sigma_m, derive_seed(seed, &[1]))
    } else {
        cfg.camera.clone()
    };
    let mut tracked = project(&camera, &traj)?;
    if cfg.layout.sampling == PointSampling::Resample {
        tracked = tracked.resample_points(cfg.layout.points)?;
    }
    if cfg.domain_randomization {
        tracked = tracking_noise(&tracked, &cfg.augment, derive_seed(seed, &[2]));
        tracked = pad_start(&tracked, &cfg.augment, cfg.layout.t_max, derive_seed(seed, &[3]))?;
    }
    Ok(tracked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub params: RopeParams,
    pub targets: [f64; NUM_PARAMS],
    pub features: FeatureTensor,
}

/// Outcome of generating every requested rope.
#[derive(Debug, Clone, Default)]
pub struct Generated {
    pub samples: Vec<Sample>,
    /// Ropes whose simulation diverged, with their parameters.
    pub diverged: Vec<(usize, RopeParams)>,
}

impl Generated {
    pub fn train_set(&self) -> TrainSet {
        let mut set = TrainSet::default();
        for s in &self.samples {
            set.push(s.features.clone(), s.targets.to_vec());
        }
        set
    }
}

/// Ropes sampled for `cfg`, in index order.
pub fn sample_ropes(cfg: &DatasetConfig) -> Vec<RopeParams> {
    sample_lhs(cfg.count, &cfg.bounds, derive_seed(cfg.seed, &[0]))
}

/// Generates features for explicit ropes.
pub fn generate_for(cfg: &DatasetConfig, ropes: &[RopeParams]) -> Result<Generated> {
    cfg.check()?;
    let motion = cfg.wiggle.base_motion(&cfg.arm)?;
    let results: Vec<Result<std::result::Result<Sample, RopeParams>>> = ropes
        .par_iter()
        .enumerate()
        .map(|(index, params)| {
            let seed = derive_seed(cfg.seed, &[1, index as u64]);
            let tracked = match observe_sample(params, &motion, cfg, seed) {
                Ok(t) => t,
                Err(e) if e.is_divergence() => return Ok(Err(*params)),
                Err(e) => return Err(e),
            };
            Ok(Ok(Sample {
                index,
                params: *params,
                targets: normalize(params, &cfg.bounds)?.values,
                features: extract_features(&tracked, &cfg.layout)?,
            }))
        })
        .collect();
    let mut out = Generated::default();
    for (index, r) in results.into_iter().enumerate() {
        match r? {
            Ok(s) => out.samples.push(s),
            Err(p) => out.diverged.push((index, p)),
        }
    }
    Ok(out)
}

/// LHS ropes, simulated and observed.
pub fn generate(cfg: &DatasetConfig) -> Result<Generated> {
    generate_for(cfg, &sample_ropes(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    /// Relative to the manifest directory.
    pub file: String,
    pub sha256: String,
    pub params: RopeParams,
    pub targets: [f64; NUM_PARAMS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedEntry {
    pub index: usize,
    pub params: RopeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub bounds: ParamBounds,
    pub count: usize,
    pub wiggle: WiggleSpec,
    pub camera: CameraModel,
    pub augment: AugmentConfig,
    pub augment_digest: String,
    pub domain_randomization: bool,
    pub layout: FeatureLayout,
    pub seed: u64,
    pub samples: Vec<SampleEntry>,
    pub diverged: Vec<DivergedEntry>,
    pub warnings: Vec<String>,
}

fn sample_path(index: usize) -> String {
    format!("samples/{index:06}.wagf")
}

/// Generates the dataset into `out_dir`: one `WAGF` file per rope plus
/// `manifest.json`, written last.
pub fn write_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let generated = generate(cfg)?;
    fs::create_dir_all(out_dir.join("samples"))?;
    let samples = generated
        .samples
        .par_iter()
        .map(|s| {
            let mut bytes = Vec::new();
            s.features.write(&mut bytes)?;
            let file = sample_path(s.index);
            fs::write(out_dir.join(&file), &bytes)?;
            Ok(SampleEntry {
                index: s.index,
                file,
                sha256: sha256_hex(&bytes),
                params: s.params,
                targets: s.targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let share = generated.diverged.len() as f64 / cfg.count.max(1) as f64;
    if share > DIVERGENCE_WARN {
        warnings.push(format!(
            "{} of {} samples diverged ({:.1} %)",
            generated.diverged.len(),
            cfg.count,
            100.0 * share
        ));
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        bounds: cfg.bounds.clone(),
        count: cfg.count,
        wiggle: cfg.wiggle.clone(),
        camera: cfg.camera.clone(),
        augment: cfg.augment.clone(),
        augment_digest: cfg.augment.digest(),
        domain_randomization: cfg.domain_randomization,
        layout: cfg.layout,
        seed: cfg.seed,
        samples,
        diverged: generated
            .diverged
            .iter()
            .map(|(index, params)| DivergedEntry {
                index: *index,
                params: *params,
            })
            .collect(),
        warnings,
    };
    let mut w = BufWriter::new(fs::File::create(out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(manifest)
}

impl DatasetManifest {
    /// Reads `manifest.json` from a dataset directory (or the file itself).
    pub fn load(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
        let (file, dir) = if path.is_dir() {
            (path.join(MANIFEST_FILE), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(&file)?)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format("dataset manifest", "unsupported format version"));
        }
        Ok((manifest, dir))
    }

    /// Reads every sample, checking its digest and layout.
    pub fn read_samples(&self, dir: &Path) -> Result<TrainSet> {
        let features = self
            .samples
            .par_iter()
            .map(|e| {
                if e.file.contains("..") || Path::new(&e.file).is_absolute() {
                    return Err(Error::format("dataset manifest", format!("bad sample path {}", e.file)));
                }
                let bytes = fs::read(dir.join(&e.file))?;
                if sha256_hex(&bytes) != e.sha256 {
                    return Err(Error::format("dataset manifest", format!("digest mismatch for {}", e.file)));
                }
                let f = FeatureTensor::read(bytes.as_slice())?;
                if f.layout() != &self.layout {
                    return Err(Error::format("dataset manifest", format!("layout mismatch in {}", e.file)));
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainSet {
            features,
            targets: self.samples.iter().map(|e| e.targets.to_vec()).collect(),
        })
    }
}

/// Loads a dataset directory into memory.
pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, TrainSet)> {
    let (manifest, dir) = DatasetManifest::load(path)?;
    let set = manifest.read_samples(&dir)?;
    Ok((manifest, set))
}
