use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{held_out_ropes, mean, median, std_dev, Table};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::observation::TrackedPoints;
use crate::params::{idx, sample_uniform, RopeParams, NUM_PARAMS};
use crate::pipeline::{plan_and_execute, run_pipeline, Method, PipelineConfig, RopeSource};
use crate::seeds::derive_seed;
use crate::sysid::observe;

/// Rope the ablation plans are executed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The regressor's prediction for the held-out rope.
    #[default]
    Predicted,
    /// The held-out rope itself.
    GroundTruth,
}

/// Parameters kept from the reference; the rest are drawn at random.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportanceCondition {
    pub name: String,
    pub keep: Vec<usize>,
}

impl ImportanceCondition {
    pub fn new(name: &str, keep: &[usize]) -> Self {
        ImportanceCondition {
            name: name.into(),
            keep: keep.to_vec(),
        }
    }

    /// Full prediction; length and lead mass; length; lead mass; nothing.
    pub fn standard() -> Vec<ImportanceCondition> {
        vec![
            ImportanceCondition::new("full", &(0..NUM_PARAMS).collect::<Vec<_>>()),
            ImportanceCondition::new("length_and_lead_mass", &[idx::ROPE_LENGTH, idx::LEAD_MASS]),
            ImportanceCondition::new("length", &[idx::ROPE_LENGTH]),
            ImportanceCondition::new("lead_mass", &[idx::LEAD_MASS]),
            ImportanceCondition::new("random", &[]),
        ]
    }

    fn keeps_all(&self) -> bool {
        (0..NUM_PARAMS).all(|k| self.keep.contains(&k))
    }

    /// `reference` with the unkept parameters taken from `random`.
    pub fn mix(&self, reference: &RopeParams, random: &RopeParams) -> RopeParams {
        let (r, x) = (reference.to_array(), random.to_array());
        let mut v = x;
        for &k in &self.keep {
            v[k] = r[k];
        }
        RopeParams::from_array(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub pipeline: PipelineConfig,
    pub conditions: Vec<ImportanceCondition>,
    /// Held-out ropes.
    pub configs: usize,
    pub draws: usize,
    pub reference: Reference,
    pub seed: u64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            pipeline: PipelineConfig::default(),
            conditions: ImportanceCondition::standard(),
            configs: 10,
            draws: 5,
            reference: Reference::Predicted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRun {
    pub config: usize,
    pub condition: String,
    pub draw: usize,
    pub planned_on: RopeParams,
    pub error_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub condition: String,
    pub mean_cm: f64,
    pub std_cm: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceTable {
    pub runs: Vec<ImportanceRun>,
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceTable {
    pub fn row(&self, condition: &str) -> Option<&ImportanceRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }
}

impl Table for ImportanceTable {
    type Summary = Vec<ImportanceRow>;

    fn header(&self) -> &'static [&'static str] {
        &["condition", "mean_cm", "std_cm", "runs"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![r.condition.clone(), r.mean_cm.to_string(), r.std_cm.to_string(), r.runs.to_string()])
            .collect()
    }

    fn summary(&self) -> Vec<ImportanceRow> {
        self.rows.clone()
    }
}

fn identify_held_out(
    cfg: &PipelineConfig,
    ropes: &[RopeParams],
    identify: &(impl Fn(&TrackedPoints) -> Result<RopeParams> + Sync),
) -> Result<Vec<RopeParams>> {
    let motion = cfg.wiggle.base_motion(&cfg.arm)?;
    ropes
        .par_iter()
        .map(|p| {
            let t = observe(p, &motion, &cfg.camera, &cfg.scene, &cfg.fit.sim, cfg.wiggle.rate, cfg.wiggle.frames)
                .map_err(|e| e.in_stage("observe"))?;
            identify(&t).map_err(|e| e.in_stage("identify"))
        })
        .collect()
}

/// Strike error when some predicted parameters are replaced by random
/// draws. Every plan is optimized on the mixed rope and executed on the
/// reference rope; all conditions of one held-out rope share the optimizer
/// seed and the random draws.
pub fn importance_ablation(
    cfg: &ImportanceConfig,
    identify: impl Fn(&TrackedPoints) -> Result<RopeParams> + Sync,
) -> Result<ImportanceTable> {
    let p = &cfg.pipeline;
    p.bounds.check()?;
    if cfg.configs == 0 || cfg.draws == 0 || cfg.conditions.is_empty() {
        return Err(Error::invalid("ablation needs configurations, draws and conditions"));
    }
    if cfg.conditions.iter().flat_map(|c| &c.keep).any(|&k| k >= NUM_PARAMS) {
        return Err(Error::invalid("condition keeps an unknown parameter"));
    }
    let truths = held_out_ropes(&p.bounds, cfg.configs, cfg.seed);
    let predicted = identify_held_out(p, &truths, &identify)?;
    let references: Vec<RopeParams> = match cfg.reference {
        Reference::Predicted => predicted.clone(),
        Reference::GroundTruth => truths.clone(),
    };

    let mut jobs = Vec::new();
    for config in 0..cfg.configs {
        for (c, cond) in cfg.conditions.iter().enumerate() {
            let draws = if cond.keeps_all() { 1 } else { cfg.draws };
            for draw in 0..draws {
                jobs.push((config, c, draw));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(config, c, draw)| {
            let cond = &cfg.conditions[c];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3, config as u64, draw as u64]));
            let random = sample_uniform(&p.bounds, &mut rng);
            let planned_on = cond.mix(&predicted[config], &random);
            let seed = derive_seed(cfg.seed, &[2, config as u64]);
            let a = plan_and_execute(&planned_on, Some(&references[config]), &p.task, &p.optimize, seed)?;
            Ok(ImportanceRun {
                config,
                condition: cond.name.clone(),
                draw,
                planned_on,
                error_cm: 100.0 * a.executed.expect("reference given").metric,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = cfg
        .conditions
        .iter()
        .map(|cond| {
            let e: Vec<f64> = runs.iter().filter(|r| r.condition == cond.name).map(|r| r.error_cm).collect();
            ImportanceRow {
                condition: cond.name.clone(),
                mean_cm: mean(&e),
                std_cm: std_dev(&e),
                runs: e.len(),
            }
        })
        .collect();
    Ok(ImportanceTable { runs, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullPipelineConfig {
    pub pipeline: PipelineConfig,
    pub ropes: usize,
    pub method: Method,
    pub seed: u64,
}

impl Default for FullPipelineConfig {
    fn default() -> Self {
        FullPipelineConfig {
            pipeline: PipelineConfig::default(),
            ropes: 30,
            method: Method::Nn,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullPipelineRow {
    pub rope: usize,
    pub truth: RopeParams,
    pub predicted: RopeParams,
    pub random: RopeParams,
    pub ground_truth_cm: f64,
    pub predicted_cm: f64,
    pub random_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullPipelineSummary {
    pub ropes: usize,
    pub median_ground_truth_cm: f64,
    pub median_predicted_cm: f64,
    pub median_random_cm: f64,
    pub mean_ground_truth_cm: f64,
    pub mean_predicted_cm: f64,
    pub mean_random_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullPipelineTable {
    pub rows: Vec<FullPipelineRow>,
}

impl Table for FullPipelineTable {
    type Summary = FullPipelineSummary;

    fn header(&self) -> &'static [&'static str] {
        &["rope", "ground_truth_cm", "predicted_cm", "random_cm"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.rope.to_string(),
                    r.ground_truth_cm.to_string(),
                    r.predicted_cm.to_string(),
                    r.random_cm.to_string(),
                ]
            })
            .collect()
    }

    fn summary(&self) -> FullPipelineSummary {
        let col = |f: fn(&FullPipelineRow) -> f64| self.rows.iter().map(f).collect::<Vec<_>>();
        FullPipelineSummary {
            ropes: self.rows.len(),
            median_ground_truth_cm: median(&col(|r| r.ground_truth_cm)),
            median_predicted_cm: median(&col(|r| r.predicted_cm)),
            median_random_cm: median(&col(|r| r.random_cm)),
            mean_ground_truth_cm: mean(&col(|r| r.ground_truth_cm)),
            mean_predicted_cm: mean(&col(|r| r.predicted_cm)),
            mean_random_cm: mean(&col(|r| r.random_cm)),
        }
    }
}

/// Strike error on held-out ropes when planning on the true rope, on the
/// identified rope, and on a random in-distribution rope. Plans are always
/// executed on the true rope. The first two arms are [`run_pipeline`] runs
/// with the oracle and the configured method.
pub fn full_pipeline_experiment(cfg: &FullPipelineConfig, network: Option<&Network>) -> Result<FullPipelineTable> {
    let p = &cfg.pipeline;
    p.bounds.check()?;
    if cfg.method == Method::Oracle {
        return Err(Error::invalid("the identified arm needs a real identification method"));
    }
    let truths = held_out_ropes(&p.bounds, cfg.ropes, cfg.seed);
    let rows = truths
        .par_iter()
        .enumerate()
        .map(|(rope, truth)| {
            let seed = derive_seed(cfg.seed, &[rope as u64]);
            let source = RopeSource::Simulated {
                id: format!("rope{rope}"),
                params: *truth,
            };
            let gt = run_pipeline(&source, Method::Oracle, None, p, seed)?;
            let id = run_pipeline(&source, cfg.method, network, p, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, rope as u64]));
            let random = sample_uniform(&p.bounds, &mut rng);
            let r = plan_and_execute(&random, Some(truth), &p.task, &p.optimize, seed)?;
            Ok(FullPipelineRow {
                rope,
                truth: *truth,
                predicted: id.predicted_params,
                random,
                ground_truth_cm: 100.0 * gt.final_metric,
                predicted_cm: 100.0 * id.final_metric,
                random_cm: 100.0 * r.executed.expect("truth given").metric,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FullPipelineTable { rows })
}
