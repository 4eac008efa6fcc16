//! Wiggle, identify, plan, execute: the full adaptation loop on one rope.

use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, WaypointPlan};
use crate::cmaes::HistoryRow;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::observation::{CameraModel, TrackedPoints};
use crate::params::{ParamBounds, RopeParams};
use crate::seeds::derive_seed;
use crate::sim::SceneGeometry;
use crate::sysid::{identify_cmaes, identify_nn, observe, FitConfig};
use crate::tasks::{execute, optimize_trajectory, OptimizeConfig, OptimizeResult, TaskKind, TaskScore, TaskSpec};
use crate::wiggle::WiggleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nn,
    Cmaes,
    /// Uses the true parameters. Needs a known rope.
    Oracle,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Method::Nn),
            "cmaes" => Ok(Method::Cmaes),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Nn => "nn",
            Method::Cmaes => "cmaes",
            Method::Oracle => "oracle",
        })
    }
}

/// Where the wiggle observation comes from.
#[derive(Debug, Clone)]
pub enum RopeSource {
    /// Known rope; its wiggle is simulated and projected.
    Simulated { id: String, params: RopeParams },
    /// Externally tracked wiggle, optionally with the true rope for scoring.
    Tracked {
        id: String,
        tracked: TrackedPoints,
        truth: Option<RopeParams>,
    },
}

impl RopeSource {
    pub fn id(&self) -> &str {
        match self {
            RopeSource::Simulated { id, .. } | RopeSource::Tracked { id, .. } => id,
        }
    }

    pub fn truth(&self) -> Option<&RopeParams> {
        match self {
            RopeSource::Simulated { params, .. } => Some(params),
            RopeSource::Tracked { truth, .. } => truth.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub bounds: ParamBounds,
    pub wiggle: WiggleSpec,
    pub camera: CameraModel,
    pub scene: SceneGeometry,
    pub arm: ArmModel,
    pub fit: FitConfig,
    pub optimize: OptimizeConfig,
    pub task: TaskSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bounds: ParamBounds::default(),
            wiggle: WiggleSpec::default(),
            camera: CameraModel::default(),
            scene: SceneGeometry::default(),
            arm: ArmModel::default(),
            fit: FitConfig::default(),
            optimize: OptimizeConfig::default(),
            task: TaskSpec::example(TaskKind::Strike),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunRecord {
    pub rope_id: String,
    pub method: Method,
    pub seed: u64,
    pub true_params: Option<RopeParams>,
    pub predicted_params: RopeParams,
    /// CMA-ES identification history; empty for the other methods.
    pub identify_history: Vec<HistoryRow>,
    pub task: TaskSpec,
    pub plan: WaypointPlan,
    pub cost_history: Vec<HistoryRow>,
    /// Plan scored on the predicted rope.
    pub planned: TaskScore,
    /// Plan executed on the true rope, when known.
    pub executed: Option<TaskScore>,
    /// Executed metric when the true rope is known, planned metric otherwise. Metres.
    pub final_metric: f64,
}

/// Plan optimized on one rope and executed on another.
#[derive(Debug, Clone)]
pub struct Adaptation {
    pub plan: OptimizeResult,
    pub planned: TaskScore,
    pub executed: Option<TaskScore>,
}

/// Optimizes a plan for `predicted` and executes it on both ropes.
/// Uses the same optimizer seed as [`run_pipeline`] for `seed`.
pub fn plan_and_execute(
    predicted: &RopeParams,
    truth: Option<&RopeParams>,
    task: &TaskSpec,
    cfg: &OptimizeConfig,
    seed: u64,
) -> Result<Adaptation> {
    let plan = optimize_trajectory(predicted, task, cfg, derive_seed(seed, &[2])).map_err(|e| e.in_stage("optimize"))?;
    let planned = execute(predicted, &plan.plan, task, cfg).map_err(|e| e.in_stage("execute"))?;
    let executed = truth
        .map(|p| execute(p, &plan.plan, task, cfg))
        .transpose()
        .map_err(|e| e.in_stage("execute"))?;
    Ok(Adaptation {
        plan,
        planned,
        executed,
    })
}

/// Runs the adaptation loop once. Errors carry the failing stage.
pub fn run_pipeline(
    source: &RopeSource,
    method: Method,
    network: Option<&Network>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineRunRecord> {
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);
    let truth = source.truth().copied();
    let motion = cfg.wiggle.base_motion(&cfg.arm).map_err(stage("wiggle"))?;
    let tracked = match source {
        RopeSource::Simulated { params, .. } => match method {
            Method::Oracle => None,
            _ => Some(
                observe(
                    params,
                    &motion,
                    &cfg.camera,
                    &cfg.scene,
                    &cfg.fit.sim,
                    cfg.wiggle.rate,
                    cfg.wiggle.frames,
                )
                .map_err(stage("observe"))?,
            ),
        },
        RopeSource::Tracked { tracked, .. } => Some(tracked.clone()),
    };
    let (predicted, identify_history) = match method {
        Method::Oracle => (
            truth.ok_or_else(|| Error::invalid("oracle method needs the true rope").in_stage("identify"))?,
            Vec::new(),
        ),
        Method::Nn => {
            let net = network.ok_or_else(|| Error::invalid("nn method needs trained weights").in_stage("identify"))?;
            let t = tracked.as_ref().expect("observed");
            (identify_nn(net, t, &cfg.bounds).map_err(stage("identify"))?, Vec::new())
        }
        Method::Cmaes => {
            let mut fit = cfg.fit.clone();
            fit.cmaes.seed = derive_seed(seed, &[1]);
            let t = tracked.as_ref().expect("observed");
            let r = identify_cmaes(t, &motion, &cfg.camera, &cfg.bounds, &fit).map_err(stage("identify"))?;
            (r.params, r.history)
        }
    };
    let Adaptation {
        plan,
        planned,
        executed,
    } = plan_and_execute(&predicted, truth.as_ref(), &cfg.task, &cfg.optimize, seed)?;
    Ok(PipelineRunRecord {
        rope_id: source.id().to_string(),
        method,
        seed,
        true_params: truth,
        predicted_params: predicted,
        identify_history,
        task: cfg.task.clone(),
        cost_history: plan.history,
        plan: plan.plan,
        planned,
        executed,
        final_metric: executed.map_or(planned.metric, |s| s.metric),
    })
}
