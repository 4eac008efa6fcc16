use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Table;
use crate::arm::{ArmModel, JointVector, WaypointPlan, HOME};
use crate::error::{Error, Result};
use crate::params::{ParamBounds, RopeParams, NUM_PARAMS, PARAM_NAMES};
use crate::sim::{SceneGeometry, Vec3};
use crate::tasks::{rollout, OptimizeConfig};

/// Back swing, forward whip, return, at the joint velocity limits: a fixed
/// strike-like plan.
pub fn strike_like_plan(arm: &ArmModel) -> Result<WaypointPlan> {
    let offset = |d: [f64; 3]| -> JointVector {
        let mut q = HOME;
        q[1] += d[0];
        q[3] += d[1];
        q[5] += d[2];
        q
    };
    let plan = WaypointPlan {
        q0: HOME,
        waypoints: [offset([-0.45, -0.45, -0.75]), offset([0.45, 0.3, 0.9]), HOME],
        duration: 1.0,
        planar_mask: None,
    };
    plan.check(arm)?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    pub bounds: ParamBounds,
    /// Values per sweep; `num_links` always sweeps every integer in range.
    pub steps: usize,
    /// Default: [`strike_like_plan`].
    pub plan: Option<WaypointPlan>,
    pub settle: f64,
    pub optimize: OptimizeConfig,
    pub scene: SceneGeometry,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            bounds: ParamBounds::default(),
            steps: 11,
            plan: None,
            settle: 0.5,
            optimize: OptimizeConfig::default(),
            scene: SceneGeometry::default(),
        }
    }
}

/// Ropes at mid-range with parameter `k` swept over its bounds, one value
/// at the centre of each of `steps` equal cells.
pub fn sweep(bounds: &ParamBounds, k: usize, steps: usize) -> Result<Vec<RopeParams>> {
    if k >= NUM_PARAMS || steps < 2 {
        return Err(Error::invalid("sweep needs a known parameter and at least two steps"));
    }
    let mid = bounds.midpoint().to_array();
    let b = bounds.get(k);
    let values: Vec<f64> = if k == 0 {
        (b.min.ceil() as usize..=b.max.floor() as usize).map(|n| n as f64).collect()
    } else {
        (0..steps).map(|i| b.min + b.span() * (i as f64 + 0.5) / steps as f64).collect()
    };
    Ok(values
        .into_iter()
        .map(|v| {
            let mut p = mid;
            p[k] = v;
            RopeParams::from_array(p)
        })
        .collect())
}

/// Per-frame standard deviation of the tip position across `ropes`, in cm.
pub fn tip_std_series(
    ropes: &[RopeParams],
    plan: &WaypointPlan,
    scene: &SceneGeometry,
    cfg: &OptimizeConfig,
    settle: f64,
) -> Result<Vec<f64>> {
    let runs = ropes
        .par_iter()
        .map(|p| rollout(p, plan, scene, cfg, settle))
        .collect::<Result<Vec<_>>>()?;
    let frames = runs.iter().map(|r| r.links.num_frames()).min().unwrap_or(0);
    let n = runs.len() as f64;
    Ok((0..frames)
        .map(|t| {
            let tips: Vec<_> = runs.iter().map(|r| r.links.tip(t)).collect();
            let m = tips.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
            let var = tips.iter().map(|p| (p - m).norm_squared()).sum::<f64>() / n;
            100.0 * var.sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub parameter: String,
    pub values: usize,
    pub max_std_cm: f64,
    pub mean_std_cm: f64,
    pub series_cm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub frame_rate: f64,
    pub rows: Vec<SensitivityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivitySummaryRow {
    pub parameter: String,
    pub values: usize,
    pub max_std_cm: f64,
    pub mean_std_cm: f64,
}

impl Table for SensitivityTable {
    type Summary = Vec<SensitivitySummaryRow>;

    fn header(&self) -> &'static [&'static str] {
        &["parameter", "frame", "time_s", "tip_std_cm"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.series_cm.iter().enumerate().map(|(t, s)| {
                    vec![
                        r.parameter.clone(),
                        t.to_string(),
                        (t as f64 / self.frame_rate).to_string(),
                        s.to_string(),
                    ]
                })
            })
            .collect()
    }

    fn summary(&self) -> Vec<SensitivitySummaryRow> {
        self.rows
            .iter()
            .map(|r| SensitivitySummaryRow {
                parameter: r.parameter.clone(),
                values: r.values,
                max_std_cm: r.max_std_cm,
                mean_std_cm: r.mean_std_cm,
            })
            .collect()
    }
}

/// Tip spread under one fixed plan as each parameter sweeps its range.
pub fn single_trajectory_sensitivity(cfg: &SensitivityConfig) -> Result<SensitivityTable> {
    cfg.bounds.check()?;
    let plan = match &cfg.plan {
        Some(p) => p.clone(),
        None => strike_like_plan(&cfg.optimize.arm)?,
    };
    let rows = (0..NUM_PARAMS)
        .map(|k| {
            let ropes = sweep(&cfg.bounds, k, cfg.steps)?;
            let series = tip_std_series(&ropes, &plan, &cfg.scene, &cfg.optimize, cfg.settle)?;
            Ok(SensitivityRow {
                parameter: PARAM_NAMES[k].to_string(),
                values: ropes.len(),
                max_std_cm: series.iter().copied().fold(0.0, f64::max),
                mean_std_cm: super::mean(&series),
                series_cm: series,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityTable {
        frame_rate: cfg.optimize.record_rate,
        rows,
    })
}
