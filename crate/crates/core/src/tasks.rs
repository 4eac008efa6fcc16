//! Task costs for pole striking, lobbing and draping, and CMA-ES search over
//! joint-space waypoint plans.

use serde::{Deserialize, Serialize};

use crate::arm::{
    enforce_velocity_limits, forward_kinematics, spline_plan, to_base_motion, ArmModel, JointTrajectory,
    JointVector, WaypointPlan, DEFAULT_PLAN_DURATION, HOME, NUM_JOINTS, PLANAR_JOINTS,
};
use crate::cmaes::{minimize, CmaesConfig, HistoryRow};
use crate::error::{Error, Result};
use crate::params::RopeParams;
use crate::sim::{simulate, tip_distance_profile, Aabb, BasePose, LinkTrajectory, SceneGeometry, SimConfig, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Strike,
    Lob,
    Drape,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strike" => Ok(TaskKind::Strike),
            "lob" => Ok(TaskKind::Lob),
            "drape" => Ok(TaskKind::Drape),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Strike => "strike",
            TaskKind::Lob => "lob",
            TaskKind::Drape => "drape",
        })
    }
}

/// Geometry and success thresholds of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Strike pole point or lob landing point.
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub wall: Option<Aabb>,
    #[serde(default)]
    pub wall_top: Option<[f64; 3]>,
    /// How far below the wall top the tip should hang, m.
    #[serde(default = "default_drop")]
    pub drop_m: f64,
    #[serde(default)]
    pub board: Option<Aabb>,
    /// Region the tip must cross fast enough to topple the domino.
    #[serde(default)]
    pub domino: Option<Aabb>,
    #[serde(default)]
    pub keep_out: Vec<Aabb>,
    #[serde(default)]
    pub success: SuccessThresholds,
}

fn default_drop() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessThresholds {
    pub strike_m: f64,
    pub drape_m: f64,
    pub domino_speed: f64,
}

impl Default for SuccessThresholds {
    fn default() -> Self {
        SuccessThresholds {
            strike_m: 0.05,
            drape_m: 0.05,
            domino_speed: 0.5,
        }
    }
}

/// Overhead keep-out slab used by the example lob and drape scenes.
fn ceiling() -> Aabb {
    Aabb {
        min: [-1.0, 1.75, -1.0],
        max: [2.0, 2.0, 1.0],
    }
}

impl TaskSpec {
    pub fn strike(target: [f64; 3]) -> Self {
        TaskSpec {
            kind: TaskKind::Strike,
            target: Some(target),
            wall: None,
            wall_top: None,
            drop_m: default_drop(),
            board: None,
            domino: None,
            keep_out: Vec::new(),
            success: SuccessThresholds::default(),
        }
    }

    /// Example scene for each task.
    pub fn example(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Strike => TaskSpec::strike([0.95, 0.4, 0.3]),
            TaskKind::Lob => TaskSpec {
                kind,
                target: Some([1.0, 0.32, 0.0]),
                board: Some(Aabb {
                    min: [0.9, 0.0, -0.2],
                    max: [1.3, 0.3, 0.2],
                }),
                domino: Some(Aabb {
                    min: [0.95, 0.3, -0.05],
                    max: [1.05, 0.4, 0.05],
                }),
                keep_out: vec![ceiling()],
                ..TaskSpec::strike([0.0; 3])
            },
            TaskKind::Drape => TaskSpec {
                kind,
                target: None,
                wall: Some(Aabb {
                    min: [0.85, 0.0, -0.5],
                    max: [0.9, 0.7, 0.5],
                }),
                wall_top: Some([0.875, 0.7, 0.0]),
                keep_out: vec![ceiling()],
                ..TaskSpec::strike([0.0; 3])
            },
        }
    }

    pub fn check(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("{} task needs {what}", self.kind)))
            }
        };
        match self.kind {
            TaskKind::Strike => need(self.target.is_some(), "a target")?,
            TaskKind::Lob => need(self.target.is_some() && self.board.is_some(), "a target and a board")?,
            TaskKind::Drape => need(self.wall.is_some() && self.wall_top.is_some(), "a wall and its top point")?,
        }
        let points = self.target.iter().chain(&self.wall_top);
        if points.flatten().any(|v| !v.is_finite()) || !self.drop_m.is_finite() {
            return Err(Error::NonFinite("task geometry"));
        }
        for b in self.wall.iter().chain(&self.board).chain(&self.domino).chain(&self.keep_out) {
            b.check()?;
        }
        Ok(())
    }

    /// Solid surfaces and scored regions as a simulator scene.
    pub fn scene(&self) -> SceneGeometry {
        SceneGeometry {
            ground_height: Some(0.0),
            target: self.target,
            wall: self.wall,
            board: self.board,
            keep_out: self.keep_out.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Distance that unlocks the later stages, m.
    pub stage_threshold: f64,
    pub stay_weight: f64,
    pub forward_weight: f64,
    pub drop_weight: f64,
    /// Cap on the rewarded tip travel beyond the wall, m.
    pub forward_cap: f64,
    pub collision_penalty: f64,
    /// Per metre of clearance violation.
    pub keep_out_weight: f64,
    pub clearance: f64,
    /// Per unit of time scaling beyond `max_time_scale`.
    pub velocity_weight: f64,
    pub max_time_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            stage_threshold: 0.05,
            stay_weight: 0.5,
            forward_weight: 0.5,
            drop_weight: 0.5,
            forward_cap: 0.3,
            collision_penalty: 1e3,
            keep_out_weight: 10.0,
            clearance: 0.05,
            velocity_weight: 1.0,
            max_time_scale: 2.0,
        }
    }
}

impl RewardConfig {
    pub fn check(&self) -> Result<()> {
        let all = [
            self.stage_threshold,
            self.stay_weight,
            self.forward_weight,
            self.drop_weight,
            self.forward_cap,
            self.collision_penalty,
            self.keep_out_weight,
            self.clearance,
            self.velocity_weight,
            self.max_time_scale,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("reward weights and thresholds must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Pole of the arm in one recorded frame: flange to tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolSegment {
    pub flange: Vec3,
    pub tip: Vec3,
}

/// Minimum over frames of the tip-to-target distance.
pub fn strike_cost(traj: &LinkTrajectory, target: &Vec3) -> f64 {
    tip_distance_profile(traj, target).min
}

/// Reach the target, then stay there.
pub fn lob_cost(traj: &LinkTrajectory, target: &Vec3, cfg: &RewardConfig) -> f64 {
    let d = tip_distance_profile(traj, target);
    let after = &d.series[d.argmin + 1..];
    let stay = if d.min < cfg.stage_threshold && !after.is_empty() {
        after.iter().sum::<f64>() / after.len() as f64
    } else {
        0.0
    };
    d.min + cfg.stay_weight * stay
}

/// Terms of the staged draping cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrapeTerms {
    pub reach: f64,
    /// Negative reward for tip travel beyond the wall; 0 when gated off.
    pub forward: f64,
    /// Final hang error plus final reach; 0 when gated off.
    pub settle: f64,
}

/// Horizontal unit vector from the rope root at frame 0 towards `point`.
fn outward(traj: &LinkTrajectory, point: &Vec3) -> Vec3 {
    let root = traj.frame(0)[0];
    let d = Vec3::new(point.x - root.x, 0.0, point.z - root.z);
    if d.norm() > 1e-12 {
        d.normalize()
    } else {
        Vec3::x()
    }
}

pub fn drape_terms(traj: &LinkTrajectory, wall_top: &Vec3, drop: f64, cfg: &RewardConfig) -> DrapeTerms {
    let mid = (traj.num_links() - 1) / 2;
    let reach = traj
        .frames()
        .map(|f| (f[mid] - wall_top).norm())
        .fold(f64::INFINITY, f64::min);
    let mut terms = DrapeTerms {
        reach,
        forward: 0.0,
        settle: 0.0,
    };
    if reach >= cfg.stage_threshold {
        return terms;
    }
    let n = outward(traj, wall_top);
    let beyond = (0..traj.num_frames())
        .map(|t| (traj.tip(t) - wall_top).dot(&n))
        .fold(f64::NEG_INFINITY, f64::max);
    terms.forward = -beyond.clamp(0.0, cfg.forward_cap);
    if beyond > 0.0 {
        let last = traj.num_frames() - 1;
        let hang = (traj.tip(last).y - (wall_top.y - drop)).max(0.0);
        terms.settle = hang + (traj.frame(last)[mid] - wall_top).norm();
    }
    terms
}

/// Middle link over the wall top, tip forward, then tip hanging down.
pub fn drape_cost(traj: &LinkTrajectory, wall_top: &Vec3, drop: f64, cfg: &RewardConfig) -> f64 {
    let t = drape_terms(traj, wall_top, drop, cfg);
    t.reach + cfg.forward_weight * t.forward + cfg.drop_weight * t.settle
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

/// Links this close to the root ride on the tool and are never counted as
/// colliding with it.
const ATTACHED_LINKS: usize = 3;

/// Keep-out, collision and velocity penalties.
pub fn penalties(
    traj: &LinkTrajectory,
    tool: &[ToolSegment],
    radii: &[f64],
    keep_out: &[Aabb],
    time_scale: f64,
    cfg: &RewardConfig,
) -> f64 {
    let mut total = 0.0;
    for b in keep_out {
        let mut worst = 0.0f64;
        for (t, links) in traj.frames().enumerate() {
            let pole = tool.get(t).map(|s| s.tip);
            for p in links.iter().chain(pole.iter()) {
                worst = worst.max(cfg.clearance - b.distance(p));
            }
        }
        total += cfg.keep_out_weight * worst;
    }
    let hit = traj.frames().zip(tool).any(|(links, seg)| {
        links
            .iter()
            .enumerate()
            .skip(ATTACHED_LINKS)
            .any(|(i, p)| segment_distance(p, &seg.flange, &seg.tip) < radii.get(i).copied().unwrap_or(0.0))
    });
    if hit {
        total += cfg.collision_penalty;
    }
    if time_scale > cfg.max_time_scale {
        total += cfg.velocity_weight * (time_scale - cfg.max_time_scale);
    }
    total
}

/// Plan executed on one rope.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub links: LinkTrajectory,
    pub tool: Vec<ToolSegment>,
    /// Slow-down applied to respect joint velocity limits.
    pub time_scale: f64,
    pub joints: JointTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: f64,
    pub penalty: f64,
    pub cost: f64,
    /// Strike: closest tip distance; lob: closest tip distance to the
    /// landing point; drape: final middle-link distance to the wall top. Metres.
    pub metric: f64,
    pub success: bool,
}

fn v3(p: [f64; 3]) -> Vec3 {
    Vec3::from(p)
}

/// Scores a rollout against the task.
pub fn score(task: &TaskSpec, rollout: &Rollout, radii: &[f64], cfg: &RewardConfig) -> Result<TaskScore> {
    task.check()?;
    let links = &rollout.links;
    let penalty = penalties(links, &rollout.tool, radii, &task.keep_out, rollout.time_scale, cfg);
    let last = links.num_frames() - 1;
    let (value, metric, success) = match task.kind {
        TaskKind::Strike => {
            let target = v3(task.target.expect("checked"));
            let d = strike_cost(links, &target);
            (d, d, d <= task.success.strike_m)
        }
        TaskKind::Lob => {
            let target = v3(task.target.expect("checked"));
            let board = task.board.expect("checked");
            let d = tip_distance_profile(links, &target).min;
            let rate = links.frame_rate();
            let knocked = task.domino.is_none_or(|dom| {
                (1..links.num_frames()).any(|t| {
                    dom.contains(&links.tip(t)) && (links.tip(t) - links.tip(t - 1)).norm() * rate >= task.success.domino_speed
                })
            });
            let landed = board.distance(&links.tip(last)) <= radii.last().copied().unwrap_or(0.0) + 0.01;
            (lob_cost(links, &target, cfg), d, knocked && landed)
        }
        TaskKind::Drape => {
            let top = v3(task.wall_top.expect("checked"));
            let mid = (links.num_links() - 1) / 2;
            let metric = (links.frame(last)[mid] - top).norm();
            (drape_cost(links, &top, task.drop_m, cfg), metric, metric <= task.success.drape_m)
        }
    };
    Ok(TaskScore {
        task: value,
        penalty,
        cost: value + penalty,
        metric,
        success,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub arm: ArmModel,
    pub q0: JointVector,
    /// Plan duration before velocity scaling, s.
    pub duration: f64,
    /// Search only joints 2, 4 and 6 (9-D).
    pub planar: bool,
    pub population: usize,
    /// Default: strike 25, lob 50, drape 15.
    pub iterations: Option<usize>,
    /// Initial step, rad.
    pub sigma: f64,
    /// Default: off for strike, on for lob and drape.
    pub warm_start: Option<bool>,
    /// Tool rise of the lifting warm start, m.
    pub lift_height: f64,
    /// Simulated time after the motion ends. Default: strike 0.5 s, others 1.5 s.
    pub settle: Option<f64>,
    /// Stop once the best cost is at or below this. Default: strike 0.015 m.
    pub target_cost: Option<f64>,
    /// Sample rate of the pole motion fed to the simulator, Hz.
    pub motion_rate: f64,
    pub record_rate: f64,
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub workers: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            arm: ArmModel::default(),
            q0: HOME,
            duration: DEFAULT_PLAN_DURATION,
            planar: false,
            population: 60,
            iterations: None,
            sigma: 0.3,
            warm_start: None,
            lift_height: 0.3,
            settle: None,
            target_cost: None,
            motion_rate: 240.0,
            record_rate: 60.0,
            sim: SimConfig::default(),
            reward: RewardConfig::default(),
            workers: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn iterations_for(&self, kind: TaskKind) -> usize {
        self.iterations.unwrap_or(match kind {
            TaskKind::Strike => 25,
            TaskKind::Lob => 50,
            TaskKind::Drape => 15,
        })
    }

    pub fn settle_for(&self, kind: TaskKind) -> f64 {
        self.settle.unwrap_or(match kind {
            TaskKind::Strike => 0.5,
            _ => 1.5,
        })
    }

    pub fn target_for(&self, kind: TaskKind) -> Option<f64> {
        self.target_cost.or(match kind {
            TaskKind::Strike => Some(0.015),
            _ => None,
        })
    }

    fn mask(&self) -> Option<[usize; 3]> {
        self.planar.then_some(PLANAR_JOINTS)
    }
}

/// Spline, velocity limits, pole motion, simulation.
pub fn rollout(params: &RopeParams, plan: &WaypointPlan, scene: &SceneGeometry, cfg: &OptimizeConfig, settle: f64) -> Result<Rollout> {
    let spline = spline_plan(plan, &cfg.arm, cfg.motion_rate)?;
    let joints = enforce_velocity_limits(&spline, &cfg.arm)?;
    let motion = to_base_motion(&cfg.arm, &joints)?;
    let horizon = joints.duration() + settle;
    let frames = (horizon * cfg.record_rate).floor() as usize + 1;
    let links = simulate(params, &motion, scene, &cfg.sim, cfg.record_rate, frames)?;
    let tool = (0..frames)
        .map(|k| {
            let t = (k as f64 / cfg.record_rate).min(joints.duration());
            let pose: BasePose = forward_kinematics(&cfg.arm, &joints.state_at(t).0);
            ToolSegment {
                flange: pose.position - pose.direction * cfg.arm.tool_extension_m,
                tip: pose.position,
            }
        })
        .collect();
    Ok(Rollout {
        time_scale: joints.time_scale() / spline.time_scale(),
        links,
        tool,
        joints,
    })
}

/// Executes `plan` on `params` and scores it.
pub fn execute(params: &RopeParams, plan: &WaypointPlan, task: &TaskSpec, cfg: &OptimizeConfig) -> Result<TaskScore> {
    let r = rollout(params, plan, &task.scene(), cfg, cfg.settle_for(task.kind))?;
    score(task, &r, &params.link_radii(), &cfg.reward)
}

/// Joint configurations raising the pole tip by `height · k/3`, k = 1..3,
/// keeping its horizontal position and direction; solved over joints 2, 4, 6.
pub fn lift_waypoints(arm: &ArmModel, q0: &JointVector, height: f64) -> Result<[JointVector; 3]> {
    let start = forward_kinematics(arm, q0);
    let heading = |p: &BasePose| p.direction.y.atan2(p.direction.x);
    let h0 = heading(&start);
    let mut out = [*q0; 3];
    let mut q = *q0;
    for (k, w) in out.iter_mut().enumerate() {
        let goal = start.position + Vec3::y() * (height * (k + 1) as f64 / 3.0);
        let residual = |q: &JointVector| {
            let p = forward_kinematics(arm, q);
            [p.position.x - goal.x, p.position.y - goal.y, heading(&p) - h0]
        };
        for _ in 0..50 {
            let r = residual(&q);
            if r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 {
                break;
            }
            let mut jac = nalgebra::Matrix3::zeros();
            for (c, &j) in PLANAR_JOINTS.iter().enumerate() {
                let mut qp = q;
                qp[j] += 1e-7;
                let rp = residual(&qp);
                for row in 0..3 {
                    jac[(row, c)] = (rp[row] - r[row]) / 1e-7;
                }
            }
            let step = jac
                .lu()
                .solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))
                .ok_or_else(|| Error::invalid("lift start is singular"))?;
            for (c, &j) in PLANAR_JOINTS.iter().enumerate() {
                q[j] -= step[c];
            }
        }
        if residual(&q).iter().any(|v| v.abs() > 1e-6) || !arm.in_limits(&q) {
            return Err(Error::invalid("lift height is out of reach"));
        }
        *w = q;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub plan: WaypointPlan,
    pub cost: f64,
    pub history: Vec<HistoryRow>,
    pub failures: usize,
}

/// CMA-ES over waypoint plans, each scored by simulating `params`.
pub fn optimize_trajectory(params: &RopeParams, task: &TaskSpec, cfg: &OptimizeConfig, seed: u64) -> Result<OptimizeResult> {
    task.check()?;
    cfg.reward.check()?;
    cfg.arm.check()?;
    crate::params::validate_simulable(params).map_err(Error::InvalidParams)?;
    let mask = cfg.mask();
    let warm = cfg.warm_start.unwrap_or(task.kind != TaskKind::Strike);
    let start = if warm {
        lift_waypoints(&cfg.arm, &cfg.q0, cfg.lift_height)?
    } else {
        [cfg.q0; 3]
    };
    let mean = WaypointPlan {
        q0: cfg.q0,
        waypoints: start,
        duration: cfg.duration,
        planar_mask: mask,
    }
    .to_vector();
    let joints: Vec<usize> = match mask {
        Some(m) => m.to_vec(),
        None => (0..NUM_JOINTS).collect(),
    };
    let per = joints.len();
    let lower: Vec<f64> = (0..mean.len()).map(|i| cfg.arm.position_limits[joints[i % per]].min).collect();
    let upper: Vec<f64> = (0..mean.len()).map(|i| cfg.arm.position_limits[joints[i % per]].max).collect();
    let cmaes = CmaesConfig {
        population: cfg.population,
        max_iterations: cfg.iterations_for(task.kind),
        target: cfg.target_for(task.kind),
        lower: Some(lower),
        upper: Some(upper),
        seed,
        workers: cfg.workers,
        ..CmaesConfig::new(mean, cfg.sigma)
    };
    let scene = task.scene();
    let radii = params.link_radii();
    let settle = cfg.settle_for(task.kind);
    let run = minimize(
        |x: &[f64]| {
            let plan = WaypointPlan::from_vector(cfg.q0, x, cfg.duration, mask)?;
            let r = rollout(params, &plan, &scene, cfg, settle)?;
            Ok(score(task, &r, &radii, &cfg.reward)?.cost)
        },
        &cmaes,
    )?;
    let evaluations = run.history.last().map_or(1, |h| h.evaluations);
    if run.failures >= evaluations {
        return Err(Error::Optimization("every candidate rollout failed".into()));
    }
    Ok(OptimizeResult {
        plan: WaypointPlan::from_vector(cfg.q0, &run.best, cfg.duration, mask)?,
        cost: run.fitness,
        history: run.history,
        failures: run.failures,
    })
}
