//! Seven-joint serial arm with a pole extender, joint-space splines through
//! three waypoints, velocity-limit time scaling, and wiggle generators.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{BaseMotion, BasePose, Vec3};

pub const NUM_JOINTS: usize = 7;

pub type JointVector = [f64; NUM_JOINTS];

/// Standard Denavit-Hartenberg row: `Rz(θ + offset) Tz(d) Tx(a) Rx(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    const fn new(theta_offset: f64, d: f64, alpha: f64, a: f64) -> Self {
        DhRow {
            a,
            alpha,
            d,
            theta_offset,
        }
    }

    fn transform(&self, q: f64) -> Matrix4<f64> {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Matrix4::new(
            ct,
            -st * ca,
            st * sa,
            self.a * ct,
            st,
            ct * ca,
            -ct * sa,
            self.a * st,
            0.0,
            sa,
            ca,
            self.d,
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }
}

/// Kinematic arm model.
///
/// The DH chain is z-up. The world frame is y-up, with the arm base at
/// `base_position_m`; DH coordinates map to world as `(x, y, z) → (x, z, −y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub dh: Vec<DhRow>,
    pub position_limits: Vec<JointLimit>,
    /// rad/s
    pub velocity_limits: Vec<f64>,
    pub tool_extension_m: f64,
    #[serde(default = "default_base")]
    pub base_position_m: [f64; 3],
}

fn default_base() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl Default for ArmModel {
    fn default() -> Self {
        let full = JointLimit {
            min: -2.0 * PI,
            max: 2.0 * PI,
        };
        ArmModel {
            dh: vec![
                DhRow::new(0.0, 0.267, -PI / 2.0, 0.0),
                DhRow::new(0.0, 0.0, PI / 2.0, 0.0),
                DhRow::new(0.0, 0.293, PI / 2.0, 0.0525),
                DhRow::new(0.0, 0.0, PI / 2.0, 0.0775),
                DhRow::new(0.0, 0.3425, PI / 2.0, 0.0),
                DhRow::new(0.0, 0.0, -PI / 2.0, 0.076),
                DhRow::new(0.0, 0.097, 0.0, 0.0),
            ],
            position_limits: vec![
                full,
                JointLimit {
                    min: -2.059,
                    max: 2.0944,
                },
                full,
                JointLimit {
                    min: -0.19198,
                    max: 3.927,
                },
                full,
                JointLimit {
                    min: -1.69297,
                    max: PI,
                },
                full,
            ],
            velocity_limits: vec![PI; NUM_JOINTS],
            tool_extension_m: 0.20,
            base_position_m: default_base(),
        }
    }
}

/// Home configuration: pole pointing straight down, joint 6 axis horizontal.
pub const HOME: JointVector = [0.0, 0.5, 0.0, 1.3, 0.0, 0.8, 0.0];

fn world_rotation() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
}

impl ArmModel {
    pub fn check(&self) -> Result<()> {
        if self.dh.len() != NUM_JOINTS
            || self.position_limits.len() != NUM_JOINTS
            || self.velocity_limits.len() != NUM_JOINTS
        {
            return Err(Error::Shape {
                expected: format!("{NUM_JOINTS} joints"),
                actual: format!(
                    "{} dh rows, {} position limits, {} velocity limits",
                    self.dh.len(),
                    self.position_limits.len(),
                    self.velocity_limits.len()
                ),
            });
        }
        for (i, l) in self.position_limits.iter().enumerate() {
            if !l.min.is_finite() || !l.max.is_finite() || l.min >= l.max {
                return Err(Error::invalid(format!("joint {} limits are not an interval", i + 1)));
            }
        }
        for (i, v) in self.velocity_limits.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::invalid(format!("joint {} velocity limit must be positive", i + 1)));
            }
        }
        let dh_ok = self
            .dh
            .iter()
            .all(|r| r.a.is_finite() && r.alpha.is_finite() && r.d.is_finite() && r.theta_offset.is_finite());
        if !dh_ok || !self.tool_extension_m.is_finite() || self.tool_extension_m < 0.0 {
            return Err(Error::invalid("arm geometry must be finite with a non-negative tool"));
        }
        if !self.base_position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("base_position_m"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arm: ArmModel = serde_json::from_str(text)?;
        arm.check()?;
        Ok(arm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flange frame in DH coordinates plus every joint axis (world frame).
    fn chain(&self, q: &JointVector) -> (Matrix4<f64>, [Vec3; NUM_JOINTS]) {
        let r = world_rotation();
        let mut m = Matrix4::identity();
        let mut axes = [Vec3::zeros(); NUM_JOINTS];
        for (i, (row, qi)) in self.dh.iter().zip(q).enumerate() {
            let z: Vector3<f64> = m.fixed_view::<3, 1>(0, 2).into();
            axes[i] = r * z;
            m *= row.transform(*qi);
        }
        (m, axes)
    }

    /// World axis of joint `j` (0-based) in configuration `q`.
    pub fn joint_axis(&self, q: &JointVector, j: usize) -> Vec3 {
        self.chain(q).1[j]
    }

    pub fn in_limits(&self, q: &JointVector) -> bool {
        q.iter().zip(&self.position_limits).all(|(v, l)| l.contains(*v))
    }
}

/// Pose of the pole tip: its position and the pole axis direction.
pub fn forward_kinematics(arm: &ArmModel, q: &JointVector) -> BasePose {
    let (m, _) = arm.chain(q);
    let r = world_rotation();
    let p: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into();
    let z: Vector3<f64> = m.fixed_view::<3, 1>(0, 2).into();
    let tip = p + z * arm.tool_extension_m;
    let base = Vec3::from(arm.base_position_m);
    BasePose {
        position: base + r * tip,
        direction: (r * z).normalize(),
    }
}

/// Start configuration, three waypoints, and duration of a joint-space plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub q0: JointVector,
    pub waypoints: [JointVector; 3],
    pub duration: f64,
    /// Three joints that move; all others stay at `q0`.
    #[serde(default)]
    pub planar_mask: Option<[usize; 3]>,
}

/// Joints driven by the planar variant (joints 2, 4, 6).
pub const PLANAR_JOINTS: [usize; 3] = [1, 3, 5];

/// Default plan duration before velocity scaling, seconds.
pub const DEFAULT_PLAN_DURATION: f64 = 2.0;

impl WaypointPlan {
    /// Builds a plan from a flat decision vector: 21 values (three full
    /// waypoints) or 9 values (three waypoints of the masked joints).
    pub fn from_vector(
        q0: JointVector,
        values: &[f64],
        duration: f64,
        planar_mask: Option<[usize; 3]>,
    ) -> Result<Self> {
        let mut waypoints = [q0; 3];
        match planar_mask {
            Some(mask) => {
                if values.len() != 9 {
                    return Err(Error::Shape {
                        expected: "9 values".into(),
                        actual: values.len().to_string(),
                    });
                }
                for (w, chunk) in waypoints.iter_mut().zip(values.chunks(3)) {
                    for (j, v) in mask.iter().zip(chunk) {
                        w[*j] = *v;
                    }
                }
            }
            None => {
                if values.len() != 3 * NUM_JOINTS {
                    return Err(Error::Shape {
                        expected: format!("{} values", 3 * NUM_JOINTS),
                        actual: values.len().to_string(),
                    });
                }
                for (w, chunk) in waypoints.iter_mut().zip(values.chunks(NUM_JOINTS)) {
                    w.copy_from_slice(chunk);
                }
            }
        }
        Ok(WaypointPlan {
            q0,
            waypoints,
            duration,
            planar_mask,
        })
    }

    /// Inverse of [`WaypointPlan::from_vector`].
    pub fn to_vector(&self) -> Vec<f64> {
        match self.planar_mask {
            Some(mask) => self
                .waypoints
                .iter()
                .flat_map(|w| mask.iter().map(move |j| w[*j]))
                .collect(),
            None => self.waypoints.iter().flatten().copied().collect(),
        }
    }

    pub fn check(&self, arm: &ArmModel) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("plan duration must be positive"));
        }
        if let Some(mask) = self.planar_mask {
            if mask.iter().any(|j| *j >= NUM_JOINTS) {
                return Err(Error::invalid("planar mask names a joint that does not exist"));
            }
        }
        for (k, w) in std::iter::once(&self.q0).chain(&self.waypoints).enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("waypoint"));
            }
            if !arm.in_limits(w) {
                return Err(Error::invalid(format!("waypoint {k} is outside the joint limits")));
            }
        }
        Ok(())
    }

    /// Knot values with masked-out joints pinned to `q0`.
    fn knots(&self) -> [JointVector; 4] {
        let mut k = [self.q0, self.waypoints[0], self.waypoints[1], self.waypoints[2]];
        if let Some(mask) = self.planar_mask {
            for w in k.iter_mut().skip(1) {
                for j in 0..NUM_JOINTS {
                    if !mask.contains(&j) {
                        w[j] = self.q0[j];
                    }
                }
            }
        }
        k
    }
}

/// Clamped cubic spline with uniform knots, one per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpline {
    knots: [JointVector; 4],
    slopes: [JointVector; 4],
    duration: f64,
}

impl JointSpline {
    fn new(knots: [JointVector; 4], duration: f64) -> Self {
        let h = duration / 3.0;
        let mut slopes = [[0.0; NUM_JOINTS]; 4];
        for j in 0..NUM_JOINTS {
            // Interior slopes from C² continuity with zero end slopes:
            // 4 v1 + v2 = 3 (y2 - y0) / h, v1 + 4 v2 = 3 (y3 - y1) / h.
            let r1 = 3.0 * (knots[2][j] - knots[0][j]) / h;
            let r2 = 3.0 * (knots[3][j] - knots[1][j]) / h;
            slopes[1][j] = (4.0 * r1 - r2) / 15.0;
            slopes[2][j] = (4.0 * r2 - r1) / 15.0;
        }
        JointSpline {
            knots,
            slopes,
            duration,
        }
    }

    fn segment(&self, t: f64) -> (usize, f64, f64) {
        let h = self.duration / 3.0;
        let t = t.clamp(0.0, self.duration);
        let i = ((t / h).floor() as usize).min(2);
        (i, (t - i as f64 * h) / h, h)
    }

    fn eval(&self, t: f64) -> (JointVector, JointVector) {
        let (i, s, h) = self.segment(t);
        let (s2, s3) = (s * s, s * s * s);
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let mut q = [0.0; NUM_JOINTS];
        let mut v = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            let (y0, y1) = (self.knots[i][j], self.knots[i + 1][j]);
            let (m0, m1) = (self.slopes[i][j], self.slopes[i + 1][j]);
            q[j] = y0 + h01 * (y1 - y0) + h10 * h * m0 + h11 * h * m1;
            v[j] = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        }
        (q, v)
    }

    /// Largest |q̇| per joint over the whole spline.
    fn peak_speed(&self) -> JointVector {
        let h = self.duration / 3.0;
        let mut peak = [0.0f64; NUM_JOINTS];
        for i in 0..3 {
            for j in 0..NUM_JOINTS {
                let (y0, y1) = (self.knots[i][j], self.knots[i + 1][j]);
                let (m0, m1) = (self.slopes[i][j], self.slopes[i + 1][j]);
                // q̇(s) = a s² + b s + c on s ∈ [0, 1].
                let a = (6.0 * (y0 - y1)) / h + 3.0 * (m0 + m1);
                let b = (6.0 * (y1 - y0)) / h - 4.0 * m0 - 2.0 * m1;
                let c = m0;
                let f = |s: f64| a * s * s + b * s + c;
                let mut m = f(0.0).abs().max(f(1.0).abs());
                if a != 0.0 {
                    let s = -b / (2.0 * a);
                    if s > 0.0 && s < 1.0 {
                        m = m.max(f(s).abs());
                    }
                }
                peak[j] = peak[j].max(m);
            }
        }
        peak
    }
}

/// Analytic motion that a sampled trajectory came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Spline(JointSpline),
    /// `home` with `joint` following `home + amplitude · sin(2π f t)`.
    Sine {
        home: JointVector,
        joint: usize,
        amplitude: f64,
        frequency: f64,
    },
    /// Linear chirp from `f0` to `f1` over `sweep` seconds.
    Chirp {
        home: JointVector,
        joint: usize,
        amplitude: f64,
        f0: f64,
        f1: f64,
        sweep: f64,
    },
    /// Cubic Hermite through recorded samples.
    Samples {
        times: Vec<f64>,
        positions: Vec<JointVector>,
        velocities: Vec<JointVector>,
    },
}

impl Profile {
    fn eval(&self, t: f64) -> (JointVector, JointVector) {
        match self {
            Profile::Spline(s) => s.eval(t),
            Profile::Sine {
                home,
                joint,
                amplitude,
                frequency,
            } => {
                let w = 2.0 * PI * frequency;
                let mut q = *home;
                let mut v = [0.0; NUM_JOINTS];
                q[*joint] += amplitude * (w * t).sin();
                v[*joint] = amplitude * w * (w * t).cos();
                (q, v)
            }
            Profile::Chirp {
                home,
                joint,
                amplitude,
                f0,
                f1,
                sweep,
            } => {
                let k = (f1 - f0) / sweep;
                let phase = 2.0 * PI * (f0 * t + 0.5 * k * t * t);
                let rate = 2.0 * PI * (f0 + k * t);
                let mut q = *home;
                let mut v = [0.0; NUM_JOINTS];
                q[*joint] += amplitude * phase.sin();
                v[*joint] = amplitude * rate * phase.cos();
                (q, v)
            }
            Profile::Samples {
                times,
                positions,
                velocities,
            } => hermite(times, positions, velocities, t),
        }
    }

    /// Largest |q̇| per joint over `[0, duration]`.
    fn peak_speed(&self, duration: f64) -> JointVector {
        match self {
            Profile::Spline(s) => s.peak_speed(),
            Profile::Sine {
                joint,
                amplitude,
                frequency,
                ..
            } => {
                let mut p = [0.0; NUM_JOINTS];
                p[*joint] = amplitude.abs() * 2.0 * PI * frequency;
                p
            }
            _ => {
                // Dense scan for profiles without a closed form.
                let n = ((duration * 2000.0).ceil() as usize).max(2);
                let mut p = [0.0f64; NUM_JOINTS];
                for i in 0..=n {
                    let (_, v) = self.eval(duration * i as f64 / n as f64);
                    for j in 0..NUM_JOINTS {
                        p[j] = p[j].max(v[j].abs());
                    }
                }
                p
            }
        }
    }
}

fn hermite(
    times: &[f64],
    positions: &[JointVector],
    velocities: &[JointVector],
    t: f64,
) -> (JointVector, JointVector) {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return (positions[0], if n == 1 { [0.0; NUM_JOINTS] } else { velocities[0] });
    }
    if t >= times[n - 1] {
        return (positions[n - 1], velocities[n - 1]);
    }
    let i = times.partition_point(|x| *x <= t).saturating_sub(1).min(n - 2);
    let h = times[i + 1] - times[i];
    let s = (t - times[i]) / h;
    let (s2, s3) = (s * s, s * s * s);
    let mut q = [0.0; NUM_JOINTS];
    let mut v = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let (y0, y1) = (positions[i][j], positions[i + 1][j]);
        let (m0, m1) = (velocities[i][j], velocities[i + 1][j]);
        q[j] = y0
            + (-2.0 * s3 + 3.0 * s2) * (y1 - y0)
            + (s3 - 2.0 * s2 + s) * h * m0
            + (s3 - s2) * h * m1;
        v[j] = (6.0 * s2 - 6.0 * s) / h * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) / h * y1
            + (3.0 * s2 - 2.0 * s) * m1;
    }
    (q, v)
}

/// Joint positions and velocities sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    rate: f64,
    positions: Vec<JointVector>,
    velocities: Vec<JointVector>,
    profile: Profile,
    /// Wall-clock seconds per profile second.
    time_scale: f64,
}

impl JointTrajectory {
    /// Samples `profile` at `rate` for `n` frames.
    pub fn from_profile(profile: Profile, rate: f64, n: usize) -> Result<Self> {
        Self::scaled(profile, rate, n, 1.0)
    }

    fn scaled(profile: Profile, rate: f64, n: usize, time_scale: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) || n == 0 {
            return Err(Error::invalid("trajectory needs a positive rate and at least one sample"));
        }
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 / rate / time_scale;
            let (q, mut v) = profile.eval(t);
            for x in v.iter_mut() {
                *x /= time_scale;
            }
            positions.push(q);
            velocities.push(v);
        }
        Ok(JointTrajectory {
            rate,
            positions,
            velocities,
            profile,
            time_scale,
        })
    }

    /// Trajectory from recorded samples at a uniform rate.
    pub fn from_samples(
        rate: f64,
        positions: Vec<JointVector>,
        velocities: Vec<JointVector>,
    ) -> Result<Self> {
        if positions.len() != velocities.len() || positions.is_empty() {
            return Err(Error::Shape {
                expected: "matching, non-empty position and velocity samples".into(),
                actual: format!("{} and {}", positions.len(), velocities.len()),
            });
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if positions.iter().chain(&velocities).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint sample"));
        }
        let times = (0..positions.len()).map(|k| k as f64 / rate).collect();
        Ok(JointTrajectory {
            rate,
            profile: Profile::Samples {
                times,
                positions: positions.clone(),
                velocities: velocities.clone(),
            },
            positions,
            velocities,
            time_scale: 1.0,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.rate
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.rate
    }

    pub fn positions(&self) -> &[JointVector] {
        &self.positions
    }

    pub fn velocities(&self) -> &[JointVector] {
        &self.velocities
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Position and velocity at wall-clock time `t`.
    pub fn state_at(&self, t: f64) -> (JointVector, JointVector) {
        let (q, mut v) = self.profile.eval(t / self.time_scale);
        for x in v.iter_mut() {
            *x /= self.time_scale;
        }
        (q, v)
    }

    /// Largest |q̇| per joint over the continuous motion.
    pub fn peak_speed(&self) -> JointVector {
        let mut p = self.profile.peak_speed(self.duration() / self.time_scale);
        for x in p.iter_mut() {
            *x /= self.time_scale;
        }
        p
    }

    /// Same path played `factor` times slower; the sample count grows so the
    /// whole path is still covered.
    pub fn slowed(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("time scale must be positive"));
        }
        let n = ((self.len() - 1) as f64 * factor).round() as usize + 1;
        Self::scaled(self.profile.clone(), self.rate, n, self.time_scale * factor)
    }

    /// Same motion sampled at another rate over the same duration.
    pub fn resampled(&self, rate: f64) -> Result<Self> {
        let n = (self.duration() * rate + 1e-9).floor() as usize + 1;
        Self::scaled(self.profile.clone(), rate, n, self.time_scale)
    }

    /// Writes `t,q1..q7,v1..v7`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=NUM_JOINTS).map(|j| format!("q{j}")));
        header.extend((1..=NUM_JOINTS).map(|j| format!("v{j}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.time(k).to_string()];
            row.extend(self.positions[k].iter().map(|v| v.to_string()));
            row.extend(self.velocities[k].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout of [`JointTrajectory::write_csv`]; times must be
    /// uniformly spaced.
    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 1 + 2 * NUM_JOINTS {
                return Err(Error::format("joint csv", format!("expected {} columns", 1 + 2 * NUM_JOINTS)));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("joint csv", e.to_string()))?;
            times.push(vals[0]);
            let mut q = [0.0; NUM_JOINTS];
            let mut v = [0.0; NUM_JOINTS];
            q.copy_from_slice(&vals[1..1 + NUM_JOINTS]);
            v.copy_from_slice(&vals[1 + NUM_JOINTS..]);
            positions.push(q);
            velocities.push(v);
        }
        if times.len() < 2 {
            return Err(Error::format("joint csv", "need at least two samples"));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::format("joint csv", "times must increase"));
        }
        for (k, t) in times.iter().enumerate() {
            if (t - times[0] - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::format("joint csv", "times must be uniformly spaced"));
            }
        }
        Self::from_samples(1.0 / dt, positions, velocities)
    }
}

/// Clamped spline through the plan's knots, sampled at `rate` over the
/// plan duration (both ends included when the duration is a whole number
/// of samples).
pub fn spline_plan(plan: &WaypointPlan, arm: &ArmModel, rate: f64) -> Result<JointTrajectory> {
    plan.check(arm)?;
    let spline = JointSpline::new(plan.knots(), plan.duration);
    let n = (plan.duration * rate + 1e-9).floor() as usize + 1;
    JointTrajectory::from_profile(Profile::Spline(spline), rate, n)
}

/// Slows the trajectory uniformly so that no joint exceeds its velocity
/// limit; the peak of the worst joint then sits exactly on its limit.
pub fn enforce_velocity_limits(traj: &JointTrajectory, arm: &ArmModel) -> Result<JointTrajectory> {
    let peak = traj.peak_speed();
    let ratio = peak
        .iter()
        .zip(&arm.velocity_limits)
        .map(|(p, l)| p / l)
        .fold(0.0, f64::max);
    if ratio <= 1.0 {
        Ok(traj.clone())
    } else {
        traj.slowed(ratio)
    }
}

fn check_oscillation(arm: &ArmModel, home: &JointVector, joint: usize, amplitude: f64) -> Result<()> {
    if joint >= NUM_JOINTS {
        return Err(Error::invalid(format!("joint index {joint} out of range")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude must be non-negative"));
    }
    if !arm.in_limits(home) {
        return Err(Error::invalid("home configuration is outside the joint limits"));
    }
    let l = arm.position_limits[joint];
    if !l.contains(home[joint] + amplitude) || !l.contains(home[joint] - amplitude) {
        return Err(Error::invalid(format!(
            "amplitude {amplitude} rad takes joint {} past its limits",
            joint + 1
        )));
    }
    Ok(())
}

/// Sinusoidal oscillation of one joint about `home`.
pub fn wiggle_trajectory(
    arm: &ArmModel,
    joint: usize,
    amplitude: f64,
    frequency: f64,
    n_frames: usize,
    rate: f64,
    home: &JointVector,
) -> Result<JointTrajectory> {
    check_oscillation(arm, home, joint, amplitude)?;
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid("frequency must be positive"));
    }
    JointTrajectory::from_profile(
        Profile::Sine {
            home: *home,
            joint,
            amplitude,
            frequency,
        },
        rate,
        n_frames,
    )
}

/// Linear frequency sweep of one joint from `f0` to `f1` over the recording.
pub fn chirp_trajectory(
    arm: &ArmModel,
    joint: usize,
    amplitude: f64,
    f0: f64,
    f1: f64,
    n_frames: usize,
    rate: f64,
    home: &JointVector,
) -> Result<JointTrajectory> {
    check_oscillation(arm, home, joint, amplitude)?;
    if !(f0 > 0.0 && f1 > 0.0 && f0.is_finite() && f1.is_finite()) {
        return Err(Error::invalid("chirp frequencies must be positive"));
    }
    let sweep = (n_frames.max(2) - 1) as f64 / rate;
    JointTrajectory::from_profile(
        Profile::Chirp {
            home: *home,
            joint,
            amplitude,
            f0,
            f1,
            sweep,
        },
        rate,
        n_frames,
    )
}

/// Pole-tip poses along a joint trajectory, one per sample.
pub fn to_base_motion(arm: &ArmModel, traj: &JointTrajectory) -> Result<BaseMotion> {
    let samples = traj
        .positions()
        .iter()
        .enumerate()
        .map(|(k, q)| (traj.time(k), forward_kinematics(arm, q)))
        .collect();
    BaseMotion::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Vec3, b: &[f64; 3], tol: f64) -> bool {
        (a - Vec3::from(*b)).norm() < tol
    }

    #[test]
    fn golden_poses_match_transform_chain() {
        let arm = ArmModel::default();
        let zero = forward_kinematics(&arm, &[0.0; 7]);
        assert!(close(&zero.position, &[0.206, 0.9205, 0.0], 1e-12));
        assert!(close(&zero.direction, &[0.0, -1.0, 0.0], 1e-12));
        let home = forward_kinematics(&arm, &HOME);
        assert!(close(&home.position, &[0.5622339984177679, 1.0189348989504674, 0.0], 1e-12));
        assert!(close(&home.direction, &[0.0, -1.0, 0.0], 1e-12));
        let q = [0.3, -0.4, 0.7, 1.1, -0.5, 0.9, 1.2];
        let p = forward_kinematics(&arm, &q);
        assert!(close(
            &p.position,
            &[0.34773591670611703, 1.4039752061265727, -0.3983041796908183],
            1e-12
        ));
        assert!(close(
            &p.direction,
            &[0.7474580138274374, -0.6576457197062616, -0.09385427490090943],
            1e-12
        ));
    }

    #[test]
    fn home_joint6_axis_is_horizontal() {
        let arm = ArmModel::default();
        let axis = arm.joint_axis(&HOME, 5);
        assert!((axis.z.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base_half_turn_reflects_through_base_axis() {
        let arm = ArmModel::default();
        let mut q = [0.2, 0.4, -0.3, 1.0, 0.5, 0.7, 0.1];
        let a = forward_kinematics(&arm, &q).position;
        q[0] += PI;
        let b = forward_kinematics(&arm, &q).position;
        assert!((a.x + b.x).abs() < 1e-9);
        assert!((a.y - b.y).abs() < 1e-9);
        assert!((a.z + b.z).abs() < 1e-9);
    }

    #[test]
    fn tool_extension_moves_tip_along_axis() {
        let short = ArmModel {
            tool_extension_m: 0.0,
            ..ArmModel::default()
        };
        let q = [0.3, -0.4, 0.7, 1.1, -0.5, 0.9, 1.2];
        let a = forward_kinematics(&short, &q);
        let b = forward_kinematics(&ArmModel::default(), &q);
        assert!(((b.position - a.position) - a.direction * 0.20).norm() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let arm = ArmModel::default();
        let back = ArmModel::from_json(&arm.to_json().unwrap()).unwrap();
        assert_eq!(arm, back);
        let mut bad = arm.clone();
        bad.position_limits[2] = JointLimit { min: 1.0, max: 0.0 };
        assert!(ArmModel::from_json(&bad.to_json().unwrap()).is_err());
        bad = arm.clone();
        bad.dh.pop();
        assert!(ArmModel::from_json(&bad.to_json().unwrap()).is_err());
    }

    fn sample_plan() -> WaypointPlan {
        WaypointPlan {
            q0: HOME,
            waypoints: [
                [0.1, 0.7, 0.0, 1.1, 0.2, 1.0, -0.1],
                [-0.2, 0.3, 0.1, 1.5, -0.1, 0.4, 0.3],
                [0.0, 0.6, -0.1, 1.2, 0.0, 0.9, 0.0],
            ],
            duration: 2.0,
            planar_mask: None,
        }
    }

    #[test]
    fn spline_hits_every_knot() {
        let arm = ArmModel::default();
        let plan = sample_plan();
        let traj = spline_plan(&plan, &arm, 60.0).unwrap();
        assert_eq!(traj.len(), 121);
        let knots = plan.knots();
        for (i, k) in knots.iter().enumerate() {
            let (q, _) = traj.state_at(i as f64 * plan.duration / 3.0);
            for j in 0..NUM_JOINTS {
                assert!((q[j] - k[j]).abs() <= 1e-12);
            }
        }
        // Knots at 0, 40, 80, 120 are also samples.
        for (i, k) in knots.iter().enumerate() {
            for j in 0..NUM_JOINTS {
                assert!((traj.positions()[40 * i][j] - k[j]).abs() <= 1e-12);
            }
        }
        for v in traj.velocities()[0].iter().chain(&traj.velocities()[120]) {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn spline_is_twice_continuous_at_knots() {
        let spline = JointSpline::new(sample_plan().knots(), 2.0);
        let h = 2.0 / 3.0;
        for i in 1..3 {
            let t = i as f64 * h;
            let e = 1e-6;
            let (_, v_lo) = spline.eval(t - e);
            let (_, v_hi) = spline.eval(t + e);
            let (_, v_lo2) = spline.eval(t - 2.0 * e);
            let (_, v_hi2) = spline.eval(t + 2.0 * e);
            for j in 0..NUM_JOINTS {
                assert!((v_lo[j] - v_hi[j]).abs() < 1e-4);
                let a_lo = (v_lo[j] - v_lo2[j]) / e;
                let a_hi = (v_hi2[j] - v_hi[j]) / e;
                assert!((a_lo - a_hi).abs() < 1e-3, "joint {j} knot {i}: {a_lo} vs {a_hi}");
            }
        }
    }

    #[test]
    fn constant_plan_stays_put() {
        let arm = ArmModel::default();
        let plan = WaypointPlan {
            q0: HOME,
            waypoints: [HOME; 3],
            duration: 1.5,
            planar_mask: None,
        };
        let traj = spline_plan(&plan, &arm, 100.0).unwrap();
        assert!(traj.positions().iter().all(|q| *q == HOME));
        assert!(traj.velocities().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn waypoint_outside_limits_is_rejected() {
        let arm = ArmModel::default();
        let mut plan = sample_plan();
        plan.waypoints[1][3] = 4.5;
        assert!(spline_plan(&plan, &arm, 60.0).is_err());
        plan = sample_plan();
        plan.duration = 0.0;
        assert!(spline_plan(&plan, &arm, 60.0).is_err());
    }

    #[test]
    fn planar_mask_freezes_other_joints() {
        let arm = ArmModel::default();
        let vals = [0.7, 1.0, 1.1, 0.3, 1.6, 0.5, 0.6, 1.2, 0.9];
        let plan = WaypointPlan::from_vector(HOME, &vals, 2.0, Some(PLANAR_JOINTS)).unwrap();
        assert_eq!(plan.to_vector(), vals);
        let traj = spline_plan(&plan, &arm, 120.0).unwrap();
        for q in traj.positions() {
            for j in [0, 2, 4, 6] {
                assert_eq!(q[j], HOME[j]);
            }
        }
        let full: Vec<f64> = (0..21).map(|i| 0.01 * i as f64).collect();
        let plan = WaypointPlan::from_vector(HOME, &full, 2.0, None).unwrap();
        assert_eq!(plan.to_vector(), full);
        assert!(WaypointPlan::from_vector(HOME, &full, 2.0, Some(PLANAR_JOINTS)).is_err());
    }

    #[test]
    fn velocity_limit_scaling() {
        let arm = ArmModel::default();
        let slow = wiggle_trajectory(&arm, 5, 0.3, 0.5, 120, 60.0, &HOME).unwrap();
        assert_eq!(enforce_velocity_limits(&slow, &arm).unwrap(), slow);

        // Peak 0.5 · 2π · f = 2π at f = 2: twice the π rad/s limit.
        let fast = wiggle_trajectory(&arm, 5, 0.5, 2.0, 121, 60.0, &HOME).unwrap();
        let peak = fast.peak_speed()[5];
        assert!((peak - 2.0 * PI).abs() < 1e-12);
        let scaled = enforce_velocity_limits(&fast, &arm).unwrap();
        assert!((scaled.duration() - 2.0 * fast.duration()).abs() < 1e-12);
        assert!((scaled.peak_speed()[5] - PI).abs() < 1e-6);
        let sampled_peak = scaled.velocities().iter().map(|v| v[5].abs()).fold(0.0, f64::max);
        assert!(sampled_peak <= PI + 1e-9);
        // Same geometric path.
        for k in 0..fast.len() {
            let (q, _) = scaled.state_at(2.0 * fast.time(k));
            for j in 0..NUM_JOINTS {
                assert!((q[j] - fast.positions()[k][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spline_peak_speed_bounds_samples() {
        let arm = ArmModel::default();
        let traj = spline_plan(&sample_plan(), &arm, 1000.0).unwrap();
        let peak = traj.peak_speed();
        for j in 0..NUM_JOINTS {
            let sampled = traj.velocities().iter().map(|v| v[j].abs()).fold(0.0, f64::max);
            assert!(sampled <= peak[j] + 1e-12);
            assert!(peak[j] - sampled < 1e-4);
        }
    }

    #[test]
    fn wiggle_examples() {
        let arm = ArmModel::default();
        let a = wiggle_trajectory(&arm, 5, 20f64.to_radians(), 0.5, 400, 60.0, &HOME).unwrap();
        assert_eq!(a.len(), 400);
        assert!((a.positions()[30][5] - HOME[5] - 20f64.to_radians() * (PI * 0.5).sin()).abs() < 1e-12);
        let b = wiggle_trajectory(&arm, 5, 30f64.to_radians(), 1.0, 400, 60.0, &HOME).unwrap();
        assert!((b.positions()[15][5] - HOME[5] - 30f64.to_radians()).abs() < 1e-12);
        let still = wiggle_trajectory(&arm, 5, 0.0, 1.0, 50, 60.0, &HOME).unwrap();
        assert!(still.positions().iter().all(|q| *q == HOME));
        assert!(wiggle_trajectory(&arm, 5, 3.0, 1.0, 50, 60.0, &HOME).is_err());
        assert!(wiggle_trajectory(&arm, 5, 0.2, 0.0, 50, 60.0, &HOME).is_err());
        for q in a.positions() {
            for j in [0, 1, 2, 3, 4, 6] {
                assert_eq!(q[j], HOME[j]);
            }
        }
    }

    #[test]
    fn chirp_sweeps_frequency() {
        let arm = ArmModel::default();
        let c = chirp_trajectory(&arm, 5, 0.4, 0.5, 2.0, 401, 100.0, &HOME).unwrap();
        // Instantaneous speed amplitude grows with frequency.
        let early = c.velocities()[..100].iter().map(|v| v[5].abs()).fold(0.0, f64::max);
        let late = c.velocities()[300..].iter().map(|v| v[5].abs()).fold(0.0, f64::max);
        assert!(late > 2.0 * early);
        assert!(c.peak_speed()[5] <= 0.4 * 2.0 * PI * 2.0 + 1e-9);
    }

    #[test]
    fn base_motion_follows_samples() {
        let arm = ArmModel::default();
        let traj = wiggle_trajectory(&arm, 5, 0.0, 1.0, 30, 60.0, &HOME).unwrap();
        let m = to_base_motion(&arm, &traj).unwrap();
        assert_eq!(m.len(), 30);
        let first = m.samples()[0].1;
        assert!(m.samples().iter().all(|(_, p)| *p == first));
        for (k, (t, _)) in m.samples().iter().enumerate() {
            assert_eq!(*t, traj.time(k));
        }
    }

    #[test]
    fn joint6_wiggle_is_planar() {
        let arm = ArmModel::default();
        let traj = wiggle_trajectory(&arm, 5, 25f64.to_radians(), 0.75, 400, 60.0, &HOME).unwrap();
        let m = to_base_motion(&arm, &traj).unwrap();
        let pts: Vec<Vec3> = m.samples().iter().map(|(_, p)| p.position).collect();
        let c = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64;
        let mut cov = Matrix3::zeros();
        for p in &pts {
            let d = p - c;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let smallest = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
        let worst = pts.iter().map(|p| (p - c).dot(&normal).abs()).fold(0.0, f64::max);
        assert!(smallest >= -1e-12);
        assert!(worst < 1e-6, "plane residual {worst}");
        // The tip really moves.
        let spread = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        assert!(spread > 0.05);
    }

    #[test]
    fn csv_round_trip() {
        let arm = ArmModel::default();
        let traj = spline_plan(&sample_plan(), &arm, 50.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,q1,q2,q3,q4,q5,q6,q7,v1,v2,v3,v4,v5,v6,v7\n"));
        let back = JointTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.positions(), traj.positions());
        assert_eq!(back.velocities(), traj.velocities());
        assert!((back.rate() - 50.0).abs() < 1e-9);
        assert!(JointTrajectory::read_csv("t,q1\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn sampled_profile_reproduces_samples() {
        let arm = ArmModel::default();
        let traj = spline_plan(&sample_plan(), &arm, 50.0).unwrap();
        let rec = JointTrajectory::from_samples(50.0, traj.positions().to_vec(), traj.velocities().to_vec())
            .unwrap();
        let slow = rec.slowed(1.5).unwrap();
        for k in 0..rec.len() {
            let (q, _) = slow.state_at(1.5 * rec.time(k));
            for j in 0..NUM_JOINTS {
                assert!((q[j] - rec.positions()[k][j]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn sampled_velocity_matches_finite_difference(
            vals in proptest::collection::vec(-0.3f64..0.3, 21),
            duration in 0.8f64..3.0,
        ) {
            let arm = ArmModel::default();
            let mut wps = [HOME; 3];
            for (w, c) in wps.iter_mut().zip(vals.chunks(7)) {
                for j in 0..7 {
                    w[j] += c[j];
                }
            }
            let plan = WaypointPlan { q0: HOME, waypoints: wps, duration, planar_mask: None };
            let rate = 400.0;
            let traj = spline_plan(&plan, &arm, rate).unwrap();
            let q = traj.positions();
            let v = traj.velocities();
            let bound = 50.0 / rate;
            for k in 1..traj.len() - 1 {
                for j in 0..7 {
                    let fd = (q[k + 1][j] - q[k - 1][j]) * rate / 2.0;
                    prop_assert!((fd - v[k][j]).abs() < bound);
                }
            }
        }

        #[test]
        fn scaling_preserves_path(factor in 1.0f64..4.0) {
            let arm = ArmModel::default();
            let traj = spline_plan(&sample_plan(), &arm, 60.0).unwrap();
            let slow = traj.slowed(factor).unwrap();
            for k in 0..traj.len() {
                let (q, _) = slow.state_at(factor * traj.time(k));
                for j in 0..7 {
                    prop_assert!((q[j] - traj.positions()[k][j]).abs() < 1e-9);
                }
            }
        }
    }
}
