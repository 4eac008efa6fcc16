//! Forward dynamics of a rope modeled as a chain of link spheres joined by
//! compliant ball joints, driven at one end by a kinematic attachment.

mod banded;
mod format;
mod integrator;
mod scene;

use serde::{Deserialize, Serialize};

pub use format::{read_trajectory, trajectory_to_csv, write_trajectory, TRAJECTORY_MAGIC};
pub use integrator::{step, Simulator};
pub use scene::{Aabb, SceneGeometry, SurfaceId, Vec3};

use crate::error::{Error, Result};
use crate::params::{simulable, RopeParams};

/// How the first links are tied to the attachment frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RootMode {
    /// Link 0 follows the attachment position and the first segment
    /// follows its direction (a knot on a pole tip).
    #[default]
    Clamped,
    /// Link 0 follows the attachment position; the rope pivots freely.
    Pinned,
    /// No attachment.
    Free,
}

impl RootMode {
    pub fn kinematic_links(self) -> usize {
        match self {
            RootMode::Clamped => 2,
            RootMode::Pinned => 1,
            RootMode::Free => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub substeps: usize,
    /// Iterations of the segment-length projection.
    pub constraint_iterations: usize,
    pub gravity: f64,
    pub friction: f64,
    pub contacts: bool,
    /// Air density for quadratic drag, kg/m³. Zero disables drag.
    pub air_density: f64,
    pub rope_drag_coefficient: f64,
    pub lead_drag_coefficient: f64,
    pub root: RootMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            substeps: 4,
            constraint_iterations: 20,
            gravity: 9.81,
            friction: 0.5,
            contacts: true,
            air_density: 1.2,
            rope_drag_coefficient: 1.0,
            lead_drag_coefficient: 0.47,
            root: RootMode::Clamped,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if self.friction < 0.0 || self.air_density < 0.0 {
            return Err(Error::invalid("friction and air density must be non-negative"));
        }
        Ok(())
    }

    /// Rate at which the simulator consumes attachment poses.
    pub fn substep_rate(&self) -> f64 {
        self.substeps as f64 / self.dt
    }
}

/// Attachment frame: position of link 0 and the driven direction of the
/// first segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub position: Vec3,
    pub direction: Vec3,
}

impl BasePose {
    pub fn new(position: Vec3, direction: Vec3) -> Self {
        BasePose {
            position,
            direction: direction.normalize(),
        }
    }

    /// Hanging straight down from `position`.
    pub fn hanging(position: Vec3) -> Self {
        BasePose {
            position,
            direction: Vec3::new(0.0, -1.0, 0.0),
        }
    }

    pub fn lerp(&self, other: &BasePose, a: f64) -> BasePose {
        let d = self.direction * (1.0 - a) + other.direction * a;
        let n = d.norm();
        BasePose {
            position: self.position * (1.0 - a) + other.position * a,
            direction: if n > 1e-12 { d / n } else { other.direction },
        }
    }

    fn mirrored_x(&self) -> BasePose {
        BasePose {
            position: Vec3::new(-self.position.x, self.position.y, self.position.z),
            direction: Vec3::new(-self.direction.x, self.direction.y, self.direction.z),
        }
    }
}

/// Time-stamped attachment poses; linearly interpolated between samples and
/// held constant after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMotion {
    samples: Vec<(f64, BasePose)>,
}

impl BaseMotion {
    pub fn new(samples: Vec<(f64, BasePose)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("base motion needs at least one sample"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("base motion times must be strictly increasing"));
            }
        }
        for (_, p) in &samples {
            if (p.direction.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("base motion directions must be unit vectors"));
            }
        }
        Ok(BaseMotion { samples })
    }

    pub fn constant(pose: BasePose) -> Self {
        BaseMotion {
            samples: vec![(0.0, pose)],
        }
    }

    pub fn samples(&self) -> &[(f64, BasePose)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
    }

    pub fn pose_at(&self, t: f64) -> BasePose {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        // First sample with time > t.
        let hi = s.partition_point(|(ts, _)| *ts <= t);
        let (t0, p0) = s[hi - 1];
        let (t1, p1) = s[hi];
        p0.lerp(&p1, (t - t0) / (t1 - t0))
    }

    pub fn mirrored_x(&self) -> BaseMotion {
        BaseMotion {
            samples: self.samples.iter().map(|(t, p)| (*t, p.mirrored_x())).collect(),
        }
    }
}

/// Positions and velocities of all link centers at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub time: f64,
}

impl RopeState {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Bending angle at every interior link.
    pub fn joint_angles(&self) -> Vec<f64> {
        let p = &self.positions;
        (1..p.len().saturating_sub(1))
            .map(|i| integrator::bend_vector(&(p[i] - p[i - 1]), &(p[i + 1] - p[i])).1)
            .collect()
    }

    /// Largest |length / rest - 1| over all segments.
    pub fn max_strain(&self, rest: f64) -> f64 {
        self.positions
            .windows(2)
            .map(|w| ((w[1] - w[0]).norm() / rest - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Straight rope from `anchor` along `direction`, at rest.
    pub fn straight(params: &RopeParams, root: RootMode, anchor: Vec3, direction: Vec3) -> Self {
        let dir = direction.normalize();
        let l = params.segment_length();
        let n = params.num_links;
        RopeState {
            positions: (0..n).map(|i| anchor + dir * (l * i as f64)).collect(),
            velocities: vec![Vec3::zeros(); n],
            masses: link_masses(params, root),
            time: 0.0,
        }
    }
}

/// Point masses of the links.
///
/// Each segment's rope mass is lumped onto its far link, so links 1..N carry
/// `mass_per_unit_length * segment_length * link_extra_scale` and the last
/// link also carries the lead. Link 0 is the knot on the attachment and has
/// no mass of its own unless the rope is free.
pub fn link_masses(params: &RopeParams, root: RootMode) -> Vec<f64> {
    let n = params.num_links;
    let link = params.mass_per_unit_length * params.segment_length() * params.link_extra_scale;
    let mut m = vec![link; n];
    if root != RootMode::Free {
        m[0] = 0.0;
    }
    m[n - 1] += params.lead_mass;
    m
}

/// Rope at rest hanging from `base`: the first segment follows the base
/// direction, the rest hangs straight down.
pub fn build_rope(params: &RopeParams, base: &BasePose) -> Result<RopeState> {
    build_rope_with_root(params, base, RootMode::Clamped)
}

pub fn build_rope_with_root(
    params: &RopeParams,
    base: &BasePose,
    root: RootMode,
) -> Result<RopeState> {
    simulable(params)?;
    let l = params.segment_length();
    let down = Vec3::new(0.0, -1.0, 0.0);
    let n = params.num_links;
    let mut positions = Vec::with_capacity(n);
    positions.push(base.position);
    let mut p = base.position;
    for i in 1..n {
        let d = if i == 1 && root == RootMode::Clamped {
            base.direction
        } else {
            down
        };
        p += d * l;
        positions.push(p);
    }
    Ok(RopeState {
        positions,
        velocities: vec![Vec3::zeros(); n],
        masses: link_masses(params, root),
        time: 0.0,
    })
}

/// Link-center positions sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrajectory {
    num_links: usize,
    frame_rate: f64,
    data: Vec<Vec3>,
}

impl LinkTrajectory {
    pub fn new(num_links: usize, frame_rate: f64, data: Vec<Vec3>) -> Result<Self> {
        if num_links == 0 || !(frame_rate > 0.0) || !frame_rate.is_finite() {
            return Err(Error::invalid("trajectory needs links and a positive frame rate"));
        }
        if data.is_empty() || data.len() % num_links != 0 {
            return Err(Error::Shape {
                expected: format!("a positive multiple of {num_links} points"),
                actual: data.len().to_string(),
            });
        }
        Ok(LinkTrajectory {
            num_links,
            frame_rate,
            data,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.num_links
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn duration(&self) -> f64 {
        (self.num_frames() - 1) as f64 / self.frame_rate
    }

    pub fn frame(&self, t: usize) -> &[Vec3] {
        &self.data[t * self.num_links..(t + 1) * self.num_links]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[Vec3]> {
        self.data.chunks_exact(self.num_links)
    }

    pub fn tip(&self, t: usize) -> Vec3 {
        self.frame(t)[self.num_links - 1]
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    /// Appends the frames of `other` (same link count and rate).
    pub fn extend(&mut self, other: &LinkTrajectory) -> Result<()> {
        if other.num_links != self.num_links || other.frame_rate != self.frame_rate {
            return Err(Error::invalid("cannot join trajectories of different shape"));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn max_strain(&self, rest: f64) -> f64 {
        self.frames()
            .map(|f| {
                f.windows(2)
                    .map(|w| ((w[1] - w[0]).norm() / rest - 1.0).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Runs the rope under `motion` and records `frames` snapshots at `record_rate`.
///
/// The state is advanced in substeps of `dt / substeps`. A frame that falls
/// between substeps is captured by a partial substep on a copy of the state,
/// so every snapshot satisfies the segment constraints and the boundary
/// condition at its exact time. Motion beyond the last base sample holds the
/// final pose.
pub fn simulate(
    params: &RopeParams,
    motion: &BaseMotion,
    scene: &SceneGeometry,
    config: &SimConfig,
    record_rate: f64,
    frames: usize,
) -> Result<LinkTrajectory> {
    if !(record_rate > 0.0) || frames == 0 {
        return Err(Error::invalid("record rate and frame count must be positive"));
    }
    let initial = build_rope_with_root(params, &motion.pose_at(0.0), config.root)?;
    let mut sim = Simulator::new(params, config, scene, initial)?;
    record(&mut sim, motion, record_rate, frames)
}

/// Records from an existing simulator; see [`simulate`].
pub fn record(
    sim: &mut Simulator,
    motion: &BaseMotion,
    record_rate: f64,
    frames: usize,
) -> Result<LinkTrajectory> {
    let n = sim.state().positions.len();
    let h = sim.substep_len();
    let t0 = sim.state().time;
    let mut data = Vec::with_capacity(frames * n);
    let mut taken: u64 = 0;
    for k in 0..frames {
        let t_frame = t0 + k as f64 / record_rate;
        loop {
            let t_next = t0 + (taken + 1) as f64 * h;
            if t_next > t_frame + 1e-12 {
                break;
            }
            sim.substep(h, Some(&motion.pose_at(t_next)))?;
            taken += 1;
        }
        let t_now = t0 + taken as f64 * h;
        let rem = t_frame - t_now;
        if rem > 1e-9 {
            let mut probe = sim.clone();
            probe.substep(rem, Some(&motion.pose_at(t_frame)))?;
            data.extend_from_slice(&probe.state().positions);
        } else {
            data.extend_from_slice(&sim.state().positions);
        }
    }
    LinkTrajectory::new(n, record_rate, data)
}

/// Per-frame distance from the last link to a target point.
#[derive(Debug, Clone, PartialEq)]
pub struct TipDistance {
    pub series: Vec<f64>,
    pub min: f64,
    pub argmin: usize,
}

/// Tip-to-target distance in every frame.
///
/// The minimum is taken over recorded frames only, so it can overshoot the
/// continuous-time minimum when the tip moves fast between frames.
pub fn tip_distance_profile(traj: &LinkTrajectory, target: &Vec3) -> TipDistance {
    let series: Vec<f64> = (0..traj.num_frames())
        .map(|t| (traj.tip(t) - target).norm())
        .collect();
    let (argmin, min) = series
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
    TipDistance {
        series,
        min,
        argmin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub frame: usize,
    pub link: usize,
    pub surface: SurfaceId,
}

/// Contact slack: a sphere within this distance of a surface counts as touching.
pub const CONTACT_TOLERANCE: f64 = 1e-4;

/// Frames in which a link sphere touches or penetrates a solid surface.
pub fn contact_events(
    traj: &LinkTrajectory,
    scene: &SceneGeometry,
    radii: &[f64],
) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    for (frame, links) in traj.frames().enumerate() {
        for (link, p) in links.iter().enumerate() {
            let r = radii.get(link).copied().unwrap_or(0.0) + CONTACT_TOLERANCE;
            if let Some(g) = scene.ground_height {
                if p.y - g <= r {
                    events.push(ContactEvent {
                        frame,
                        link,
                        surface: SurfaceId::Ground,
                    });
                }
            }
            for (id, b) in scene.solids() {
                if b.signed_distance(p).0 <= r {
                    events.push(ContactEvent {
                        frame,
                        link,
                        surface: id,
                    });
                }
            }
        }
    }
    events
}
