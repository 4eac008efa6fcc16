//! From 3D link trajectories to identifier inputs: pinhole projection,
//! first-link normalization, segment angles, and smoothed derivatives.
//!
//! Image coordinates follow the usual convention: `u` grows to the right,
//! `v` grows downward. A rope hanging straight down therefore has segment
//! angles of `+π/2`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{LinkTrajectory, Vec3};

/// Fixed number of frames in a feature tensor.
pub const T_MAX: usize = 420;
/// Point slots in a feature tensor.
pub const FEATURE_POINTS: usize = 24;

pub const FEATURE_MAGIC: &[u8; 4] = b"WAGF";
const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: [f64; 3],
    pub lookat: [f64; 3],
    pub up: [f64; 3],
    /// Pixels.
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    /// Distance from the camera to the wiggle plane, m.
    pub depth: f64,
}

impl Default for CameraModel {
    /// Faces the default arm's wiggle plane from 0.65 m, centred on the
    /// middle of a mid-length rope hanging from the home pose.
    fn default() -> Self {
        let lookat = [0.5622, 0.745, 0.0];
        CameraModel {
            position: [lookat[0], lookat[1], lookat[2] + 0.65],
            lookat,
            up: [0.0, 1.0, 0.0],
            focal: 700.0,
            width: 1280,
            height: 720,
            depth: 0.65,
        }
    }
}

impl CameraModel {
    pub fn check(&self) -> Result<()> {
        let all = self.position.iter().chain(&self.lookat).chain(&self.up);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("camera pose"));
        }
        if self.position == self.lookat {
            return Err(Error::invalid("camera position equals its look-at point"));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera needs a positive focal length and resolution"));
        }
        let (fwd, _, _) = self.basis_unchecked();
        if fwd.cross(&Vec3::from(self.up)).norm() < 1e-9 {
            return Err(Error::invalid("camera up vector is parallel to the view direction"));
        }
        Ok(())
    }

    fn basis_unchecked(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (Vec3::from(self.lookat) - Vec3::from(self.position)).normalize();
        let right = fwd.cross(&Vec3::from(self.up)).normalize();
        let down = fwd.cross(&right);
        (fwd, right, down)
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Pixel coordinates of a world point. No clipping to the image.
    pub fn project_point(&self, p: &Vec3) -> Result<[f64; 2]> {
        let (fwd, right, down) = self.basis_unchecked();
        let rel = p - Vec3::from(self.position);
        let z = rel.dot(&fwd);
        if !(z > 1e-9) {
            return Err(Error::invalid("point is at or behind the camera plane"));
        }
        let (cx, cy) = self.principal_point();
        Ok([
            cx + self.focal * rel.dot(&right) / z,
            cy + self.focal * rel.dot(&down) / z,
        ])
    }
}

/// 2D point tracks over time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPoints {
    num_points: usize,
    frame_rate: f64,
    data: Vec<[f64; 2]>,
}

impl TrackedPoints {
    pub fn new(num_points: usize, frame_rate: f64, data: Vec<[f64; 2]>) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::invalid("tracking needs at least two points"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        if data.len() % num_points != 0 || data.len() / num_points < 2 {
            return Err(Error::Shape {
                expected: format!("at least two frames of {num_points} points"),
                actual: format!("{} points", data.len()),
            });
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tracked point"));
        }
        Ok(TrackedPoints {
            num_points,
            frame_rate,
            data,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.num_points
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame(&self, t: usize) -> &[[f64; 2]] {
        &self.data[t * self.num_points..(t + 1) * self.num_points]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[[f64; 2]]> {
        self.data.chunks_exact(self.num_points)
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    /// Resamples every frame to `n` points spaced evenly along the point
    /// index, interpolating linearly between neighbours.
    pub fn resample_points(&self, n: usize) -> Result<TrackedPoints> {
        if n < 2 {
            return Err(Error::invalid("resampling needs at least two points"));
        }
        let m = self.num_points;
        let mut data = Vec::with_capacity(self.num_frames() * n);
        for f in self.frames() {
            for k in 0..n {
                let x = k as f64 * (m - 1) as f64 / (n - 1) as f64;
                let i = (x.floor() as usize).min(m - 2);
                let a = x - i as f64;
                data.push([
                    f[i][0] + a * (f[i + 1][0] - f[i][0]),
                    f[i][1] + a * (f[i + 1][1] - f[i][1]),
                ]);
            }
        }
        TrackedPoints::new(n, self.frame_rate, data)
    }

    /// Writes `frame,point,u,v`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "point", "u", "v"])?;
        for (t, f) in self.frames().enumerate() {
            for (i, p) in f.iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `frame,point,u,v` rows. Frames must run 0..T without gaps and
    /// every frame must hold the same points 0..N.
    pub fn read_csv(input: impl Read, frame_rate: f64) -> Result<TrackedPoints> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["frame", "point", "u", "v"] {
            return Err(Error::format("tracked csv", "header must be frame,point,u,v"));
        }
        let mut rows: Vec<(usize, usize, [f64; 2])> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::format("tracked csv", format!("row {}: {what}", line + 2));
            if rec.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let frame: usize = rec[0].parse().map_err(|_| bad("bad frame index"))?;
            let point: usize = rec[1].parse().map_err(|_| bad("bad point index"))?;
            let u: f64 = rec[2].parse().map_err(|_| bad("bad u"))?;
            let v: f64 = rec[3].parse().map_err(|_| bad("bad v"))?;
            if !u.is_finite() || !v.is_finite() {
                return Err(bad("non-finite coordinate"));
            }
            rows.push((frame, point, [u, v]));
        }
        if rows.is_empty() {
            return Err(Error::format("tracked csv", "no rows"));
        }
        rows.sort_by_key(|r| (r.0, r.1));
        let n_frames = rows.last().map(|r| r.0 + 1).unwrap_or(0);
        if rows.len() % n_frames != 0 {
            return Err(Error::format("tracked csv", "inconsistent point counts"));
        }
        let n_points = rows.len() / n_frames;
        for (k, (frame, point, _)) in rows.iter().enumerate() {
            if *frame != k / n_points {
                return Err(Error::format("tracked csv", format!("frame {} is missing or ragged", k / n_points)));
            }
            if *point != k % n_points {
                return Err(Error::format(
                    "tracked csv",
                    format!("frame {frame}: points must be 0..{n_points} without repeats"),
                ));
            }
        }
        TrackedPoints::new(n_points, frame_rate, rows.into_iter().map(|r| r.2).collect())
    }
}

/// Projects every link center of every frame.
pub fn project(camera: &CameraModel, traj: &LinkTrajectory) -> Result<TrackedPoints> {
    camera.check()?;
    let data = traj
        .data()
        .iter()
        .map(|p| camera.project_point(p))
        .collect::<Result<Vec<_>>>()?;
    TrackedPoints::new(traj.num_links(), traj.frame_rate(), data)
}

/// Discrete Gaussian at integer offsets, normalized to sum to one.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<Vec<f64>> {
    if size % 2 == 0 {
        return Err(Error::invalid("kernel size must be odd"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// Convolves with `kernel`, reflecting the series at both ends
/// (`c b a | a b c`).
pub fn smooth(series: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = series.len() as isize;
    if n == 0 {
        return Vec::new();
    }
    let half = (kernel.len() / 2) as isize;
    let at = |mut i: isize| {
        // Reflect until inside; handles kernels longer than the series.
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return series[i as usize];
            }
        }
    };
    (0..n)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * at(t + k as isize - half))
                .sum()
        })
        .collect()
}

/// Removes 2π jumps: each successive difference is mapped into (−π, π].
pub fn unwrap_angles(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    for (i, &a) in series.iter().enumerate() {
        if i > 0 {
            let prev = series[i - 1];
            let d = a - prev;
            let wrapped = d - 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            // floor maps d = π to −π; keep the closed upper end.
            let wrapped = if wrapped == -PI { PI } else { wrapped };
            offset += wrapped - d;
        }
        out.push(a + offset);
    }
    out
}

/// Centered differences (one-sided at the ends), scaled by `rate`.
pub fn finite_difference(series: &[f64], rate: f64) -> Vec<f64> {
    let n = series.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|t| {
                if t == 0 {
                    (series[1] - series[0]) * rate
                } else if t == n - 1 {
                    (series[n - 1] - series[n - 2]) * rate
                } else {
                    (series[t + 1] - series[t - 1]) * rate / 2.0
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Positions and angles only.
    Deployment,
    /// Positions, angles, and angular velocity.
    Velocity,
    /// Positions, angles, angular velocity, and angular acceleration.
    Full,
}

impl FeatureSet {
    pub fn per_point(self) -> usize {
        match self {
            FeatureSet::Deployment => 3,
            FeatureSet::Velocity => 4,
            FeatureSet::Full => 5,
        }
    }

    fn code(self) -> u32 {
        match self {
            FeatureSet::Deployment => 0,
            FeatureSet::Velocity => 1,
            FeatureSet::Full => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(FeatureSet::Deployment),
            1 => Some(FeatureSet::Velocity),
            2 => Some(FeatureSet::Full),
            _ => None,
        }
    }
}

impl PointSampling {
    fn code(self) -> u32 {
        match self {
            PointSampling::Resample => 0,
            PointSampling::Pad => 1,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(PointSampling::Resample),
            1 => Some(PointSampling::Pad),
            _ => None,
        }
    }
}

/// How tracks with a different point count fill the tensor's point slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSampling {
    /// Interpolate points evenly spaced along the point index, so every
    /// slot follows a fixed fraction of the rope.
    Resample,
    /// Keep the tracked points and zero the unused slots.
    Pad,
}

/// Shape and scaling of a feature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub t_max: usize,
    pub points: usize,
    pub sampling: PointSampling,
    pub feature_set: FeatureSet,
    /// Pixel offsets are divided by this (the image height).
    pub pixel_scale: f64,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout {
            t_max: T_MAX,
            points: FEATURE_POINTS,
            sampling: PointSampling::Resample,
            feature_set: FeatureSet::Deployment,
            pixel_scale: 720.0,
        }
    }
}

impl FeatureLayout {
    pub fn with_set(feature_set: FeatureSet) -> Self {
        FeatureLayout {
            feature_set,
            ..FeatureLayout::default()
        }
    }

    pub fn channels(&self) -> usize {
        self.points * self.feature_set.per_point()
    }
}

/// Frame-major grid of `t_max × channels` values. Channels are grouped per
/// point as `[x, y, θ, (θ̇), (θ̈)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    layout: FeatureLayout,
    valid_frames: usize,
    num_points: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn zeros(layout: FeatureLayout) -> Self {
        FeatureTensor {
            layout,
            valid_frames: 0,
            num_points: 0,
            data: vec![0.0; layout.t_max * layout.channels()],
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    pub fn t_max(&self) -> usize {
        self.layout.t_max
    }

    pub fn valid_frames(&self) -> usize {
        self.valid_frames
    }

    /// Points that carry data; later point slots are zero.
    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, t: usize, c: usize) -> f32 {
        self.data[t * self.channels() + c]
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let c = self.channels();
        &self.data[t * c..(t + 1) * c]
    }

    /// Sets every channel of the given frames to zero.
    pub fn zero_frames(&mut self, frames: std::ops::Range<usize>) {
        let c = self.channels();
        let end = frames.end.min(self.layout.t_max);
        for v in &mut self.data[frames.start.min(end) * c..end * c] {
            *v = 0.0;
        }
    }

    /// Keeps only the first `frames` frames (at least one).
    pub fn truncated(&self, frames: usize) -> FeatureTensor {
        let keep = frames.clamp(1, self.valid_frames.max(1));
        let mut out = self.clone();
        let c = self.channels();
        for v in &mut out.data[keep * c..] {
            *v = 0.0;
        }
        out.valid_frames = keep.min(self.valid_frames);
        out
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        out.write_all(FEATURE_MAGIC)?;
        for v in [
            FEATURE_VERSION,
            self.layout.t_max as u32,
            self.layout.points as u32,
            self.layout.sampling.code(),
            self.layout.feature_set.code(),
            self.valid_frames as u32,
            self.num_points as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.layout.pixel_scale.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<FeatureTensor> {
        let bad = |why: &str| Error::format("WAGF", why);
        let mut head = [0u8; 4 + 7 * 4 + 8];
        input
            .read_exact(&mut head)
            .map_err(|_| bad("truncated header"))?;
        if &head[..4] != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let word = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != FEATURE_VERSION {
            return Err(bad("unsupported version"));
        }
        let t_max = word(1) as usize;
        let points = word(2) as usize;
        let sampling = PointSampling::from_code(word(3)).ok_or_else(|| bad("unknown point sampling"))?;
        let feature_set = FeatureSet::from_code(word(4)).ok_or_else(|| bad("unknown feature set"))?;
        let valid_frames = word(5) as usize;
        let num_points = word(6) as usize;
        let pixel_scale = f64::from_le_bytes(head[32..40].try_into().unwrap());
        if t_max == 0 || points == 0 || valid_frames > t_max || num_points > points {
            return Err(bad("inconsistent dimensions"));
        }
        if !(pixel_scale > 0.0 && pixel_scale.is_finite()) {
            return Err(bad("bad pixel scale"));
        }
        let layout = FeatureLayout {
            t_max,
            points,
            sampling,
            feature_set,
            pixel_scale,
        };
        let count = t_max
            .checked_mul(layout.channels())
            .and_then(|c| c.checked_mul(4))
            .filter(|b| *b <= 1 << 30)
            .ok_or_else(|| bad("grid too large"))?;
        let mut buf = Vec::new();
        input
            .take(count as u64 + 1)
            .read_to_end(&mut buf)
            .map_err(|_| bad("read failed"))?;
        if buf.len() != count {
            return Err(bad("payload length does not match header"));
        }
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        let c = layout.channels();
        if data[valid_frames * c..].iter().any(|v| *v != 0.0) {
            return Err(bad("data beyond valid frames"));
        }
        Ok(FeatureTensor {
            layout,
            valid_frames,
            num_points,
            data,
        })
    }
}

/// Velocity smoothing kernel parameters.
const VEL_SIGMA: f64 = 1.0;
const VEL_SIZE: usize = 5;
const ACC_SIGMA: f64 = 1.5;
const ACC_SIZE: usize = 7;

/// Per-point angle series: segment direction from the previous point,
/// measured from the image x axis and unwrapped over time. Point 0 is 0.
pub fn segment_angles(tracked: &TrackedPoints) -> Vec<Vec<f64>> {
    let n = tracked.num_points();
    let mut out = vec![vec![0.0; tracked.num_frames()]; n];
    for i in 1..n {
        let raw: Vec<f64> = tracked
            .frames()
            .map(|f| (f[i][1] - f[i - 1][1]).atan2(f[i][0] - f[i - 1][0]))
            .collect();
        out[i] = unwrap_angles(&raw);
    }
    out
}

/// Smoothed time derivative of [`segment_angles`], rad/s.
pub fn angular_velocities(tracked: &TrackedPoints) -> Result<Vec<Vec<f64>>> {
    let kv = gaussian_kernel(VEL_SIGMA, VEL_SIZE)?;
    Ok(segment_angles(tracked)
        .iter()
        .map(|a| smooth(&finite_difference(a, tracked.frame_rate()), &kv))
        .collect())
}

/// Builds the identifier input from point tracks.
pub fn extract_features(tracked: &TrackedPoints, layout: &FeatureLayout) -> Result<FeatureTensor> {
    if tracked.num_points() < 2 {
        return Err(Error::invalid("feature extraction needs at least two points"));
    }
    let resampled;
    let tracked = match layout.sampling {
        PointSampling::Resample if tracked.num_points() != layout.points => {
            resampled = tracked.resample_points(layout.points)?;
            &resampled
        }
        _ => tracked,
    };
    let n = tracked.num_points();
    if n > layout.points {
        return Err(Error::Shape {
            expected: format!("at most {} points", layout.points),
            actual: n.to_string(),
        });
    }
    let frames = tracked.num_frames().min(layout.t_max);
    let per = layout.feature_set.per_point();
    let c = layout.channels();
    let rate = tracked.frame_rate();
    let angles = segment_angles(tracked);
    let (vel, acc) = match layout.feature_set {
        FeatureSet::Deployment => (None, None),
        set => {
            let kv = gaussian_kernel(VEL_SIGMA, VEL_SIZE)?;
            let ka = gaussian_kernel(ACC_SIGMA, ACC_SIZE)?;
            let raw_vel: Vec<Vec<f64>> = angles.iter().map(|a| finite_difference(a, rate)).collect();
            let vel: Vec<Vec<f64>> = raw_vel.iter().map(|v| smooth(v, &kv)).collect();
            let acc = (set == FeatureSet::Full).then(|| {
                raw_vel
                    .iter()
                    .map(|v| smooth(&finite_difference(v, rate), &ka))
                    .collect::<Vec<_>>()
            });
            (Some(vel), acc)
        }
    };
    let mut out = FeatureTensor::zeros(*layout);
    out.valid_frames = frames;
    out.num_points = n;
    let scale = layout.pixel_scale;
    for t in 0..frames {
        let f = tracked.frame(t);
        let row = &mut out.data[t * c..(t + 1) * c];
        for i in 0..n {
            let cell = &mut row[i * per..(i + 1) * per];
            cell[0] = ((f[i][0] - f[0][0]) / scale) as f32;
            cell[1] = ((f[i][1] - f[0][1]) / scale) as f32;
            cell[2] = angles[i][t] as f32;
            if let Some(v) = &vel {
                cell[3] = v[i][t] as f32;
            }
            if let Some(a) = &acc {
                cell[4] = a[i][t] as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis_camera() -> CameraModel {
        CameraModel {
            position: [0.0, 0.0, 0.65],
            lookat: [0.0, 0.0, 0.0],
            ..CameraModel::default()
        }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = axis_camera();
        let p = cam.project_point(&Vec3::new(0.0, 0.0, -0.3)).unwrap();
        assert_eq!(p, [640.0, 360.0]);
    }

    #[test]
    fn lateral_offset_matches_pinhole_formula() {
        let cam = axis_camera();
        let p = cam.project_point(&Vec3::new(0.1, 0.0, 0.0)).unwrap();
        assert!((p[0] - 640.0 - 700.0 * 0.1 / 0.65).abs() < 1e-9);
        assert!((p[0] - 640.0 - 107.69).abs() < 0.01);
        assert!((p[1] - 360.0).abs() < 1e-9);
        // World up is image up.
        let q = cam.project_point(&Vec3::new(0.0, 0.1, 0.0)).unwrap();
        assert!(q[1] < 360.0);
    }

    #[test]
    fn focal_length_scales_offsets() {
        let a = axis_camera();
        let b = CameraModel {
            focal: 1400.0,
            ..axis_camera()
        };
        let x = Vec3::new(0.05, -0.07, 0.1);
        let pa = a.project_point(&x).unwrap();
        let pb = b.project_point(&x).unwrap();
        assert!(((pb[0] - 640.0) - 2.0 * (pa[0] - 640.0)).abs() < 1e-9);
        assert!(((pb[1] - 360.0) - 2.0 * (pa[1] - 360.0)).abs() < 1e-9);
    }

    #[test]
    fn points_behind_camera_are_rejected() {
        let cam = axis_camera();
        assert!(cam.project_point(&Vec3::new(0.0, 0.0, 0.65)).is_err());
        assert!(cam.project_point(&Vec3::new(0.0, 0.0, 1.0)).is_err());
        let traj = LinkTrajectory::new(2, 60.0, vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0)]).unwrap();
        assert!(project(&cam, &traj).is_err());
    }

    #[test]
    fn degenerate_cameras_fail_validation() {
        let mut cam = axis_camera();
        cam.lookat = cam.position;
        assert!(cam.check().is_err());
        let mut cam = axis_camera();
        cam.focal = 0.0;
        assert!(cam.check().is_err());
        let mut cam = axis_camera();
        cam.up = [0.0, 0.0, 1.0];
        assert!(cam.check().is_err());
    }

    #[test]
    fn kernel_properties() {
        let k = gaussian_kernel(1.0, 5).unwrap();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..5 {
            assert_eq!(k[i], k[4 - i]);
        }
        assert!(k[2] > k[1] && k[1] > k[0]);
        let wide = gaussian_kernel(100.0, 5).unwrap();
        assert!(wide.iter().all(|w| (w - 0.2).abs() < 1e-3));
        assert!(gaussian_kernel(1.0, 4).is_err());
        assert_eq!(gaussian_kernel(1.0, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn unwrap_examples() {
        let u = unwrap_angles(&[3.1, -3.1]);
        assert_eq!(u[0], 3.1);
        assert!((u[1] - (2.0 * PI - 3.1)).abs() < 1e-12);
        assert!((u[1] - 3.183).abs() < 1e-3);
        let smooth: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        assert_eq!(unwrap_angles(&smooth), smooth);
    }

    fn rope_frames(frames: usize, n: usize, f: impl Fn(usize, usize) -> [f64; 2]) -> TrackedPoints {
        let data = (0..frames).flat_map(|t| (0..n).map(move |i| (t, i))).map(|(t, i)| f(t, i)).collect();
        TrackedPoints::new(n, 60.0, data).unwrap()
    }

    #[test]
    fn first_point_channel_is_zero_and_padding_is_zero() {
        let tr = rope_frames(30, 22, |t, i| [100.0 + 3.0 * i as f64 + t as f64, 50.0 + 10.0 * i as f64]);
        let layout = FeatureLayout {
            points: 26,
            sampling: PointSampling::Pad,
            ..FeatureLayout::with_set(FeatureSet::Full)
        };
        let f = extract_features(&tr, &layout).unwrap();
        assert_eq!(f.valid_frames(), 30);
        assert_eq!(f.num_points(), 22);
        for t in 0..f.t_max() {
            for c in 0..5 {
                assert_eq!(f.get(t, c), 0.0);
            }
            for c in 22 * 5..f.channels() {
                assert_eq!(f.get(t, c), 0.0);
            }
        }
        for t in 30..f.t_max() {
            assert!(f.row(t).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn straight_ropes_have_axis_angles() {
        let flat = rope_frames(10, 20, |_, i| [10.0 * i as f64, 300.0]);
        let f = extract_features(&flat, &FeatureLayout::default()).unwrap();
        for t in 0..10 {
            for i in 0..20 {
                assert_eq!(f.get(t, i * 3 + 2), 0.0);
            }
        }
        let hanging = rope_frames(10, 20, |_, i| [640.0, 100.0 + 10.0 * i as f64]);
        let f = extract_features(&hanging, &FeatureLayout::default()).unwrap();
        for t in 0..10 {
            for i in 1..20 {
                assert!((f.get(t, i * 3 + 2) as f64 - PI / 2.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_rotation_gives_constant_rate() {
        let omega = 1.3;
        let tr = rope_frames(200, 20, |t, i| {
            let a = 0.2 + omega * t as f64 / 60.0;
            [500.0 + 12.0 * i as f64 * a.cos(), 200.0 + 12.0 * i as f64 * a.sin()]
        });
        let f = extract_features(&tr, &FeatureLayout::with_set(FeatureSet::Full)).unwrap();
        for t in 5..195 {
            for i in 1..20 {
                let w = f.get(t, i * 5 + 3) as f64;
                assert!(((w - omega) / omega).abs() < 0.02, "frame {t} point {i}: {w}");
                assert!((f.get(t, i * 5 + 4) as f64).abs() < 0.05);
            }
        }
    }

    #[test]
    fn deployment_set_has_no_derivatives() {
        let tr = rope_frames(12, 21, |t, i| [i as f64 * 5.0, (t * i) as f64]);
        let d = extract_features(&tr, &FeatureLayout::default()).unwrap();
        assert_eq!(d.channels(), FEATURE_POINTS * 3);
        let full = extract_features(&tr, &FeatureLayout::with_set(FeatureSet::Full)).unwrap();
        assert_eq!(full.channels(), FEATURE_POINTS * 5);
        for t in 0..12 {
            for i in 0..21 {
                for k in 0..3 {
                    assert_eq!(d.get(t, i * 3 + k), full.get(t, i * 5 + k));
                }
            }
        }
    }

    #[test]
    fn too_many_points_or_frames() {
        let padded = FeatureLayout {
            points: 26,
            sampling: PointSampling::Pad,
            ..FeatureLayout::default()
        };
        let tr = rope_frames(500, 27, |_, i| [i as f64, 0.0]);
        assert!(extract_features(&tr, &padded).is_err());
        let tr = rope_frames(500, 20, |t, i| [i as f64, t as f64]);
        let f = extract_features(&tr, &padded).unwrap();
        assert_eq!(f.valid_frames(), T_MAX);
        assert_eq!(f.num_points(), 20);
        assert!(f.row(0)[20 * 3..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resampling_fills_every_slot_along_the_rope() {
        // Straight horizontal rope with unit spacing: slot k sits at k·(n−1)/(K−1).
        for n in [20, 24, 26] {
            let tr = rope_frames(30, n, |_, i| [i as f64 * 10.0, 5.0]);
            let f = extract_features(&tr, &FeatureLayout::default()).unwrap();
            assert_eq!(f.num_points(), FEATURE_POINTS);
            let row = f.row(0);
            for k in 0..FEATURE_POINTS {
                let want = k as f64 * (n - 1) as f64 / (FEATURE_POINTS - 1) as f64 * 10.0 / 720.0;
                assert!((row[k * 3] as f64 - want).abs() < 1e-6, "n={n} k={k}");
            }
        }
        assert!(TrackedPoints::new(1, 60.0, vec![[0.0, 0.0]; 4]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let tr = rope_frames(400, 22, |t, i| [t as f64 * 0.5 + 0.25, i as f64 * 1.5 - 3.0]);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = TrackedPoints::read_csv(buf.as_slice(), 60.0).unwrap();
        assert_eq!(back, tr);
        assert_eq!(back.num_frames(), 400);
        assert_eq!(back.num_points(), 22);

        let missing = "frame,point,u,v\n0,0,1,1\n0,1,2,2\n2,0,1,1\n2,1,2,2\n";
        assert!(TrackedPoints::read_csv(missing.as_bytes(), 60.0).is_err());
        let ragged = "frame,point,u,v\n0,0,1,1\n0,1,2,2\n1,0,1,1\n";
        assert!(TrackedPoints::read_csv(ragged.as_bytes(), 60.0).is_err());
        let junk = "frame,point,u,v\n0,0,a,1\n";
        assert!(TrackedPoints::read_csv(junk.as_bytes(), 60.0).is_err());
        let header = "f,p,x,y\n0,0,1,1\n";
        assert!(TrackedPoints::read_csv(header.as_bytes(), 60.0).is_err());
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let tr = rope_frames(40, 20, |t, i| [(t + i) as f64, (t * i) as f64 * 0.1]);
        let f = extract_features(&tr, &FeatureLayout::with_set(FeatureSet::Velocity)).unwrap();
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WAGF");
        assert_eq!(FeatureTensor::read(buf.as_slice()).unwrap(), f);
        assert!(FeatureTensor::read(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(FeatureTensor::read(extra.as_slice()).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(FeatureTensor::read(magic.as_slice()).is_err());
    }

    #[test]
    fn resampling_keeps_endpoints() {
        let tr = rope_frames(3, 21, |t, i| [i as f64 * 2.0, t as f64]);
        let r = tr.resample_points(11).unwrap();
        assert_eq!(r.num_points(), 11);
        for t in 0..3 {
            assert_eq!(r.frame(t)[0], tr.frame(t)[0]);
            assert_eq!(r.frame(t)[10], tr.frame(t)[20]);
            assert!((r.frame(t)[5][0] - 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hanging_sim_rope_projects_inside_default_view() {
        let cam = CameraModel::default();
        let top = Vec3::new(0.5622, 1.019, 0.0);
        let pts: Vec<Vec3> = (0..23).map(|i| top - Vec3::new(0.0, 0.025 * i as f64, 0.0)).collect();
        let traj = LinkTrajectory::new(23, 60.0, [pts.clone(), pts].concat()).unwrap();
        let tr = project(&cam, &traj).unwrap();
        for p in tr.data() {
            assert!(p[0] >= 0.0 && p[0] <= 1280.0 && p[1] >= 0.0 && p[1] <= 720.0);
        }
    }

    proptest! {
        #[test]
        fn translation_invariance(dx in -500.0f64..500.0, dy in -500.0f64..500.0, seed in 0u64..1000) {
            let tr = rope_frames(20, 21, |t, i| {
                let s = (seed as f64 + t as f64 * 0.37 + i as f64 * 1.3).sin();
                [300.0 + 8.0 * i as f64 + 4.0 * s, 200.0 + 6.0 * i as f64 + 3.0 * s]
            });
            let mut moved = tr.clone();
            for (k, p) in moved.data_mut().iter_mut().enumerate() {
                let t = k / 21;
                p[0] += dx + t as f64;
                p[1] += dy - 2.0 * t as f64;
            }
            let layout = FeatureLayout::with_set(FeatureSet::Full);
            let a = extract_features(&tr, &layout).unwrap();
            let b = extract_features(&moved, &layout).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-4);
            }
        }

        #[test]
        fn unwrapped_steps_are_in_range(v in proptest::collection::vec(-10.0f64..10.0, 2..60)) {
            let u = unwrap_angles(&v);
            for w in u.windows(2) {
                let d = w[1] - w[0];
                prop_assert!(d > -PI - 1e-9 && d <= PI + 1e-9);
            }
            for (a, b) in u.iter().zip(&v) {
                let k = (a - b) / (2.0 * PI);
                prop_assert!((k - k.round()).abs() < 1e-9);
            }
        }
    }
}
