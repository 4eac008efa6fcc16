use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Aabb { min, max };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.max[k] > self.min[k]) {
                return Err(Error::invalid(format!(
                    "box extent along axis {k} must be positive: [{}, {}]",
                    self.min[k], self.max[k]
                )));
            }
        }
        Ok(())
    }

    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    /// Signed distance and outward normal for a point near or inside the box.
    pub(crate) fn signed_distance(&self, p: &Vec3) -> (f64, Vec3) {
        if !self.contains(p) {
            let q = self.closest_point(p);
            let d = p - q;
            let n = d.norm();
            return (n, d / n);
        }
        // Inside: exit through the nearest face.
        let mut best = (f64::INFINITY, Vec3::zeros());
        for k in 0..3 {
            let lo = p[k] - self.min[k];
            let hi = self.max[k] - p[k];
            if lo < best.0 {
                let mut n = Vec3::zeros();
                n[k] = -1.0;
                best = (lo, n);
            }
            if hi < best.0 {
                let mut n = Vec3::zeros();
                n[k] = 1.0;
                best = (hi, n);
            }
        }
        (-best.0, best.1)
    }
}

/// Static geometry the rope can touch. World frame is y-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    /// Height of the ground plane; `None` disables it.
    pub ground_height: Option<f64>,
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub wall: Option<Aabb>,
    #[serde(default)]
    pub board: Option<Aabb>,
    #[serde(default)]
    pub keep_out: Vec<Aabb>,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        SceneGeometry {
            ground_height: Some(0.0),
            target: None,
            wall: None,
            board: None,
            keep_out: Vec::new(),
        }
    }
}

/// Identifies which surface a contact event refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceId {
    Ground,
    Wall,
    Board,
}

impl SceneGeometry {
    /// Scene with no surfaces at all.
    pub fn empty() -> Self {
        SceneGeometry {
            ground_height: None,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        for b in self.wall.iter().chain(self.board.iter()).chain(&self.keep_out) {
            b.check()?;
        }
        Ok(())
    }

    pub fn has_surfaces(&self) -> bool {
        self.ground_height.is_some() || self.wall.is_some() || self.board.is_some()
    }

    /// Solid surfaces the rope collides with. Keep-out boxes are scored, not solid.
    pub(crate) fn solids(&self) -> impl Iterator<Item = (SurfaceId, &Aabb)> {
        self.wall
            .iter()
            .map(|b| (SurfaceId::Wall, b))
            .chain(self.board.iter().map(|b| (SurfaceId::Board, b)))
    }

    /// Mirror image through the x = 0 plane.
    pub fn mirrored_x(&self) -> Self {
        let flip = |b: &Aabb| Aabb {
            min: [-b.max[0], b.min[1], b.min[2]],
            max: [-b.min[0], b.max[1], b.max[2]],
        };
        SceneGeometry {
            ground_height: self.ground_height,
            target: self.target.map(|t| [-t[0], t[1], t[2]]),
            wall: self.wall.as_ref().map(flip),
            board: self.board.as_ref().map(flip),
            keep_out: self.keep_out.iter().map(flip).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_box_is_rejected() {
        assert!(Aabb::new([0.0, 0.0, 0.0], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn signed_distance_inside_and_out() {
        let b = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        let (d, n) = b.signed_distance(&Vec3::new(0.5, 0.9, 0.5));
        assert!((d + 0.1).abs() < 1e-12);
        assert_eq!(n, Vec3::new(0.0, 1.0, 0.0));
        let (d, n) = b.signed_distance(&Vec3::new(0.5, 1.3, 0.5));
        assert!((d - 0.3).abs() < 1e-12);
        assert_eq!(n, Vec3::new(0.0, 1.0, 0.0));
    }
}
