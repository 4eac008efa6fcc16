//! Time stepping for the particle chain.
//!
//! Each substep of length `h`:
//! 1. Velocities of the free links are advanced with a linearly implicit
//!    Euler step. Gravity and drag are explicit; the joint spring/damper
//!    terms enter the system matrix through `Wᵀ W`, where `W` maps link
//!    velocities to the relative angular velocity of the two segments
//!    meeting at a joint.
//! 2. Positions are predicted and projected back onto the segment-length
//!    manifold with Newton's method on the tridiagonal constraint system.
//! 3. Sphere contacts are resolved by projection with Coulomb friction,
//!    followed by a second constraint pass.
//! 4. Velocities are recomputed from the position change.

use nalgebra::Matrix3;

use super::banded::{solve_tridiagonal, BandedSpd};
use super::scene::{SceneGeometry, Vec3};
use super::{link_masses, BasePose, RopeState, SimConfig};
use crate::error::{Error, Result};
use crate::params::{simulable, RopeParams};

/// Absolute coordinate beyond which the state counts as diverged.
const DIVERGENCE_LIMIT: f64 = 100.0;
/// Relative constraint residual at which projection stops early.
const PROJECTION_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
struct Model {
    inv_mass: Vec<f64>,
    seg_len: f64,
    radii: Vec<f64>,
    /// ½ ρ C_d A per link.
    drag: Vec<f64>,
    stiffness: f64,
    damping: f64,
}

#[derive(Debug, Clone, Copy)]
enum Directions {
    Previous,
    Current,
}

#[derive(Debug, Clone)]
struct Scratch {
    band: BandedSpd,
    rhs: Vec<f64>,
    x_old: Vec<Vec3>,
    kin_vel: Vec<Vec3>,
    seg: Vec<Vec3>,
    dir: Vec<Vec3>,
    pred: Vec<Vec3>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    resid: Vec<f64>,
}

/// A rope plus the scene it lives in, advanced in place.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    scene: SceneGeometry,
    model: Model,
    state: RopeState,
    substeps_taken: u64,
    scratch: Scratch,
}

#[inline]
fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector taking the direction of `e1` onto the direction of `e2`.
#[inline]
pub(crate) fn bend_vector(e1: &Vec3, e2: &Vec3) -> (Vec3, f64) {
    let u1 = e1.normalize();
    let u2 = e2.normalize();
    let cr = u1.cross(&u2);
    let s = cr.norm();
    let c = u1.dot(&u2);
    let theta = s.atan2(c);
    let factor = if s > 1e-8 { theta / s } else { 1.0 + s * s / 6.0 };
    (cr * factor, theta)
}

impl Simulator {
    pub fn new(
        params: &RopeParams,
        config: &SimConfig,
        scene: &SceneGeometry,
        state: RopeState,
    ) -> Result<Self> {
        simulable(params)?;
        config.check()?;
        scene.check()?;
        let n = params.num_links;
        if state.positions.len() != n || state.velocities.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} links"),
                actual: format!("{} positions", state.positions.len()),
            });
        }
        let masses = link_masses(params, config.root);
        let inv_mass: Vec<f64> = masses
            .iter()
            .enumerate()
            .map(|(i, m)| if i < config.root.kinematic_links() { 0.0 } else { 1.0 / m })
            .collect();
        let seg_len = params.segment_length();
        let radii = params.link_radii();
        let half_rho = 0.5 * config.air_density;
        let mut drag: Vec<f64> = (0..n)
            .map(|_| half_rho * config.rope_drag_coefficient * 2.0 * params.rope_radius * seg_len)
            .collect();
        drag[n - 1] += half_rho
            * config.lead_drag_coefficient
            * std::f64::consts::PI
            * params.lead_radius.powi(2);

        let n_free = n - config.root.kinematic_links().min(n);
        let scratch = Scratch {
            band: BandedSpd::new(3 * n_free, 8),
            rhs: vec![0.0; 3 * n_free],
            x_old: vec![Vec3::zeros(); n],
            kin_vel: vec![Vec3::zeros(); n],
            seg: vec![Vec3::zeros(); n],
            dir: vec![Vec3::zeros(); n],
            pred: vec![Vec3::zeros(); n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            resid: vec![0.0; n],
        };
        let mut state = state;
        state.masses = masses;
        Ok(Simulator {
            config: config.clone(),
            scene: scene.clone(),
            model: Model {
                inv_mass,
                seg_len,
                radii,
                drag,
                stiffness: params.ball_stiffness,
                damping: params.ball_damping,
            },
            state,
            substeps_taken: 0,
            scratch,
        })
    }

    pub fn state(&self) -> &RopeState {
        &self.state
    }

    pub fn into_state(self) -> RopeState {
        self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn substep_len(&self) -> f64 {
        self.config.dt / self.config.substeps as f64
    }

    /// Advances by `config.dt`, moving the attachment linearly from its
    /// current pose to `base`.
    pub fn step(&mut self, base: &BasePose) -> Result<()> {
        let start = self.current_base();
        let n = self.config.substeps;
        let h = self.substep_len();
        for k in 1..=n {
            let a = k as f64 / n as f64;
            let pose = start.lerp(base, a);
            self.substep(h, Some(&pose))?;
        }
        Ok(())
    }

    /// Attachment pose implied by the current state.
    pub fn current_base(&self) -> BasePose {
        let p = &self.state.positions;
        let dir = if p.len() > 1 {
            (p[1] - p[0]).normalize()
        } else {
            Vec3::new(0.0, -1.0, 0.0)
        };
        BasePose {
            position: p[0],
            direction: dir,
        }
    }

    /// One substep of length `h`. `base` is the attachment pose at the end
    /// of the substep; it is ignored for free ropes.
    pub fn substep(&mut self, h: f64, base: Option<&BasePose>) -> Result<()> {
        let n = self.state.positions.len();
        let n_kin = self.config.root.kinematic_links().min(n);
        self.scratch.x_old.copy_from_slice(&self.state.positions);

        // Kinematic boundary.
        if n_kin > 0 {
            let base = base.ok_or_else(|| Error::invalid("attached rope needs a base pose"))?;
            let mut targets = [base.position, base.position];
            if n_kin > 1 {
                targets[1] = base.position + base.direction * self.model.seg_len;
            }
            for (i, target) in targets.iter().take(n_kin).enumerate() {
                self.scratch.kin_vel[i] = (target - self.scratch.x_old[i]) / h;
            }
        }

        self.implicit_velocity_update(h, n_kin)?;

        // Predict.
        for i in 0..n {
            let v = if i < n_kin {
                self.scratch.kin_vel[i]
            } else {
                self.state.velocities[i]
            };
            self.state.positions[i] = self.scratch.x_old[i] + v * h;
        }

        self.project_segments(n_kin);
        if self.config.contacts && self.resolve_contacts(n_kin) {
            self.project_segments(n_kin);
        }

        self.substeps_taken += 1;
        let time = self.state.time + h;
        for i in 0..n {
            let x = self.state.positions[i];
            if !x.iter().all(|c| c.is_finite() && c.abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Diverged { time });
            }
            self.state.velocities[i] = (x - self.scratch.x_old[i]) / h;
        }
        self.state.time = time;
        Ok(())
    }

    fn implicit_velocity_update(&mut self, h: f64, n_kin: usize) -> Result<()> {
        let n = self.state.positions.len();
        let n_free = n - n_kin;
        if n_free == 0 {
            return Ok(());
        }
        let k = self.model.stiffness;
        let c = self.model.damping;
        let coef = h * c + h * h * k;
        let g = Vec3::new(0.0, -self.config.gravity, 0.0);
        let v = &self.state.velocities;
        let Scratch {
            band,
            rhs,
            x_old: x,
            kin_vel,
            ..
        } = &mut self.scratch;
        band.reset(3 * n_free);
        rhs.clear();
        rhs.resize(3 * n_free, 0.0);

        // Mass, gravity, drag.
        for i in n_kin..n {
            let m = 1.0 / self.model.inv_mass[i];
            let speed = v[i].norm();
            let d = self.model.drag[i] * speed;
            let row = 3 * (i - n_kin);
            // Explicit drag force -d v and its Jacobian d I cancel on the
            // right-hand side, leaving only M v + h m g.
            let f = m * v[i] + h * m * g;
            for a in 0..3 {
                band.add(row + a, row + a, m + h * d);
                rhs[row + a] += f[a];
            }
        }

        // Joints at interior links.
        if k > 0.0 || c > 0.0 {
            for j in 1..n - 1 {
                let e1 = x[j] - x[j - 1];
                let e2 = x[j + 1] - x[j];
                let p1 = skew(&e1) / e1.norm_squared();
                let p2 = skew(&e2) / e2.norm_squared();
                let w = [p1, -p1 - p2, p2];
                let links = [j - 1, j, j + 1];
                let (phi, _) = bend_vector(&e1, &e2);

                for (a, &la) in links.iter().enumerate() {
                    if la < n_kin {
                        continue;
                    }
                    let ra = 3 * (la - n_kin);
                    // Elastic force k W_a φ.
                    let f = w[a] * phi * (k * h);
                    for r in 0..3 {
                        rhs[ra + r] += f[r];
                    }
                    for (b, &lb) in links.iter().enumerate() {
                        // S_ab = W_aᵀ W_b = -W_a W_b (blocks are skew).
                        let s = -(w[a] * w[b]) * coef;
                        if lb < n_kin {
                            let kv = s * kin_vel[lb];
                            for r in 0..3 {
                                rhs[ra + r] -= kv[r];
                            }
                        } else if lb <= la {
                            let rb = 3 * (lb - n_kin);
                            for r in 0..3 {
                                for q in 0..3 {
                                    if ra + r >= rb + q {
                                        band.add(ra + r, rb + q, s[(r, q)]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        if !band.factor() {
            return Err(Error::Diverged {
                time: self.state.time,
            });
        }
        band.solve(rhs);
        for i in n_kin..n {
            let row = 3 * (i - n_kin);
            self.state.velocities[i] = Vec3::new(rhs[row], rhs[row + 1], rhs[row + 2]);
        }
        Ok(())
    }

    /// Restores every free segment to its rest length.
    ///
    /// Corrections first follow the segment directions of the previous
    /// configuration, which keeps the scheme symplectic. Near-straight ropes
    /// with a heavy tip can make that system singular; if it does not
    /// converge the prediction is restored and projected along the current
    /// constraint gradients instead.
    fn project_segments(&mut self, n_kin: usize) {
        let n = self.state.positions.len();
        if n < 2 || n - 1 == n_kin.saturating_sub(1) {
            return;
        }
        self.scratch.pred.copy_from_slice(&self.state.positions);
        if self.project_along(n_kin, Directions::Previous) {
            return;
        }
        self.state.positions.copy_from_slice(&self.scratch.pred);
        self.project_along(n_kin, Directions::Current);
    }

    /// Newton iterations on the segment constraints. Returns true on
    /// convergence.
    fn project_along(&mut self, n_kin: usize, dirs: Directions) -> bool {
        let n = self.state.positions.len();
        let s0 = n_kin.saturating_sub(1);
        let m = n - 1 - s0;
        let l2 = self.model.seg_len * self.model.seg_len;
        let w = &self.model.inv_mass;
        let sc = &mut self.scratch;
        let x = &mut self.state.positions;
        let mut initial = f64::INFINITY;
        for it in 0..=self.config.constraint_iterations.max(1) {
            let mut worst = 0.0f64;
            for (k, s) in (s0..n - 1).enumerate() {
                let d = x[s + 1] - x[s];
                let r = d.norm_squared() - l2;
                worst = worst.max(r.abs());
                sc.seg[k] = d;
                sc.resid[k] = -r;
            }
            if worst <= PROJECTION_TOL * l2 {
                return true;
            }
            if it == 0 {
                initial = worst;
            }
            if it == self.config.constraint_iterations.max(1) || worst > 10.0 * initial {
                return false;
            }
            for (k, s) in (s0..n - 1).enumerate() {
                let d = sc.seg[k];
                let (g, gl, gu) = match dirs {
                    Directions::Previous => (
                        sc.x_old[s + 1] - sc.x_old[s],
                        (k > 0).then(|| sc.x_old[s] - sc.x_old[s - 1]),
                        (k + 1 < m).then(|| sc.x_old[s + 2] - sc.x_old[s + 1]),
                    ),
                    Directions::Current => (
                        d,
                        (k > 0).then(|| sc.seg[k - 1]),
                        (k + 1 < m).then(|| sc.seg[k + 1]),
                    ),
                };
                sc.dir[k] = g;
                sc.diag[k] = 2.0 * (w[s] + w[s + 1]) * d.dot(&g);
                sc.lower[k] = gl.map_or(0.0, |gl| -2.0 * w[s] * d.dot(&gl));
                sc.upper[k] = gu.map_or(0.0, |gu| -2.0 * w[s + 1] * d.dot(&gu));
            }
            if !solve_tridiagonal(
                &sc.lower[..m],
                &mut sc.diag[..m],
                &sc.upper[..m],
                &mut sc.resid[..m],
            ) {
                return false;
            }
            for (k, s) in (s0..n - 1).enumerate() {
                let g = sc.dir[k] * sc.resid[k];
                x[s + 1] += g * w[s + 1];
                x[s] -= g * w[s];
            }
        }
        false
    }

    /// Pushes free link spheres out of solid surfaces. Returns true if any
    /// link was in contact.
    fn resolve_contacts(&mut self, n_kin: usize) -> bool {
        let mu = self.config.friction;
        let mut touched = false;
        for i in n_kin..self.state.positions.len() {
            let r = self.model.radii[i];
            let x_old = self.scratch.x_old[i];
            let x = &mut self.state.positions[i];
            if let Some(ground) = self.scene.ground_height {
                let pen = ground + r - x.y;
                if pen > 0.0 {
                    touched = true;
                    apply_contact(x, &x_old, &Vec3::new(0.0, 1.0, 0.0), pen, mu);
                }
            }
            for (_, b) in self.scene.solids() {
                let (dist, normal) = b.signed_distance(x);
                let pen = r - dist;
                if pen > 0.0 {
                    touched = true;
                    apply_contact(x, &x_old, &normal, pen, mu);
                }
            }
        }
        touched
    }

    /// Total mechanical energy: kinetic, gravitational, and joint elastic.
    pub fn energy(&self) -> f64 {
        let s = &self.state;
        let g = self.config.gravity;
        let mut e = 0.0;
        for i in 0..s.positions.len() {
            e += 0.5 * s.masses[i] * s.velocities[i].norm_squared() + s.masses[i] * g * s.positions[i].y;
        }
        let k = self.model.stiffness;
        for theta in s.joint_angles() {
            e += 0.5 * k * theta * theta;
        }
        e
    }
}

fn apply_contact(x: &mut Vec3, x_old: &Vec3, normal: &Vec3, pen: f64, mu: f64) {
    *x += normal * pen;
    let disp = *x - x_old;
    let tangential = disp - normal * disp.dot(normal);
    let t = tangential.norm();
    if t <= mu * pen {
        *x -= tangential;
    } else if t > 0.0 {
        *x -= tangential * (mu * pen / t);
    }
}

/// Advances `state` by one `config.dt` with the attachment moving to `base`.
pub fn step(
    state: &RopeState,
    params: &RopeParams,
    base: &BasePose,
    config: &SimConfig,
    scene: &SceneGeometry,
) -> Result<RopeState> {
    let mut sim = Simulator::new(params, config, scene, state.clone())?;
    sim.step(base)?;
    Ok(sim.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bend_vector_magnitude_is_angle() {
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let e2 = Vec3::new(0.3f64.cos(), 0.3f64.sin(), 0.0) * 2.0;
        let (phi, theta) = bend_vector(&e1, &e2);
        assert!((theta - 0.3).abs() < 1e-12);
        assert!((phi - Vec3::new(0.0, 0.0, 0.3)).norm() < 1e-12);
        let (phi, theta) = bend_vector(&e1, &(e1 * 3.0));
        assert_eq!(theta, 0.0);
        assert_eq!(phi, Vec3::zeros());
    }

    #[test]
    fn elastic_force_is_negative_energy_gradient() {
        // Force k W_a φ must equal -∂(½kθ²)/∂x_a; check by central differences.
        let k = 0.7;
        let mut x = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.1, -0.02, 0.01),
            Vec3::new(0.15, -0.1, 0.04),
        ];
        let energy = |x: &[Vec3; 3]| {
            let (_, t) = bend_vector(&(x[1] - x[0]), &(x[2] - x[1]));
            0.5 * k * t * t
        };
        let e1 = x[1] - x[0];
        let e2 = x[2] - x[1];
        let p1 = skew(&e1) / e1.norm_squared();
        let p2 = skew(&e2) / e2.norm_squared();
        let w = [p1, -p1 - p2, p2];
        let (phi, _) = bend_vector(&e1, &e2);
        let h = 1e-6;
        for a in 0..3 {
            let f = w[a] * phi * k;
            for r in 0..3 {
                let orig = x[a][r];
                x[a][r] = orig + h;
                let ep = energy(&x);
                x[a][r] = orig - h;
                let em = energy(&x);
                x[a][r] = orig;
                let grad = (ep - em) / (2.0 * h);
                assert!((f[r] + grad).abs() < 1e-6, "link {a} axis {r}: {} vs {}", f[r], -grad);
            }
        }
    }
}
