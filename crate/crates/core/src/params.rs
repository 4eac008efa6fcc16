//! The nine-parameter rope description, its training bounds, normalization
//! into the unit box, and Latin-Hypercube sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of identified rope parameters.
pub const NUM_PARAMS: usize = 9;

/// Canonical parameter names, in vector order.
pub const PARAM_NAMES: [&str; NUM_PARAMS] = [
    "num_links",
    "rope_length_m",
    "ball_damping",
    "ball_stiffness",
    "rope_radius_m",
    "mass_per_unit_length_kg_m",
    "lead_mass_kg",
    "lead_radius_m",
    "link_extra_scale",
];

/// Index of each parameter in the 9-vector.
pub mod idx {
    pub const NUM_LINKS: usize = 0;
    pub const ROPE_LENGTH: usize = 1;
    pub const BALL_DAMPING: usize = 2;
    pub const BALL_STIFFNESS: usize = 3;
    pub const ROPE_RADIUS: usize = 4;
    pub const MASS_PER_LENGTH: usize = 5;
    pub const LEAD_MASS: usize = 6;
    pub const LEAD_RADIUS: usize = 7;
    pub const LINK_EXTRA_SCALE: usize = 8;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub min: f64,
    pub max: f64,
    pub units: String,
}

impl Bound {
    fn new(min: f64, max: f64, units: &str) -> Self {
        Bound {
            min,
            max,
            units: units.to_string(),
        }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Per-parameter sampling box.
///
/// The defaults are the in-distribution training ranges. Damping and
/// stiffness are rotational joint coefficients (N·m·s/rad and N·m/rad).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub num_links: Bound,
    pub rope_length_m: Bound,
    pub ball_damping: Bound,
    pub ball_stiffness: Bound,
    pub rope_radius_m: Bound,
    pub mass_per_unit_length_kg_m: Bound,
    pub lead_mass_kg: Bound,
    pub lead_radius_m: Bound,
    pub link_extra_scale: Bound,
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            num_links: Bound::new(20.0, 26.0, "links"),
            rope_length_m: Bound::new(0.45, 0.65, "m"),
            ball_damping: Bound::new(0.001, 0.05, "N*m*s/rad"),
            ball_stiffness: Bound::new(0.05, 1.0, "N*m/rad"),
            rope_radius_m: Bound::new(0.003, 0.015, "m"),
            mass_per_unit_length_kg_m: Bound::new(0.02, 0.12, "kg/m"),
            lead_mass_kg: Bound::new(0.02, 0.12, "kg"),
            lead_radius_m: Bound::new(0.015, 0.045, "m"),
            link_extra_scale: Bound::new(0.5, 1.2, "fraction"),
        }
    }
}

impl ParamBounds {
    pub fn get(&self, i: usize) -> &Bound {
        match i {
            0 => &self.num_links,
            1 => &self.rope_length_m,
            2 => &self.ball_damping,
            3 => &self.ball_stiffness,
            4 => &self.rope_radius_m,
            5 => &self.mass_per_unit_length_kg_m,
            6 => &self.lead_mass_kg,
            7 => &self.lead_radius_m,
            8 => &self.link_extra_scale,
            _ => panic!("parameter index {i} out of range"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bound> {
        (0..NUM_PARAMS).map(move |i| self.get(i))
    }

    pub fn check(&self) -> Result<()> {
        for (i, b) in self.iter().enumerate() {
            if !(b.min.is_finite() && b.max.is_finite()) {
                return Err(Error::NonFinite("parameter bounds"));
            }
            if b.min >= b.max {
                return Err(Error::invalid(format!(
                    "bounds for {} are not ordered: [{}, {}]",
                    PARAM_NAMES[i], b.min, b.max
                )));
            }
        }
        if self.num_links.min < 2.0 {
            return Err(Error::invalid("num_links lower bound must be at least 2"));
        }
        Ok(())
    }

    pub fn min_corner(&self) -> RopeParams {
        denormalize(&NormalizedParams::new([0.0; NUM_PARAMS]), self)
            .expect("zero vector is in range")
    }

    pub fn max_corner(&self) -> RopeParams {
        denormalize(&NormalizedParams::new([1.0; NUM_PARAMS]), self)
            .expect("unit vector is in range")
    }

    pub fn midpoint(&self) -> RopeParams {
        denormalize(&NormalizedParams::new([0.5; NUM_PARAMS]), self)
            .expect("midpoint is in range")
    }
}

/// Physical description of one simulated rope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeParams {
    pub num_links: usize,
    #[serde(rename = "rope_length_m")]
    pub rope_length: f64,
    pub ball_damping: f64,
    pub ball_stiffness: f64,
    #[serde(rename = "rope_radius_m")]
    pub rope_radius: f64,
    #[serde(rename = "mass_per_unit_length_kg_m")]
    pub mass_per_unit_length: f64,
    #[serde(rename = "lead_mass_kg")]
    pub lead_mass: f64,
    #[serde(rename = "lead_radius_m")]
    pub lead_radius: f64,
    /// Mass multiplier stored as a fraction (0.5 = 50 %).
    pub link_extra_scale: f64,
}

impl RopeParams {
    /// Raw values in vector order; `num_links` as a real.
    pub fn to_array(&self) -> [f64; NUM_PARAMS] {
        [
            self.num_links as f64,
            self.rope_length,
            self.ball_damping,
            self.ball_stiffness,
            self.rope_radius,
            self.mass_per_unit_length,
            self.lead_mass,
            self.lead_radius,
            self.link_extra_scale,
        ]
    }

    /// Inverse of [`RopeParams::to_array`]; `num_links` is rounded.
    pub fn from_array(v: [f64; NUM_PARAMS]) -> Self {
        RopeParams {
            num_links: v[0].round().max(0.0) as usize,
            rope_length: v[1],
            ball_damping: v[2],
            ball_stiffness: v[3],
            rope_radius: v[4],
            mass_per_unit_length: v[5],
            lead_mass: v[6],
            lead_radius: v[7],
            link_extra_scale: v[8],
        }
    }

    /// Rest distance between neighbouring link centers.
    pub fn segment_length(&self) -> f64 {
        self.rope_length / (self.num_links as f64 - 1.0)
    }

    /// Contact radius of each link; the last link carries the lead sphere.
    pub fn link_radii(&self) -> Vec<f64> {
        let mut r = vec![self.rope_radius; self.num_links];
        if let Some(last) = r.last_mut() {
            *last = self.rope_radius.max(self.lead_radius);
        }
        r
    }
}

/// Parameters mapped into the unit box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub values: [f64; NUM_PARAMS],
}

impl NormalizedParams {
    pub fn new(values: [f64; NUM_PARAMS]) -> Self {
        NormalizedParams { values }
    }

    /// Clamps every entry into [0, 1]; NaN maps to 0.5.
    pub fn clamped(values: [f64; NUM_PARAMS]) -> Self {
        let mut v = values;
        for x in &mut v {
            *x = if x.is_nan() { 0.5 } else { x.clamp(0.0, 1.0) };
        }
        NormalizedParams { values: v }
    }
}

pub fn normalize(params: &RopeParams, bounds: &ParamBounds) -> Result<NormalizedParams> {
    let raw = params.to_array();
    let mut out = [0.0; NUM_PARAMS];
    for i in 0..NUM_PARAMS {
        if !raw[i].is_finite() {
            return Err(Error::NonFinite(PARAM_NAMES[i]));
        }
        let b = bounds.get(i);
        out[i] = ((raw[i] - b.min) / b.span()).clamp(0.0, 1.0);
    }
    Ok(NormalizedParams::new(out))
}

pub fn denormalize(norm: &NormalizedParams, bounds: &ParamBounds) -> Result<RopeParams> {
    let mut raw = [0.0; NUM_PARAMS];
    for i in 0..NUM_PARAMS {
        let v = norm.values[i];
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!(
                "normalized {} = {v} is outside [0, 1]",
                PARAM_NAMES[i]
            )));
        }
        let b = bounds.get(i);
        raw[i] = b.min + v * b.span();
    }
    Ok(RopeParams::from_array(raw))
}

/// Checks the physical invariants of a parameter set.
///
/// Links are allowed to overlap, so segment length versus radius is not
/// checked.
pub fn validate(params: &RopeParams) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if params.num_links < 2 {
        problems.push(format!("num_links = {} (need at least 2)", params.num_links));
    }
    let raw = params.to_array();
    for i in 1..NUM_PARAMS {
        let v = raw[i];
        if !v.is_finite() {
            problems.push(format!("{} is not finite", PARAM_NAMES[i]));
        } else if v <= 0.0 {
            problems.push(format!("{} = {v} must be strictly positive", PARAM_NAMES[i]));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Looser check used by the simulator: joint coefficients and the lead
/// mass may be zero.
pub fn validate_simulable(params: &RopeParams) -> Result<(), Vec<String>> {
    let mut relaxed = *params;
    for v in [
        &mut relaxed.ball_damping,
        &mut relaxed.ball_stiffness,
        &mut relaxed.lead_mass,
    ] {
        if *v == 0.0 {
            *v = 1.0;
        }
    }
    validate(&relaxed)
}

pub(crate) fn simulable(params: &RopeParams) -> Result<()> {
    validate_simulable(params).map_err(Error::InvalidParams)
}

/// Stratified unit-cube samples: each dimension is cut into `n` equal bins
/// holding exactly one sample each.
pub fn lhs_unit(n: usize, dims: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dims]; n];
    let mut bins: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        bins.shuffle(rng);
        for (k, row) in out.iter_mut().enumerate() {
            let u: f64 = rng.sample(Open01);
            row[d] = (bins[k] as f64 + u) / n as f64;
        }
    }
    out
}

/// Latin-Hypercube sample of `n` ropes inside `bounds`; deterministic in `seed`.
pub fn sample_lhs(n: usize, bounds: &ParamBounds, seed: u64) -> Vec<RopeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lhs_unit(n, NUM_PARAMS, &mut rng)
        .into_iter()
        .map(|row| {
            let mut v = [0.0; NUM_PARAMS];
            v.copy_from_slice(&row);
            denormalize(&NormalizedParams::new(v), bounds).expect("open-interval samples")
        })
        .collect()
}

/// Independent uniform draw inside `bounds` (the "random in-distribution"
/// control used by the evaluation harnesses).
pub fn sample_uniform(bounds: &ParamBounds, rng: &mut impl Rng) -> RopeParams {
    let mut v = [0.0; NUM_PARAMS];
    for x in &mut v {
        *x = rng.random::<f64>();
    }
    denormalize(&NormalizedParams::new(v), bounds).expect("unit draws are in range")
}
