//! Rope parameter identification from a tracked wiggle: a single forward
//! pass of the trained regressor, or CMA-ES fitting of the simulator to the
//! observation.

use serde::{Deserialize, Serialize};

use crate::cmaes::{minimize, CmaesConfig, HistoryRow};
use crate::error::{Error, Result};
use crate::nn::{sensitivity_map, Mode, Network, SaliencyMap};
use crate::observation::{angular_velocities, extract_features, project, segment_angles, CameraModel, TrackedPoints};
use crate::params::{denormalize, NormalizedParams, ParamBounds, RopeParams, NUM_PARAMS};
use crate::sim::{simulate, BaseMotion, SceneGeometry, SimConfig};

/// Simulated wiggle as seen by `camera`.
pub fn observe(
    params: &RopeParams,
    motion: &BaseMotion,
    camera: &CameraModel,
    scene: &SceneGeometry,
    sim: &SimConfig,
    rate: f64,
    frames: usize,
) -> Result<TrackedPoints> {
    project(camera, &simulate(params, motion, scene, sim, rate, frames)?)
}

/// Unit-box prediction for one observation.
pub fn predict_normalized(net: &Network, tracked: &TrackedPoints) -> Result<NormalizedParams> {
    let features = extract_features(tracked, &net.spec().features)?;
    let batch = net.batch([&features])?;
    let out = net.predict(&batch, Mode::Eval).remove(0);
    let values: [f64; NUM_PARAMS] = out.try_into().map_err(|v: Vec<f64>| Error::Shape {
        expected: format!("{NUM_PARAMS} outputs"),
        actual: v.len().to_string(),
    })?;
    Ok(NormalizedParams::clamped(values))
}

/// Rope parameters predicted by the trained regressor. Always inside `bounds`.
pub fn identify_nn(net: &Network, tracked: &TrackedPoints, bounds: &ParamBounds) -> Result<RopeParams> {
    denormalize(&predict_normalized(net, tracked)?, bounds)
}

/// Gradient saliency of the regressor over a set of observations.
pub fn saliency(net: &Network, observations: &[TrackedPoints]) -> Result<SaliencyMap> {
    let features = observations
        .iter()
        .map(|t| extract_features(t, &net.spec().features))
        .collect::<Result<Vec<_>>>()?;
    sensitivity_map(net, &features)
}

/// Weights of the trajectory-matching terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    /// Per mean pixel distance.
    pub position: f64,
    /// Per mean absolute segment-angle difference, rad.
    pub angle: f64,
    /// Per mean absolute angular-velocity difference, rad/s.
    pub angular_velocity: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        MatchWeights {
            position: 1.0,
            angle: 0.5,
            angular_velocity: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub weights: MatchWeights,
    pub cmaes: CmaesConfig,
    pub sim: SimConfig,
    pub scene: SceneGeometry,
}

impl Default for FitConfig {
    /// 50 iterations of 60 candidates from the centre of the unit box.
    fn default() -> Self {
        FitConfig {
            weights: MatchWeights::default(),
            cmaes: CmaesConfig {
                population: 60,
                max_iterations: 50,
                ..CmaesConfig::new(vec![0.5; NUM_PARAMS], 0.3).unit_box()
            },
            sim: SimConfig::default(),
            scene: SceneGeometry::default(),
        }
    }
}

/// Distance between a candidate rope's simulated wiggle and an observation.
pub struct WiggleObjective<'a> {
    observed: &'a TrackedPoints,
    observed_angles: Vec<Vec<f64>>,
    observed_rates: Vec<Vec<f64>>,
    motion: &'a BaseMotion,
    camera: &'a CameraModel,
    config: &'a FitConfig,
}

impl<'a> WiggleObjective<'a> {
    pub fn new(
        observed: &'a TrackedPoints,
        motion: &'a BaseMotion,
        camera: &'a CameraModel,
        config: &'a FitConfig,
    ) -> Result<Self> {
        camera.check()?;
        Ok(WiggleObjective {
            observed,
            observed_angles: segment_angles(observed),
            observed_rates: angular_velocities(observed)?,
            motion,
            camera,
            config,
        })
    }

    /// Track of `params` under the wiggle, resampled to the observed point count.
    pub fn track(&self, params: &RopeParams) -> Result<TrackedPoints> {
        let tracked = observe(
            params,
            self.motion,
            self.camera,
            &self.config.scene,
            &self.config.sim,
            self.observed.frame_rate(),
            self.observed.num_frames(),
        )?;
        if tracked.num_points() == self.observed.num_points() {
            Ok(tracked)
        } else {
            tracked.resample_points(self.observed.num_points())
        }
    }

    pub fn evaluate(&self, params: &RopeParams) -> Result<f64> {
        let sim = self.track(params)?;
        let w = &self.config.weights;
        let pixels = sim
            .data()
            .iter()
            .zip(self.observed.data())
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .sum::<f64>()
            / sim.data().len() as f64;
        let mean_abs = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            // Point 0 carries no segment.
            let (mut sum, mut n) = (0.0, 0usize);
            for (x, y) in a.iter().zip(b).skip(1) {
                for (u, v) in x.iter().zip(y) {
                    sum += (u - v).abs();
                    n += 1;
                }
            }
            sum / n.max(1) as f64
        };
        let angles = mean_abs(&segment_angles(&sim), &self.observed_angles);
        let rates = mean_abs(&angular_velocities(&sim)?, &self.observed_rates);
        Ok(w.position * pixels + w.angle * angles + w.angular_velocity * rates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: RopeParams,
    pub normalized: NormalizedParams,
    pub objective: f64,
    pub history: Vec<HistoryRow>,
    /// Candidates whose simulation failed.
    pub failures: usize,
}

/// Fits simulator parameters to one observed wiggle by CMA-ES over the unit box.
pub fn identify_cmaes(
    tracked: &TrackedPoints,
    motion: &BaseMotion,
    camera: &CameraModel,
    bounds: &ParamBounds,
    config: &FitConfig,
) -> Result<FitResult> {
    bounds.check()?;
    let objective = WiggleObjective::new(tracked, motion, camera, config)?;
    let run = minimize(
        |x: &[f64]| {
            let norm = NormalizedParams::clamped(x.try_into().map_err(|_| Error::Shape {
                expected: format!("{NUM_PARAMS} values"),
                actual: x.len().to_string(),
            })?);
            objective.evaluate(&denormalize(&norm, bounds)?)
        },
        &config.cmaes,
    )?;
    let evaluations = run.history.last().map_or(1, |h| h.evaluations);
    if run.failures >= evaluations {
        return Err(Error::Optimization("every candidate simulation failed".into()));
    }
    let values: [f64; NUM_PARAMS] = run
        .best
        .as_slice()
        .try_into()
        .map_err(|_| Error::Optimization("optimizer returned the wrong dimension".into()))?;
    let normalized = NormalizedParams::clamped(values);
    Ok(FitResult {
        params: denormalize(&normalized, bounds)?,
        normalized,
        objective: run.fitness,
        history: run.history,
        failures: run.failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ArmModel;
    use crate::nn::NetworkSpec;
    use crate::observation::FeatureLayout;
    use crate::wiggle::WiggleSpec;

    fn small_net() -> Network {
        let spec = NetworkSpec {
            conv_channels: vec![4, 4, 4],
            pooled_length: 4,
            embedding: 8,
            hidden: vec![8],
            ..NetworkSpec::for_layout(&FeatureLayout::default())
        };
        Network::new(spec, 3).unwrap()
    }

    fn short_wiggle(frames: usize) -> (BaseMotion, WiggleSpec) {
        let w = WiggleSpec {
            frames,
            ..WiggleSpec::default()
        };
        (w.base_motion(&ArmModel::default()).unwrap(), w)
    }

    fn observed(params: &RopeParams, frames: usize) -> (TrackedPoints, BaseMotion) {
        let (motion, w) = short_wiggle(frames);
        let t = observe(
            params,
            &motion,
            &CameraModel::default(),
            &SceneGeometry::default(),
            &SimConfig::default(),
            w.rate,
            w.frames,
        )
        .unwrap();
        (t, motion)
    }

    #[test]
    fn nn_identification_is_repeatable_and_bounded() {
        let net = small_net();
        let bounds = ParamBounds::default();
        let (t, _) = observed(&bounds.midpoint(), 120);
        let a = identify_nn(&net, &t, &bounds).unwrap();
        let b = identify_nn(&net, &t, &bounds).unwrap();
        assert_eq!(a, b);
        // A rope far outside the training box still maps inside it.
        let mut odd = bounds.max_corner();
        odd.ball_damping = 1.0;
        odd.lead_mass = 0.2;
        let (t, _) = observed(&odd, 120);
        let p = identify_nn(&net, &t, &bounds).unwrap().to_array();
        for (i, v) in p.iter().enumerate() {
            let b = bounds.get(i);
            assert!(*v >= b.min && *v <= b.max, "{i}: {v}");
        }
        let map = saliency(&net, &[t]).unwrap();
        assert_eq!((map.frames, map.outputs), (FeatureLayout::default().t_max, 9));
    }

    #[test]
    fn zero_budget_returns_the_initial_mean() {
        let bounds = ParamBounds::default();
        let (t, motion) = observed(&bounds.min_corner(), 60);
        let mut cfg = FitConfig::default();
        cfg.cmaes.max_iterations = 0;
        let fit = identify_cmaes(&t, &motion, &CameraModel::default(), &bounds, &cfg).unwrap();
        assert_eq!(fit.params, bounds.midpoint());
        assert!(fit.history.is_empty());
        assert!(fit.objective > 0.0);
    }

    #[test]
    fn true_rope_scores_zero_and_fits_are_seeded() {
        let bounds = ParamBounds::default();
        let truth = bounds.midpoint();
        let (t, motion) = observed(&truth, 60);
        let cam = CameraModel::default();
        let mut cfg = FitConfig::default();
        let objective = WiggleObjective::new(&t, &motion, &cam, &cfg).unwrap();
        assert_eq!(objective.evaluate(&truth).unwrap(), 0.0);
        assert!(objective.evaluate(&bounds.max_corner()).unwrap() > 1.0);
        cfg.cmaes.population = 6;
        cfg.cmaes.max_iterations = 2;
        cfg.cmaes.seed = 9;
        let a = identify_cmaes(&t, &motion, &cam, &bounds, &cfg).unwrap();
        let b = identify_cmaes(&t, &motion, &cam, &bounds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 2);
    }

    #[test]
    fn every_candidate_failing_is_an_error() {
        let bounds = ParamBounds::default();
        let (t, motion) = observed(&bounds.midpoint(), 60);
        let mut cfg = FitConfig::default();
        cfg.sim.dt = 0.0;
        cfg.cmaes.population = 4;
        cfg.cmaes.max_iterations = 1;
        let err = identify_cmaes(&t, &motion, &CameraModel::default(), &bounds, &cfg).unwrap_err();
        assert!(matches!(err, Error::Optimization(_)));
    }

    #[test]
    fn point_counts_are_matched_by_resampling() {
        let bounds = ParamBounds::default();
        let (t, motion) = observed(&bounds.min_corner(), 30);
        let cam = CameraModel::default();
        let cfg = FitConfig::default();
        let objective = WiggleObjective::new(&t, &motion, &cam, &cfg).unwrap();
        let other = objective.track(&bounds.max_corner()).unwrap();
        assert_eq!(other.num_points(), t.num_points());
        assert!(objective.evaluate(&bounds.max_corner()).unwrap().is_finite());
    }
}
