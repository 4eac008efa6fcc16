use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::params::idx;
use crate::pipeline::{plan_and_execute, run_pipeline, Method, PipelineConfig, RopeSource};
use crate::tasks::TaskKind;
use crate::wiggle::WiggleSpec;

fn track(points: usize, frames: usize, f: impl Fn(usize, usize) -> [f64; 2]) -> TrackedPoints {
    let data = (0..frames).flat_map(|t| (0..points).map(move |i| (t, i))).map(|(t, i)| f(t, i)).collect();
    TrackedPoints::new(points, 60.0, data).unwrap()
}

fn noise(points: usize, frames: usize, seed: u64) -> TrackedPoints {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..points * frames)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    TrackedPoints::new(points, 60.0, data).unwrap()
}

fn swinging(frames: usize, freq: f64, amp: f64) -> TrackedPoints {
    track(4, frames, |t, i| {
        let s = (2.0 * std::f64::consts::PI * freq * t as f64 / 60.0).sin();
        [640.0 + amp * i as f64 * s, 200.0 + 40.0 * i as f64]
    })
}

#[test]
fn identical_tracks_correlate_perfectly() {
    let a = swinging(200, 1.0, 10.0);
    assert!((spectral_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let b = noise(3, 64, 1);
    assert!((spectral_correlation(&b, &b).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn spectra_ignore_the_mean_and_keep_bins_one_to_half() {
    let a = swinging(100, 1.2, 10.0);
    let shifted = track(4, 100, |t, i| {
        let f = a.frame(t)[i];
        [f[0] + 300.0, f[1] - 50.0]
    });
    assert_eq!(magnitude_spectra(&a).len(), 4 * 2 * 50);
    let (sa, sb) = (magnitude_spectra(&a), magnitude_spectra(&shifted));
    for (x, y) in sa.iter().zip(&sb) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn spectral_oracle_on_a_pure_tone() {
    // One point moving as cos at bin 5 of a 40-frame window; the other at rest
    // except for bin 3. Magnitudes are T/2 at the tone bins, zero elsewhere.
    let t = 40;
    let a = track(2, t, |f, i| {
        let w = if i == 0 { 5.0 } else { 3.0 };
        [(2.0 * std::f64::consts::PI * w * f as f64 / t as f64).cos(), 0.0]
    });
    let s = magnitude_spectra(&a);
    assert_eq!(s.len(), 2 * 2 * 20);
    for (k, v) in s.iter().enumerate() {
        let expected = if k == 4 || k == 40 + 2 { 20.0 } else { 0.0 };
        assert!((v - expected).abs() < 1e-9, "bin {k}: {v}");
    }
}

#[test]
fn different_frequencies_correlate_less() {
    let a = swinging(400, 1.0, 10.0);
    let same = swinging(400, 1.0, 12.0);
    let other = swinging(400, 2.5, 10.0);
    let r_same = spectral_correlation(&a, &same).unwrap();
    let r_other = spectral_correlation(&a, &other).unwrap();
    assert!(r_same > 0.99 && r_other < r_same, "{r_same} {r_other}");
}

#[test]
fn still_tracks_have_no_spectrum() {
    let a = track(3, 50, |_, i| [i as f64, 0.0]);
    let b = swinging(50, 1.0, 5.0);
    assert!(spectral_correlation(&a, &b).is_err());
    assert!(spectral_correlation(&swinging(50, 1.0, 5.0), &swinging(60, 1.0, 5.0)).is_err());
}

#[test]
fn white_noise_rarely_correlates() {
    let trials = 1000;
    let below = (0..trials)
        .filter(|&s| {
            let r = spectral_correlation(&noise(2, 400, 2 * s), &noise(2, 400, 2 * s + 1)).unwrap();
            r.abs() < 0.2
        })
        .count();
    assert!(below as f64 >= 0.99 * trials as f64, "{below} of {trials}");
}

#[test]
fn ten_pixel_offset_is_0929_cm() {
    let a = swinging(30, 1.0, 5.0);
    let b = track(4, 30, |t, i| {
        let f = a.frame(t)[i];
        [f[0] + 6.0, f[1] + 8.0]
    });
    let cam = CameraModel::default();
    assert_eq!((cam.focal, cam.depth), (700.0, 0.65));
    let d = point_distance(&a, &b, &cam).unwrap();
    assert!((d - 10.0 * 0.65 / 700.0 * 100.0).abs() < 1e-12);
    assert!((d - 0.929).abs() < 1e-3);
    assert_eq!(point_distance(&a, &a, &cam).unwrap(), 0.0);
    assert!(point_distance(&a, &noise(3, 30, 0), &cam).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correlation_is_symmetric(s in 0u64..10_000, n in 2usize..5, t in 8usize..80) {
        let (a, b) = (noise(n, t, s), noise(n, t, s + 77_777));
        let ab = spectral_correlation(&a, &b).unwrap();
        let ba = spectral_correlation(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn point_distance_is_a_metric(s in 0u64..10_000, n in 2usize..5, t in 2usize..40) {
        let cam = CameraModel::default();
        let (a, b, c) = (noise(n, t, s), noise(n, t, s + 1_000_003), noise(n, t, s + 2_000_003));
        let ab = point_distance(&a, &b, &cam).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - point_distance(&b, &a, &cam).unwrap()).abs() <= 1e-12);
        let ac = point_distance(&a, &c, &cam).unwrap();
        let cb = point_distance(&c, &b, &cam).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert_eq!(point_distance(&a, &a, &cam).unwrap(), 0.0);
    }
}

fn unit(rng: &mut ChaCha8Rng) -> NormalizedParams {
    NormalizedParams::new(std::array::from_fn(|_| rng.random::<f64>()))
}

#[test]
fn perfect_predictor_reports_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth: Vec<_> = (0..50).map(|_| unit(&mut rng)).collect();
    let r = in_domain_errors(&truth, &truth, &ParamBounds::default()).unwrap();
    assert_eq!(r.rows.len(), NUM_PARAMS);
    for row in r.rows.iter().chain([&r.overall]) {
        assert_eq!(row.mae_normalized, 0.0);
        assert_eq!(row.relative_error_pct, 0.0);
    }
    assert_eq!(r.overall.mae_raw, None);
}

#[test]
fn midpoint_predictor_has_mae_one_quarter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let truth: Vec<_> = (0..n).map(|_| unit(&mut rng)).collect();
    let mid = vec![NormalizedParams::new([0.5; NUM_PARAMS]); n];
    let r = in_domain_errors(&mid, &truth, &ParamBounds::default()).unwrap();
    // E|U - 1/2| = 1/4; standard error sqrt(1/48 / n) ≈ 0.001.
    for row in &r.rows {
        assert!((row.mae_normalized - 0.25).abs() < 0.006, "{}: {}", row.parameter, row.mae_normalized);
    }
    assert!((r.overall.mae_normalized - 0.25).abs() < 0.003);
}

#[test]
fn relative_error_uses_raw_values() {
    let b = ParamBounds::default();
    // Length bound 0.45..0.65: truth 0.5 (0.25), prediction 0.55 (0.5).
    let mut t = [0.5; NUM_PARAMS];
    let mut p = [0.5; NUM_PARAMS];
    t[idx::ROPE_LENGTH] = 0.25;
    p[idx::ROPE_LENGTH] = 0.5;
    let r = in_domain_errors(&[NormalizedParams::new(p)], &[NormalizedParams::new(t)], &b).unwrap();
    let row = &r.rows[idx::ROPE_LENGTH];
    assert!((row.mae_normalized - 0.25).abs() < 1e-12);
    assert!((row.mae_raw.unwrap() - 0.05).abs() < 1e-12);
    assert!((row.relative_error_pct - 10.0).abs() < 1e-9);
    assert!(in_domain_errors(&[], &[], &b).is_err());
}

#[test]
fn medians_and_spreads() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
    assert_eq!(std_dev(&[1.0, 1.0]), 0.0);
    assert!((std_dev(&[0.0, 2.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn outputs_are_named_by_experiment_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth: Vec<_> = (0..5).map(|_| unit(&mut rng)).collect();
    let r = in_domain_errors(&truth, &truth, &ParamBounds::default()).unwrap();
    let (csv, json) = write_outputs(&r, dir.path(), "indomain", 7).unwrap();
    assert!(csv.ends_with("indomain_seed7.csv") && json.ends_with("indomain_seed7.json"));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("parameter,mae_normalized,mae_raw,relative_error_pct"));
    assert_eq!(lines.count(), NUM_PARAMS + 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["samples"], 5);
}

#[test]
fn conditions_mix_reference_and_random() {
    let b = ParamBounds::default();
    let (r, x) = (b.min_corner(), b.max_corner());
    let all = &ImportanceCondition::standard()[0];
    assert_eq!(all.mix(&r, &x), r);
    let none = &ImportanceCondition::standard()[4];
    assert_eq!(none.mix(&r, &x), x);
    let length = &ImportanceCondition::standard()[2];
    let m = length.mix(&r, &x);
    assert_eq!(m.rope_length, r.rope_length);
    assert_eq!(m.lead_mass, x.lead_mass);
}

#[test]
fn identity_sweep_has_no_spread() {
    let cfg = SensitivityConfig::default();
    let plan = strike_like_plan(&cfg.optimize.arm).unwrap();
    let same = vec![ParamBounds::default().midpoint(); 3];
    let s = tip_std_series(&same, &plan, &cfg.scene, &cfg.optimize, 0.2).unwrap();
    assert!(!s.is_empty());
    assert!(s.iter().all(|v| *v < 1e-9));
    let spread = sweep(&cfg.bounds, idx::ROPE_LENGTH, 3).unwrap();
    let s = tip_std_series(&spread, &plan, &cfg.scene, &cfg.optimize, 0.2).unwrap();
    assert!(s.iter().copied().fold(0.0, f64::max) > 1.0);
}

#[test]
fn sweeps_cover_the_range() {
    let b = ParamBounds::default();
    let links = sweep(&b, idx::NUM_LINKS, 11).unwrap();
    assert_eq!(links.iter().map(|p| p.num_links).collect::<Vec<_>>(), (20..=26).collect::<Vec<_>>());
    let damping = sweep(&b, idx::BALL_DAMPING, 5).unwrap();
    assert_eq!(damping.len(), 5);
    let cell = b.ball_damping.span() / 5.0;
    assert!((damping[0].ball_damping - (b.ball_damping.min + 0.5 * cell)).abs() < 1e-15);
    assert!((damping[4].ball_damping - (b.ball_damping.max - 0.5 * cell)).abs() < 1e-15);
    assert!(damping.iter().all(|p| p.rope_length == b.midpoint().rope_length));
    assert!(sweep(&b, 9, 5).is_err());
}

fn quick_pipeline() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.wiggle.frames = 90;
    cfg.optimize.population = 6;
    cfg.optimize.iterations = Some(2);
    cfg.task = crate::tasks::TaskSpec::example(TaskKind::Strike);
    cfg
}

#[test]
fn oracle_transfer_is_exact() {
    let cfg = TransferConfig {
        motion_a: WiggleSpec {
            frames: 90,
            ..WiggleSpec::default()
        },
        motion_b: WiggleSpec {
            frames: 90,
            ..WiggleSpec::test_chirp()
        },
        ropes: 3,
        random_ropes: 2,
        seed: 4,
        ..TransferConfig::default()
    };
    let truths = held_out_ropes(&cfg.bounds, 3, 4);
    let lookup = |t: &TrackedPoints| {
        let motion = cfg.motion_a.base_motion(&cfg.arm)?;
        for p in &truths {
            if crate::sysid::observe(p, &motion, &cfg.camera, &cfg.scene, &cfg.sim, 60.0, 90)? == *t {
                return Ok(*p);
            }
        }
        Err(crate::error::Error::invalid("unknown rope"))
    };
    let table = transfer_experiment(&cfg, lookup).unwrap();
    assert_eq!(table.rows.len(), 3);
    for r in &table.rows {
        assert_eq!(r.identified, r.truth);
        assert!((r.correlation_identified - 1.0).abs() < 1e-12);
        assert_eq!(r.distance_identified_cm, 0.0);
        assert!(r.distance_random_cm > 0.0);
    }
    let again = transfer_experiment(&cfg, lookup).unwrap();
    assert_eq!(again, table);
}

#[test]
fn keeping_all_nine_matches_the_full_condition() {
    let cfg = ImportanceConfig {
        pipeline: quick_pipeline(),
        conditions: vec![
            ImportanceCondition::new("full", &(0..NUM_PARAMS).collect::<Vec<_>>()),
            ImportanceCondition::new("all_nine", &(0..NUM_PARAMS).collect::<Vec<_>>()),
            ImportanceCondition::new("random", &[]),
        ],
        configs: 2,
        draws: 2,
        seed: 9,
        ..ImportanceConfig::default()
    };
    let mid = cfg.pipeline.bounds.midpoint();
    let t = importance_ablation(&cfg, |_| Ok(mid)).unwrap();
    let (full, nine, random) = (t.row("full").unwrap(), t.row("all_nine").unwrap(), t.row("random").unwrap());
    assert_eq!(full.mean_cm, nine.mean_cm);
    assert_eq!((full.runs, random.runs), (2, 4));
    // Planning and executing on the same rope: the full error is the planned metric.
    let seed = crate::seeds::derive_seed(9, &[2, 0]);
    let direct = plan_and_execute(&mid, None, &cfg.pipeline.task, &cfg.pipeline.optimize, seed).unwrap();
    let run = t.runs.iter().find(|r| r.condition == "full" && r.config == 0).unwrap();
    assert_eq!(run.error_cm, 100.0 * direct.planned.metric);
}

#[test]
fn ground_truth_arm_is_the_oracle_pipeline() {
    let cfg = FullPipelineConfig {
        pipeline: quick_pipeline(),
        ropes: 2,
        method: Method::Cmaes,
        seed: 6,
    };
    let mut cfg = cfg;
    cfg.pipeline.fit.cmaes.population = 4;
    cfg.pipeline.fit.cmaes.max_iterations = 1;
    let t = full_pipeline_experiment(&cfg, None).unwrap();
    assert_eq!(t.rows.len(), 2);
    let truth = held_out_ropes(&cfg.pipeline.bounds, 2, 6)[1];
    let source = RopeSource::Simulated {
        id: "x".into(),
        params: truth,
    };
    let seed = crate::seeds::derive_seed(6, &[1]);
    let oracle = run_pipeline(&source, Method::Oracle, None, &cfg.pipeline, seed).unwrap();
    assert_eq!(t.rows[1].ground_truth_cm, 100.0 * oracle.final_metric);
    let s = t.summary();
    assert_eq!(s.ropes, 2);
    assert!(s.median_random_cm.is_finite());
    let oracle_cfg = FullPipelineConfig {
        method: Method::Oracle,
        ..cfg.clone()
    };
    assert!(full_pipeline_experiment(&oracle_cfg, None).is_err());
}

#[test]
fn repeated_wiggle_gives_identical_columns() {
    let mut dataset = crate::dataset::DatasetConfig {
        count: 6,
        ..Default::default()
    };
    dataset.wiggle.frames = 60;
    dataset.layout.t_max = 80;
    let w = WiggleSpec {
        frames: 60,
        ..WiggleSpec::sine(6, 20.0, 0.5)
    };
    let cfg = WiggleAblationConfig {
        variants: vec![WiggleVariant::new("a", w.clone()), WiggleVariant::new("b", w)],
        dataset,
        held_out: 3,
        train: crate::nn::TrainConfig {
            epochs: 1,
            batch_size: 3,
            ..Default::default()
        },
        seed: 2,
    };
    let t = wiggle_ablation(&cfg).unwrap();
    let (a, b) = (t.report("a").unwrap(), t.report("b").unwrap());
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.samples, 3);
    let single = WiggleAblationConfig {
        variants: cfg.variants[..1].to_vec(),
        ..cfg.clone()
    };
    assert!(wiggle_ablation(&single).is_err());
    let mut out = Vec::new();
    t.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("wiggle,parameter,mae_normalized,mae_raw,relative_error_pct\n"));
    assert_eq!(text.lines().count(), 1 + 2 * (NUM_PARAMS + 1));
}
