use super::*;
use rand::Rng;
use crate::observation::{FeatureLayout, FeatureSet, PointSampling, T_MAX};
use proptest::prelude::*;

fn tiny_spec() -> NetworkSpec {
    NetworkSpec {
        in_channels: 6,
        length: 32,
        conv_channels: vec![4, 5, 3],
        kernel: 8,
        pooled_length: 2,
        embedding: 8,
        hidden: vec![6, 5],
        outputs: 9,
        dropout: 0.3,
        features: tiny_layout(32),
    }
}

fn tiny_layout(t_max: usize) -> FeatureLayout {
    FeatureLayout {
        t_max,
        points: 2,
        sampling: PointSampling::Pad,
        feature_set: FeatureSet::Deployment,
        pixel_scale: 720.0,
    }
}

fn tiny_batch(net: &Network, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..6 * 32 * n).map(|_| rng.random_range(-1.5..1.5)).collect();
    net.raw_batch(n, data).unwrap()
}

fn tiny_targets(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|b| (0..9).map(|k| ((b * 9 + k) as f64 * 0.37).sin() * 0.5 + 0.5).collect()).collect()
}

fn max_relative_error(net: &Network, batch: &Batch, targets: &[Vec<f64>], mode: Mode) -> f64 {
    let analytic = net.loss_and_gradients(batch, targets, mode, 1.0).unwrap().values;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..net.params().len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = probe.loss_and_gradients(batch, targets, mode, 1.0).unwrap().loss;
        probe.params_mut()[i] = orig - h;
        let down = probe.loss_and_gradients(batch, targets, mode, 1.0).unwrap().loss;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs()).max(1e-5);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let net = Network::new(tiny_spec(), 3).unwrap();
    let batch = tiny_batch(&net, 3, 1);
    let targets = tiny_targets(3);
    let eval = max_relative_error(&net, &batch, &targets, Mode::Eval);
    assert!(eval < 1e-4, "eval mode: {eval}");
    let train = max_relative_error(&net, &batch, &targets, Mode::Train { seed: 7 });
    assert!(train < 1e-4, "train mode: {train}");
}

#[test]
fn odd_lengths_have_exact_gradients() {
    let spec = NetworkSpec {
        length: 29,
        pooled_length: 3,
        features: tiny_layout(29),
        ..tiny_spec()
    };
    let net = Network::new(spec, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = net.raw_batch(2, (0..6 * 29 * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let err = max_relative_error(&net, &batch, &tiny_targets(2), Mode::Eval);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn input_gradient_matches_finite_differences() {
    let net = Network::new(tiny_spec(), 5).unwrap();
    let batch = tiny_batch(&net, 2, 9);
    let w: Vec<Vec<f64>> = (0..2).map(|b| (0..9).map(|k| if k == 2 + b { 1.0 } else { 0.0 }).collect()).collect();
    let dx = net.input_gradient(&batch, &w);
    let f = |data: Vec<f64>| {
        let out = net.forward_raw(&net.raw_batch(2, data).unwrap(), Mode::Eval);
        out[0][2] + out[1][3]
    };
    let h = 1e-5;
    for i in (0..batch.data().len()).step_by(7) {
        let mut up = batch.data().to_vec();
        up[i] += h;
        let mut down = batch.data().to_vec();
        down[i] -= h;
        let fd = (f(up) - f(down)) / (2.0 * h);
        assert!((fd - dx[i]).abs() <= 1e-6 * fd.abs().max(1.0), "{i}: {fd} vs {}", dx[i]);
    }
}

#[test]
fn zero_loss_means_zero_gradient() {
    let net = Network::new(tiny_spec(), 1).unwrap();
    let batch = tiny_batch(&net, 4, 2);
    let targets = net.forward_raw(&batch, Mode::Eval);
    let g = net.loss_and_gradients(&batch, &targets, Mode::Eval, 1.0).unwrap();
    assert_eq!(g.loss, 0.0);
    assert!(g.values.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn loss_scale_is_linear() {
    let net = Network::new(tiny_spec(), 1).unwrap();
    let batch = tiny_batch(&net, 2, 3);
    let t = tiny_targets(2);
    let one = net.loss_and_gradients(&batch, &t, Mode::Eval, 1.0).unwrap();
    let two = net.loss_and_gradients(&batch, &t, Mode::Eval, 2.0).unwrap();
    assert!((two.loss - 2.0 * one.loss).abs() < 1e-12);
    for (a, b) in one.values.iter().zip(&two.values) {
        assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-18);
    }
}

#[test]
fn forward_modes() {
    let net = Network::new(tiny_spec(), 8).unwrap();
    let zeros = net.raw_batch(1, vec![0.0; 6 * 32]).unwrap();
    assert_eq!(net.predict(&zeros, Mode::Eval), net.predict(&zeros, Mode::Eval));
    let b = tiny_batch(&net, 2, 4);
    let t1 = net.forward_raw(&b, Mode::Train { seed: 3 });
    assert_eq!(t1, net.forward_raw(&b, Mode::Train { seed: 3 }));
    assert_ne!(t1, net.forward_raw(&b, Mode::Train { seed: 4 }));
    assert_ne!(t1, net.forward_raw(&b, Mode::Eval));
    let no_drop = Network::new(NetworkSpec { dropout: 0.0, ..tiny_spec() }, 8).unwrap();
    assert_eq!(no_drop.forward_raw(&b, Mode::Train { seed: 3 }), no_drop.forward_raw(&b, Mode::Eval));
}

#[test]
fn batch_rows_are_independent_in_eval_mode() {
    let net = Network::new(tiny_spec(), 8).unwrap();
    let b = tiny_batch(&net, 3, 4);
    let all = net.forward_raw(&b, Mode::Eval);
    for s in 0..3 {
        let mut one = Vec::new();
        for c in 0..6 {
            one.extend_from_slice(&b.data()[c * 96 + s * 32..c * 96 + (s + 1) * 32]);
        }
        let single = net.forward_raw(&net.raw_batch(1, one).unwrap(), Mode::Eval);
        for (x, y) in single[0].iter().zip(&all[s]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn full_size_network_has_about_1_2m_parameters() {
    let spec = NetworkSpec::for_layout(&FeatureLayout::with_set(FeatureSet::Full));
    let count = spec.parameter_count();
    assert!((1_100_000..1_300_000).contains(&count), "{count}");
    let net = Network::new(spec, 0).unwrap();
    assert_eq!(net.params().len(), count);
    let deploy = NetworkSpec::for_layout(&FeatureLayout::default());
    assert!((1_050_000..1_300_000).contains(&deploy.parameter_count()));
    assert_eq!(deploy.length, T_MAX);
}

#[test]
fn tensor_table_matches_storage() {
    let spec = tiny_spec();
    let names: Vec<String> = spec.tensors().into_iter().map(|t| t.0).collect();
    assert_eq!(names[0], "conv0.weight");
    assert_eq!(names.last().unwrap(), "out.bias");
    assert!(names.contains(&"head1.weight".to_string()));
    assert_eq!(spec.parameter_count(), Plan::new(&spec).total);
}

#[test]
fn predictions_stay_in_unit_box() {
    let net = Network::new(tiny_spec(), 2).unwrap();
    for scale in [1.0, 1e3, 1e8] {
        let b = tiny_batch(&net, 2, 6);
        let big = net.raw_batch(2, b.data().iter().map(|v| v * scale).collect()).unwrap();
        for row in net.predict(&big, Mode::Eval) {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn weights_round_trip() {
    let mut net = Network::new(tiny_spec(), 11).unwrap();
    net.input_scale = (0..6).map(|i| 1.0 + i as f64).collect();
    let mut buf = Vec::new();
    write_weights(&net, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"WAGW");
    let back = read_weights(buf.as_slice()).unwrap();
    assert_eq!(back.spec(), net.spec());
    assert_eq!(back.init_seed(), 11);
    for (a, b) in back.params().iter().zip(net.params()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    assert_eq!(back.input_scale(), net.input_scale());
    let mut again = Vec::new();
    write_weights(&back, &mut again).unwrap();
    assert_eq!(again, buf);

    assert!(read_weights(&buf[..buf.len() - 2]).is_err());
    let mut extra = buf.clone();
    extra.push(1);
    assert!(read_weights(extra.as_slice()).is_err());
    let mut digest = buf.clone();
    let at = 12 + u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    digest[at] ^= 1;
    assert!(read_weights(digest.as_slice()).is_err());
}

#[test]
fn saliency_shape_sign_and_batch_invariance() {
    let spec = NetworkSpec {
        in_channels: 6,
        length: 32,
        ..tiny_spec()
    };
    let layout = tiny_layout(32);
    let net = Network::new(spec, 1).unwrap();
    let tracked = crate::observation::TrackedPoints::new(
        2,
        60.0,
        (0..20).flat_map(|t| [[0.0, 0.0], [10.0 * (t as f64 * 0.3).cos(), 10.0]]).collect(),
    )
    .unwrap();
    let f = crate::observation::extract_features(&tracked, &layout).unwrap();
    let one = sensitivity_map(&net, std::slice::from_ref(&f)).unwrap();
    assert_eq!((one.frames, one.outputs), (32, 9));
    assert!(one.grid.iter().all(|v| *v >= 0.0));
    assert!(one.grid.iter().any(|v| *v > 0.0));
    let two = sensitivity_map(&net, &[f.clone(), f]).unwrap();
    for (a, b) in one.grid.iter().zip(&two.grid) {
        assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
    let mut buf = Vec::new();
    one.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("frame,p1,p2,p3,p4,p5,p6,p7,p8,p9\n"));
    assert_eq!(text.lines().count(), 33);
}

fn synthetic_set(n: usize, seed: u64) -> TrainSet {
    // Target k is a smooth function of the mean of input channel k % 6.
    let layout = FeatureLayout {
        pixel_scale: 1.0,
        ..tiny_layout(32)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TrainSet::default();
    for _ in 0..n {
        let amp: f64 = rng.random_range(0.0..1.0);
        let freq: f64 = rng.random_range(0.1..0.6);
        let tracked = crate::observation::TrackedPoints::new(
            2,
            60.0,
            (0..32)
                .flat_map(|t| [[0.0, 0.0], [amp * (t as f64 * freq).cos(), 1.0 + amp * (t as f64 * freq).sin()]])
                .collect(),
        )
        .unwrap();
        let f = crate::observation::extract_features(&tracked, &layout).unwrap();
        let target = (0..9).map(|k| if k % 2 == 0 { amp } else { (freq - 0.1) / 0.5 }).collect();
        set.push(f, target);
    }
    set
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let net = Network::new(tiny_spec(), 1).unwrap();
    let data = synthetic_set(20, 1);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.0,
        fit_input_scale: false,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let out = train(net.clone(), &data, &data, &cfg, |_| {}).unwrap();
    assert_eq!(out.network, net);
    let v: Vec<f64> = out.history.iter().map(|h| h.val_loss).collect();
    assert!(v.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let train_set = synthetic_set(50, 2);
    let val_set = synthetic_set(20, 3);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        learning_rate: 3e-3,
        warmup_epochs: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let net = Network::new(NetworkSpec { dropout: 0.1, ..tiny_spec() }, 1).unwrap();
    let mut seen = 0;
    let a = train(net.clone(), &train_set, &val_set, &cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, 20);
    assert_eq!(a.history.len(), 20);
    assert!(a.history.iter().all(|h| h.train_loss.is_finite() && h.val_loss.is_finite()));
    let first = &a.history[0];
    let last = a.history.last().unwrap();
    assert!(last.val_loss < 0.5 * first.val_loss, "{} -> {}", first.val_loss, last.val_loss);
    let b = train(net, &train_set, &val_set, &cfg, |_| {}).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.network, b.network);
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    assert!((cfg.learning_rate_at(0) - 2e-4).abs() < 1e-15);
    assert!((cfg.learning_rate_at(4) - 1e-3).abs() < 1e-15);
    assert!((cfg.learning_rate_at(5) - 1e-3).abs() < 1e-15);
    assert!(cfg.learning_rate_at(99) < 1e-5);
    for e in 5..99 {
        assert!(cfg.learning_rate_at(e + 1) <= cfg.learning_rate_at(e));
    }
}

#[test]
fn shape_errors() {
    let net = Network::new(tiny_spec(), 1).unwrap();
    let f = crate::observation::FeatureTensor::zeros(FeatureLayout::default());
    assert!(net.batch([&f]).is_err());
    assert!(net.raw_batch(1, vec![0.0; 5]).is_err());
    let b = tiny_batch(&net, 2, 1);
    assert!(net.loss_and_gradients(&b, &tiny_targets(3), Mode::Eval, 1.0).is_err());
    assert!(Network::new(NetworkSpec { length: 4, features: tiny_layout(4), ..tiny_spec() }, 0).is_err());
    assert!(Network::new(NetworkSpec { length: 31, ..tiny_spec() }, 0).is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.check().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn outputs_finite_and_clamped(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let net = Network::new(tiny_spec(), seed).unwrap();
        let b = tiny_batch(&net, 2, seed + 1);
        let scaled = net.raw_batch(2, b.data().iter().map(|v| v * scale).collect()).unwrap();
        for row in net.predict(&scaled, Mode::Train { seed }) {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
