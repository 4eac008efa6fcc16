//! Temporal convolutional regressor with hand-derived gradients.
//!
//! Three blocks of conv (same padding) → channel LayerNorm → GELU →
//! average pool (2) → dropout, then adaptive average pooling, a linear
//! embedding with GELU, a GELU MLP head and a linear output layer.
//! Training minimises mean squared error of the raw head output; inference
//! clamps it into the unit box.

mod format;
mod ops;
mod train;

pub use format::{read_weights, write_weights, WEIGHTS_MAGIC};
pub use train::{evaluate, train, Adam, EpochStats, TrainConfig, TrainOutcome, TrainSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{FeatureLayout, FeatureTensor};

use ops::{adaptive_bin, col2im, gelu, gelu_grad, gemm, im2col};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub length: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Frames left after adaptive pooling.
    pub pooled_length: usize,
    pub embedding: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub dropout: f64,
    /// Features the network expects; identification extracts with this layout.
    pub features: FeatureLayout,
}

impl NetworkSpec {
    /// Full-size network for a feature layout.
    pub fn for_layout(layout: &FeatureLayout) -> Self {
        NetworkSpec {
            in_channels: layout.channels(),
            length: layout.t_max,
            conv_channels: vec![64, 128, 192],
            kernel: 8,
            pooled_length: 16,
            embedding: 256,
            hidden: vec![128, 64],
            outputs: crate::params::NUM_PARAMS,
            dropout: 0.3,
            features: *layout,
        }
    }

    pub fn check(&self) -> Result<()> {
        let positive = self.in_channels > 0
            && self.kernel > 0
            && self.pooled_length > 0
            && self.embedding > 0
            && self.outputs > 0
            && !self.conv_channels.is_empty()
            && self.conv_channels.iter().chain(&self.hidden).all(|c| *c > 0);
        if !positive {
            return Err(Error::invalid("network sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if self.features.channels() != self.in_channels || self.features.t_max != self.length {
            return Err(Error::invalid("feature layout does not match the input shape"));
        }
        if self.conv_output_length() == 0 {
            return Err(Error::invalid("input too short for the pooling stack"));
        }
        Ok(())
    }

    fn block_lengths(&self) -> Vec<usize> {
        let mut l = vec![self.length];
        for _ in &self.conv_channels {
            l.push(l.last().unwrap() / 2);
        }
        l
    }

    fn conv_output_length(&self) -> usize {
        *self.block_lengths().last().unwrap()
    }

    /// Width of the flattened conv features.
    fn flat_width(&self) -> usize {
        self.conv_channels.last().unwrap() * self.pooled_length
    }

    /// (input, output) width of every dense layer, embedding first.
    fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.flat_width(), self.embedding];
        widths.extend(&self.hidden);
        widths.push(self.outputs);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Names and shapes of every tensor, in storage order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut ci = self.in_channels;
        for (i, &co) in self.conv_channels.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![co, ci, self.kernel]));
            out.push((format!("conv{i}.bias"), vec![co]));
            out.push((format!("norm{i}.weight"), vec![co]));
            out.push((format!("norm{i}.bias"), vec![co]));
            ci = co;
        }
        let shapes = self.dense_shapes();
        for (j, (i, o)) in shapes.iter().enumerate() {
            let name = match j {
                0 => "embed".to_string(),
                j if j == shapes.len() - 1 => "out".to_string(),
                j => format!("head{}", j - 1),
            };
            out.push((format!("{name}.weight"), vec![*o, *i]));
            out.push((format!("{name}.bias"), vec![*o]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(serde_json::to_string(self).expect("plain struct").as_bytes())
    }
}

/// Offsets of one conv block's tensors in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct BlockIdx {
    ci: usize,
    co: usize,
    w: usize,
    b: usize,
    g: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseIdx {
    input: usize,
    output: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Plan {
    blocks: Vec<BlockIdx>,
    dense: Vec<DenseIdx>,
    total: usize,
}

impl Plan {
    fn new(spec: &NetworkSpec) -> Plan {
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let mut blocks = Vec::new();
        let mut ci = spec.in_channels;
        for &co in &spec.conv_channels {
            blocks.push(BlockIdx {
                ci,
                co,
                w: take(co * ci * spec.kernel),
                b: take(co),
                g: take(co),
                beta: take(co),
            });
            ci = co;
        }
        let dense = spec
            .dense_shapes()
            .into_iter()
            .map(|(i, o)| DenseIdx {
                input: i,
                output: o,
                w: take(i * o),
                b: take(o),
            })
            .collect();
        Plan {
            blocks,
            dense,
            total: off,
        }
    }
}

/// Forward-pass mode. Dropout is active only in training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Network inputs in channel-major layout, already scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    size: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Raw layout access: `[channel][sample · length + frame]`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f64>,
    /// Per-channel multiplier applied to features before the first layer.
    input_scale: Vec<f64>,
    init_seed: u64,
}

struct BlockCache {
    input: Vec<f64>,
    len: usize,
    zhat: Vec<f64>,
    rstd: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

struct Cache {
    batch: usize,
    blocks: Vec<BlockCache>,
    conv_len: usize,
    dense: Vec<DenseCache>,
}

/// Gradient of the loss with respect to every parameter, in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub values: Vec<f64>,
}

impl Network {
    /// Fan-in scaled uniform initialization, LayerNorm gains 1, shifts 0.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Network> {
        spec.check()?;
        let plan = Plan::new(&spec);
        let mut params = vec![0.0; plan.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, bound: f64, p: &mut [f64]| {
            for v in &mut p[range] {
                *v = rng.random_range(-bound..bound);
            }
        };
        for b in &plan.blocks {
            let bound = 1.0 / ((b.ci * spec.kernel) as f64).sqrt();
            fill(b.w..b.w + b.co * b.ci * spec.kernel, bound, &mut params);
            fill(b.b..b.b + b.co, bound, &mut params);
            params[b.g..b.g + b.co].fill(1.0);
        }
        for d in &plan.dense {
            let bound = 1.0 / (d.input as f64).sqrt();
            fill(d.w..d.w + d.input * d.output, bound, &mut params);
            fill(d.b..d.b + d.output, bound, &mut params);
        }
        Ok(Network {
            input_scale: vec![1.0; spec.in_channels],
            spec,
            params,
            init_seed: seed,
        })
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<f64>, input_scale: Vec<f64>, init_seed: u64) -> Result<Network> {
        spec.check()?;
        let total = Plan::new(&spec).total;
        if params.len() != total || input_scale.len() != spec.in_channels {
            return Err(Error::Shape {
                expected: format!("{total} parameters and {} scales", spec.in_channels),
                actual: format!("{} and {}", params.len(), input_scale.len()),
            });
        }
        if params.iter().chain(&input_scale).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network weights"));
        }
        Ok(Network {
            spec,
            params,
            input_scale,
            init_seed,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Sets each channel's input multiplier to the inverse RMS over the
    /// valid frames of `samples`; silent channels keep 1.
    pub fn fit_input_scale<'a>(&mut self, samples: impl IntoIterator<Item = &'a FeatureTensor>) {
        let c = self.spec.in_channels;
        let mut sq = vec![0.0; c];
        let mut count = 0usize;
        for f in samples {
            for t in 0..f.valid_frames().min(f.t_max()) {
                for (k, v) in f.row(t).iter().enumerate().take(c) {
                    sq[k] += (*v as f64).powi(2);
                }
                count += 1;
            }
        }
        for (s, q) in self.input_scale.iter_mut().zip(sq) {
            let rms = (q / count.max(1) as f64).sqrt();
            *s = if rms > 1e-8 { 1.0 / rms } else { 1.0 };
        }
    }

    /// Packs feature tensors into a batch.
    pub fn batch<'a>(&self, samples: impl IntoIterator<Item = &'a FeatureTensor>) -> Result<Batch> {
        let samples: Vec<&FeatureTensor> = samples.into_iter().collect();
        let (c, len) = (self.spec.in_channels, self.spec.length);
        for f in &samples {
            if f.channels() != c || f.t_max() != len {
                return Err(Error::Shape {
                    expected: format!("{len} frames × {c} channels"),
                    actual: format!("{} × {}", f.t_max(), f.channels()),
                });
            }
        }
        let n = samples.len();
        let mut data = vec![0.0; c * n * len];
        for (b, f) in samples.iter().enumerate() {
            for t in 0..len {
                for (k, v) in f.row(t).iter().enumerate() {
                    data[k * n * len + b * len + t] = *v as f64 * self.input_scale[k];
                }
            }
        }
        Ok(Batch { size: n, data })
    }

    /// Builds a batch straight from channel-major values (no scaling).
    pub fn raw_batch(&self, size: usize, data: Vec<f64>) -> Result<Batch> {
        let want = self.spec.in_channels * size * self.spec.length;
        if data.len() != want {
            return Err(Error::Shape {
                expected: want.to_string(),
                actual: data.len().to_string(),
            });
        }
        Ok(Batch { size, data })
    }

    /// Raw head outputs, `[sample][output]`.
    pub fn forward_raw(&self, batch: &Batch, mode: Mode) -> Vec<Vec<f64>> {
        let (out, _) = self.run(batch, mode, false);
        out
    }

    /// Predictions clamped into `[0, 1]`.
    pub fn predict(&self, batch: &Batch, mode: Mode) -> Vec<Vec<f64>> {
        self.forward_raw(batch, mode)
            .into_iter()
            .map(|row| row.into_iter().map(|v| if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) }).collect())
            .collect()
    }

    /// Mean squared error of the raw outputs against `targets` (one row per
    /// sample) times `loss_scale`, with its exact gradient.
    pub fn loss_and_gradients(&self, batch: &Batch, targets: &[Vec<f64>], mode: Mode, loss_scale: f64) -> Result<Gradients> {
        let n = batch.size;
        let o = self.spec.outputs;
        if targets.len() != n || targets.iter().any(|t| t.len() != o) {
            return Err(Error::Shape {
                expected: format!("{n} targets of width {o}"),
                actual: format!("{} rows", targets.len()),
            });
        }
        let (out, cache) = self.run(batch, mode, true);
        let cache = cache.expect("cache requested");
        let denom = (n * o) as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; o * n];
        for b in 0..n {
            for k in 0..o {
                let e = out[b][k] - targets[b][k];
                loss += e * e;
                d_out[k * n + b] = 2.0 * e * loss_scale / denom;
            }
        }
        loss *= loss_scale / denom;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let (values, _) = self.backward(&cache, d_out, false);
        Ok(Gradients { loss, values })
    }

    /// Gradient of `Σ_k w[b][k] · output[b][k]` with respect to the scaled
    /// input, `[channel][sample · length + frame]`, in eval mode.
    pub fn input_gradient(&self, batch: &Batch, weights: &[Vec<f64>]) -> Vec<f64> {
        let n = batch.size;
        let o = self.spec.outputs;
        let (_, cache) = self.run(batch, Mode::Eval, true);
        let mut d_out = vec![0.0; o * n];
        for b in 0..n {
            for k in 0..o {
                d_out[k * n + b] = weights[b][k];
            }
        }
        let (_, dx) = self.backward(&cache.expect("cache requested"), d_out, true);
        dx.expect("input gradient requested")
    }

    fn run(&self, batch: &Batch, mode: Mode, keep: bool) -> (Vec<Vec<f64>>, Option<Cache>) {
        let spec = &self.spec;
        let plan = Plan::new(spec);
        let n = batch.size;
        let mut rng = match mode {
            Mode::Train { seed } if spec.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let mut act = batch.data.clone();
        let mut len = spec.length;
        let mut blocks = Vec::new();
        let mut cols = Vec::new();
        for bi in &plan.blocks {
            let w = n * len;
            im2col(&act, bi.ci, n, len, spec.kernel, &mut cols);
            let mut z = vec![0.0; bi.co * w];
            for c in 0..bi.co {
                z[c * w..(c + 1) * w].fill(self.params[bi.b + c]);
            }
            gemm(bi.co, bi.ci * spec.kernel, w, &self.params[bi.w..], false, &cols, false, 1.0, &mut z);
            let mut rstd = vec![0.0; w];
            for j in 0..w {
                let mean = (0..bi.co).map(|c| z[c * w + j]).sum::<f64>() / bi.co as f64;
                let var = (0..bi.co).map(|c| (z[c * w + j] - mean).powi(2)).sum::<f64>() / bi.co as f64;
                let r = 1.0 / (var + LN_EPS).sqrt();
                rstd[j] = r;
                for c in 0..bi.co {
                    z[c * w + j] = (z[c * w + j] - mean) * r;
                }
            }
            let zhat = z;
            let mut pre = vec![0.0; bi.co * w];
            for c in 0..bi.co {
                let (g, beta) = (self.params[bi.g + c], self.params[bi.beta + c]);
                for j in 0..w {
                    pre[c * w + j] = g * zhat[c * w + j] + beta;
                }
            }
            let half = len / 2;
            let mut pooled = vec![0.0; bi.co * n * half];
            for c in 0..bi.co {
                for b in 0..n {
                    let src = &pre[c * w + b * len..c * w + (b + 1) * len];
                    let dst = &mut pooled[c * n * half + b * half..c * n * half + (b + 1) * half];
                    for (t, d) in dst.iter_mut().enumerate() {
                        *d = 0.5 * (gelu(src[2 * t]) + gelu(src[2 * t + 1]));
                    }
                }
            }
            let mask = rng.as_mut().map(|r| {
                let keep_p = 1.0 - spec.dropout;
                let m: Vec<f64> = (0..pooled.len())
                    .map(|_| if r.random::<f64>() < keep_p { 1.0 / keep_p } else { 0.0 })
                    .collect();
                for (v, k) in pooled.iter_mut().zip(&m) {
                    *v *= k;
                }
                m
            });
            let input = std::mem::replace(&mut act, pooled);
            if keep {
                blocks.push(BlockCache {
                    input,
                    len,
                    zhat,
                    rstd,
                    pre,
                    mask,
                });
            }
            len = half;
        }

        // Adaptive pool to [co][n · pooled] then flatten to [co · pooled][n].
        let co = *spec.conv_channels.last().unwrap();
        let p = spec.pooled_length;
        let mut flat = vec![0.0; co * p * n];
        for c in 0..co {
            for b in 0..n {
                let src = &act[c * n * len + b * len..c * n * len + (b + 1) * len];
                for i in 0..p {
                    let (s, e) = adaptive_bin(i, len, p);
                    flat[(c * p + i) * n + b] = src[s..e].iter().sum::<f64>() / (e - s) as f64;
                }
            }
        }

        let mut x = flat;
        let mut dense = Vec::new();
        let last = plan.dense.len() - 1;
        for (j, d) in plan.dense.iter().enumerate() {
            let mut h = vec![0.0; d.output * n];
            for r in 0..d.output {
                h[r * n..(r + 1) * n].fill(self.params[d.b + r]);
            }
            gemm(d.output, d.input, n, &self.params[d.w..], false, &x, false, 1.0, &mut h);
            let next = if j == last { h.clone() } else { h.iter().map(|v| gelu(*v)).collect() };
            let input = std::mem::replace(&mut x, next);
            if keep {
                dense.push(DenseCache { input, pre: h });
            }
        }
        let o = spec.outputs;
        let out = (0..n).map(|b| (0..o).map(|k| x[k * n + b]).collect()).collect();
        let cache = keep.then_some(Cache {
            batch: n,
            blocks,
            conv_len: len,
            dense,
        });
        (out, cache)
    }

    fn backward(&self, cache: &Cache, d_out: Vec<f64>, want_input: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let spec = &self.spec;
        let plan = Plan::new(spec);
        let n = cache.batch;
        let mut grad = vec![0.0; plan.total];
        let last = plan.dense.len() - 1;

        let mut dx = d_out;
        for (j, d) in plan.dense.iter().enumerate().rev() {
            let dc = &cache.dense[j];
            let mut dh = dx;
            if j != last {
                for (g, h) in dh.iter_mut().zip(&dc.pre) {
                    *g *= gelu_grad(*h);
                }
            }
            gemm(d.output, n, d.input, &dh, false, &dc.input, true, 1.0, &mut grad[d.w..]);
            for r in 0..d.output {
                grad[d.b + r] += dh[r * n..(r + 1) * n].iter().sum::<f64>();
            }
            let mut din = vec![0.0; d.input * n];
            gemm(d.input, d.output, n, &self.params[d.w..], true, &dh, false, 0.0, &mut din);
            dx = din;
        }

        let co = *spec.conv_channels.last().unwrap();
        let p = spec.pooled_length;
        let len = cache.conv_len;
        let mut dact = vec![0.0; co * n * len];
        for c in 0..co {
            for b in 0..n {
                let dst = &mut dact[c * n * len + b * len..c * n * len + (b + 1) * len];
                for i in 0..p {
                    let (s, e) = adaptive_bin(i, len, p);
                    let g = dx[(c * p + i) * n + b] / (e - s) as f64;
                    for v in &mut dst[s..e] {
                        *v += g;
                    }
                }
            }
        }

        let mut cols = Vec::new();
        let mut input_grad = None;
        for (k, bi) in plan.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[k];
            let len = bc.len;
            let half = len / 2;
            let w = n * len;
            if let Some(m) = &bc.mask {
                for (v, k) in dact.iter_mut().zip(m) {
                    *v *= k;
                }
            }
            let mut dy = vec![0.0; bi.co * w];
            for c in 0..bi.co {
                for b in 0..n {
                    for t in 0..half {
                        let g = 0.5 * dact[c * n * half + b * half + t];
                        for s in [2 * t, 2 * t + 1] {
                            let idx = c * w + b * len + s;
                            dy[idx] = g * gelu_grad(bc.pre[idx]);
                        }
                    }
                }
            }
            for c in 0..bi.co {
                let row = c * w..(c + 1) * w;
                grad[bi.g + c] += dy[row.clone()].iter().zip(&bc.zhat[row.clone()]).map(|(a, b)| a * b).sum::<f64>();
                grad[bi.beta + c] += dy[row].iter().sum::<f64>();
            }
            let mut dz = dy;
            let inv = 1.0 / bi.co as f64;
            for j in 0..w {
                let (mut m1, mut m2) = (0.0, 0.0);
                for c in 0..bi.co {
                    let dzh = dz[c * w + j] * self.params[bi.g + c];
                    m1 += dzh;
                    m2 += dzh * bc.zhat[c * w + j];
                }
                m1 *= inv;
                m2 *= inv;
                let r = bc.rstd[j];
                for c in 0..bi.co {
                    let dzh = dz[c * w + j] * self.params[bi.g + c];
                    dz[c * w + j] = r * (dzh - m1 - bc.zhat[c * w + j] * m2);
                }
            }
            for c in 0..bi.co {
                grad[bi.b + c] += dz[c * w..(c + 1) * w].iter().sum::<f64>();
            }
            let kk = bi.ci * spec.kernel;
            im2col(&bc.input, bi.ci, n, len, spec.kernel, &mut cols);
            gemm(bi.co, w, kk, &dz, false, &cols, true, 1.0, &mut grad[bi.w..]);
            if k > 0 || want_input {
                let mut dcols = vec![0.0; kk * w];
                gemm(kk, bi.co, w, &self.params[bi.w..], true, &dz, false, 0.0, &mut dcols);
                let mut din = vec![0.0; bi.ci * w];
                col2im(&dcols, bi.ci, n, len, spec.kernel, &mut din);
                if k == 0 {
                    input_grad = Some(din);
                } else {
                    dact = din;
                }
            }
        }
        (grad, input_grad)
    }
}

/// Per-frame input sensitivity: `grid[t][i]` is `Σ_c |∂p_i / ∂x[t, c]|`
/// with respect to the unscaled features, averaged over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub frames: usize,
    pub outputs: usize,
    pub grid: Vec<f64>,
}

impl SaliencyMap {
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.grid[t * self.outputs + i]
    }

    /// Writes `frame,p1..pK`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["frame".to_string()];
        header.extend((1..=self.outputs).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for t in 0..self.frames {
            let mut row = vec![t.to_string()];
            row.extend((0..self.outputs).map(|i| self.get(t, i).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sensitivity_map(net: &Network, samples: &[FeatureTensor]) -> Result<SaliencyMap> {
    if samples.is_empty() {
        return Err(Error::invalid("saliency needs at least one sample"));
    }
    let spec = net.spec();
    let batch = net.batch(samples)?;
    let (n, len, o, c) = (samples.len(), spec.length, spec.outputs, spec.in_channels);
    let mut grid = vec![0.0; len * o];
    for i in 0..o {
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..o).map(|k| if k == i { 1.0 } else { 0.0 }).collect()).collect();
        let dx = net.input_gradient(&batch, &w);
        for ch in 0..c {
            let scale = net.input_scale()[ch];
            for b in 0..n {
                for t in 0..len {
                    grid[t * o + i] += (dx[ch * n * len + b * len + t] * scale).abs() / n as f64;
                }
            }
        }
    }
    Ok(SaliencyMap {
        frames: len,
        outputs: o,
        grid,
    })
}

#[cfg(test)]
mod tests;
