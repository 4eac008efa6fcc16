//! Metrics and experiment harnesses over simulated ropes.
//!
//! Every harness returns a table that writes a CSV with a fixed header and
//! a JSON summary, see [`write_outputs`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Mode, Network, TrainSet};
use crate::observation::{CameraModel, TrackedPoints};
use crate::params::{sample_lhs, NormalizedParams, ParamBounds, RopeParams, NUM_PARAMS, PARAM_NAMES};
use crate::seeds::derive_seed;

mod importance;
mod sensitivity;
mod transfer;
mod wiggles;

pub use importance::{
    full_pipeline_experiment, importance_ablation, FullPipelineConfig, FullPipelineRow, FullPipelineSummary,
    FullPipelineTable, ImportanceCondition, ImportanceConfig, ImportanceRow, ImportanceRun, ImportanceTable,
    Reference,
};
pub use sensitivity::{
    single_trajectory_sensitivity, strike_like_plan, sweep, tip_std_series, SensitivityConfig, SensitivityRow,
    SensitivitySummaryRow, SensitivityTable,
};
pub use transfer::{transfer_experiment, TransferConfig, TransferRow, TransferSummary, TransferTable};
pub use wiggles::{wiggle_ablation, WiggleAblationConfig, WiggleAblationTable, WiggleVariant};

/// Rows of an experiment table.
pub trait Table {
    type Summary: Serialize;

    fn header(&self) -> &'static [&'static str];
    fn rows(&self) -> Vec<Vec<String>>;
    fn summary(&self) -> Self::Summary;

    fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in self.rows() {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `{experiment}_seed{seed}`.
pub fn output_stem(experiment: &str, seed: u64) -> String {
    format!("{experiment}_seed{seed}")
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_outputs<T: Table>(table: &T, dir: &Path, experiment: &str, seed: u64) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let stem = output_stem(experiment, seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    table.write_csv(fs::File::create(&csv_path)?)?;
    let mut text = serde_json::to_string_pretty(&table.summary())?;
    text.push('\n');
    fs::write(&json_path, text)?;
    Ok((csv_path, json_path))
}

/// Held-out ropes for the harnesses, disjoint in seed space from any
/// dataset generated with the same seed.
pub fn held_out_ropes(bounds: &ParamBounds, n: usize, seed: u64) -> Vec<RopeParams> {
    sample_lhs(n, bounds, derive_seed(seed, &[0x4e4f]))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn same_shape(a: &TrackedPoints, b: &TrackedPoints) -> Result<()> {
    if a.num_points() != b.num_points() || a.num_frames() != b.num_frames() {
        return Err(Error::Shape {
            expected: format!("{} frames of {} points", a.num_frames(), a.num_points()),
            actual: format!("{} frames of {} points", b.num_frames(), b.num_points()),
        });
    }
    Ok(())
}

/// Magnitude spectra of every mean-removed point coordinate, bins 1..=T/2,
/// concatenated point by point, u before v.
pub fn magnitude_spectra(tracked: &TrackedPoints) -> Vec<f64> {
    let t = tracked.num_frames();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t);
    let mut out = Vec::with_capacity(tracked.num_points() * 2 * (t / 2));
    let mut buf = vec![Complex::new(0.0, 0.0); t];
    for i in 0..tracked.num_points() {
        for axis in 0..2 {
            let m = tracked.frames().map(|f| f[i][axis]).sum::<f64>() / t as f64;
            for (b, f) in buf.iter_mut().zip(tracked.frames()) {
                *b = Complex::new(f[i][axis] - m, 0.0);
            }
            fft.process(&mut buf);
            out.extend(buf[1..=t / 2].iter().map(|c| c.norm()));
        }
    }
    out
}

/// Pearson correlation; `None` when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between the Fourier magnitude spectra of two tracks.
pub fn spectral_correlation(a: &TrackedPoints, b: &TrackedPoints) -> Result<f64> {
    same_shape(a, b)?;
    if a.frame_rate() != b.frame_rate() {
        return Err(Error::invalid("tracks have different frame rates"));
    }
    pearson(&magnitude_spectra(a), &magnitude_spectra(b)).ok_or_else(|| Error::invalid("zero-variance spectrum"))
}

/// Mean image-plane distance between corresponding points, in centimetres
/// at the camera's nominal depth.
pub fn point_distance(a: &TrackedPoints, b: &TrackedPoints, camera: &CameraModel) -> Result<f64> {
    same_shape(a, b)?;
    let px = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(px * camera.depth / camera.focal * 100.0)
}

/// Error of one parameter (or their mean, for the overall row).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamError {
    pub parameter: String,
    pub mae_normalized: f64,
    /// In the parameter's own units; absent for the overall row.
    pub mae_raw: Option<f64>,
    pub relative_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InDomainReport {
    pub samples: usize,
    pub rows: Vec<ParamError>,
    pub overall: ParamError,
}

/// Per-parameter errors of unit-box predictions against unit-box truths.
/// Raw values are not rounded, so `num_links` errors are fractional.
pub fn in_domain_errors(
    predicted: &[NormalizedParams],
    truth: &[NormalizedParams],
    bounds: &ParamBounds,
) -> Result<InDomainReport> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape {
            expected: format!("{} predictions", truth.len()),
            actual: predicted.len().to_string(),
        });
    }
    bounds.check()?;
    let n = truth.len() as f64;
    let rows: Vec<ParamError> = (0..NUM_PARAMS)
        .map(|k| {
            let b = bounds.get(k);
            let (mut norm, mut raw, mut rel) = (0.0, 0.0, 0.0);
            for (p, t) in predicted.iter().zip(truth) {
                let d = (p.values[k] - t.values[k]).abs();
                let t_raw = b.min + t.values[k] * b.span();
                norm += d;
                raw += d * b.span();
                rel += d * b.span() / t_raw.abs();
            }
            ParamError {
                parameter: PARAM_NAMES[k].to_string(),
                mae_normalized: norm / n,
                mae_raw: Some(raw / n),
                relative_error_pct: 100.0 * rel / n,
            }
        })
        .collect();
    let overall = ParamError {
        parameter: "overall".into(),
        mae_normalized: mean(&rows.iter().map(|r| r.mae_normalized).collect::<Vec<_>>()),
        mae_raw: None,
        relative_error_pct: mean(&rows.iter().map(|r| r.relative_error_pct).collect::<Vec<_>>()),
    };
    Ok(InDomainReport {
        samples: truth.len(),
        rows,
        overall,
    })
}

/// Clamped unit-box predictions for every sample of `set`.
pub fn predict_set(net: &Network, set: &TrainSet) -> Result<Vec<NormalizedParams>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.features.chunks(32) {
        let batch = net.batch(chunk)?;
        for row in net.predict(&batch, Mode::Eval) {
            let values: [f64; NUM_PARAMS] = row.try_into().map_err(|v: Vec<f64>| Error::Shape {
                expected: format!("{NUM_PARAMS} outputs"),
                actual: v.len().to_string(),
            })?;
            out.push(NormalizedParams::clamped(values));
        }
    }
    Ok(out)
}

/// Error report of a trained regressor on a labelled set.
pub fn in_domain_report(net: &Network, test: &TrainSet, bounds: &ParamBounds) -> Result<InDomainReport> {
    let predicted = predict_set(net, test)?;
    let truth = test
        .targets
        .iter()
        .map(|t| {
            let values: [f64; NUM_PARAMS] = t.as_slice().try_into().map_err(|_| Error::Shape {
                expected: format!("{NUM_PARAMS} targets"),
                actual: t.len().to_string(),
            })?;
            Ok(NormalizedParams::new(values))
        })
        .collect::<Result<Vec<_>>>()?;
    in_domain_errors(&predicted, &truth, bounds)
}

impl Table for InDomainReport {
    type Summary = InDomainReport;

    fn header(&self) -> &'static [&'static str] {
        &["parameter", "mae_normalized", "mae_raw", "relative_error_pct"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .chain([&self.overall])
            .map(|r| {
                vec![
                    r.parameter.clone(),
                    r.mae_normalized.to_string(),
                    r.mae_raw.map(|v| v.to_string()).unwrap_or_default(),
                    r.relative_error_pct.to_string(),
                ]
            })
            .collect()
    }

    fn summary(&self) -> InDomainReport {
        self.clone()
    }
}

#[cfg(test)]
mod tests;
