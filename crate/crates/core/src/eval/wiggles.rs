use serde::{Deserialize, Serialize};

use super::{held_out_ropes, in_domain_report, InDomainReport, Table};
use crate::dataset::{generate, generate_for, DatasetConfig};
use crate::error::{Error, Result};
use crate::nn::{train, Network, NetworkSpec, TrainConfig};
use crate::seeds::derive_seed;
use crate::wiggle::WiggleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiggleVariant {
    pub name: String,
    pub wiggle: WiggleSpec,
}

impl WiggleVariant {
    pub fn new(name: &str, wiggle: WiggleSpec) -> Self {
        WiggleVariant {
            name: name.into(),
            wiggle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WiggleAblationConfig {
    pub variants: Vec<WiggleVariant>,
    /// Template for every variant's training set; its wiggle is replaced.
    pub dataset: DatasetConfig,
    pub held_out: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for WiggleAblationConfig {
    /// 20°, 0.5 Hz sinusoid against a random planar trajectory, 300 ropes, 50 epochs.
    fn default() -> Self {
        WiggleAblationConfig {
            variants: vec![
                WiggleVariant::new("sine_20deg_0.5hz", WiggleSpec::sine(6, 20.0, 0.5)),
                WiggleVariant::new("random_1", WiggleSpec::random(1, 20.0, 8)),
            ],
            dataset: DatasetConfig {
                count: 300,
                ..DatasetConfig::default()
            },
            held_out: 100,
            train: TrainConfig {
                epochs: 50,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WiggleAblationTable {
    /// One report per variant, in configuration order.
    pub variants: Vec<(String, InDomainReport)>,
}

impl WiggleAblationTable {
    pub fn report(&self, name: &str) -> Option<&InDomainReport> {
        self.variants.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }
}

impl Table for WiggleAblationTable {
    type Summary = WiggleAblationTable;

    fn header(&self) -> &'static [&'static str] {
        &["wiggle", "parameter", "mae_normalized", "mae_raw", "relative_error_pct"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.variants
            .iter()
            .flat_map(|(name, report)| {
                report.rows.iter().chain([&report.overall]).map(move |r| {
                    vec![
                        name.clone(),
                        r.parameter.clone(),
                        r.mae_normalized.to_string(),
                        r.mae_raw.map(|v| v.to_string()).unwrap_or_default(),
                        r.relative_error_pct.to_string(),
                    ]
                })
            })
            .collect()
    }

    fn summary(&self) -> WiggleAblationTable {
        self.clone()
    }
}

/// Trains one regressor per wiggle and scores each on the same held-out
/// ropes, observed with that wiggle. All variants share training ropes,
/// noise draws and initialisation.
pub fn wiggle_ablation(cfg: &WiggleAblationConfig) -> Result<WiggleAblationTable> {
    if cfg.variants.len() < 2 {
        return Err(Error::invalid("the ablation needs at least two wiggles"));
    }
    if cfg.held_out == 0 {
        return Err(Error::invalid("the ablation needs held-out ropes"));
    }
    let held_out = held_out_ropes(&cfg.dataset.bounds, cfg.held_out, cfg.seed);
    let variants = cfg
        .variants
        .iter()
        .map(|v| {
            let train_cfg = DatasetConfig {
                wiggle: v.wiggle.clone(),
                seed: derive_seed(cfg.seed, &[1]),
                ..cfg.dataset.clone()
            };
            let test_cfg = DatasetConfig {
                seed: derive_seed(cfg.seed, &[2]),
                ..train_cfg.clone()
            };
            let train_set = generate(&train_cfg)?.train_set();
            let test_set = generate_for(&test_cfg, &held_out)?.train_set();
            let net = Network::new(NetworkSpec::for_layout(&train_cfg.layout), derive_seed(cfg.seed, &[3]))?;
            let trained = train(net, &train_set, &test_set, &cfg.train, |_| {})?;
            let report = in_domain_report(&trained.network, &test_set, &train_cfg.bounds)?;
            Ok((v.name.clone(), report))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WiggleAblationTable { variants })
}
