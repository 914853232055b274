//! Experiment configuration file: one TOML document with a section per
//! embedded config. All numeric fields are required so a typo'd or missing
//! field fails loudly with the field name; only `[train.init]` is optional
//! and defaults to the near-identity initialization.

use anyhow::{bail, Context};
use serde::Deserialize;

use auction_core::mechanism::NetConfig;
use auction_core::training::{InitConfig, TrainConfig};
use auction_core::valuation::ValuationModel;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub model: ModelSection,
    pub net: NetSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub t_min: f64,
    pub t_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub n: usize,
    pub k: usize,
    pub j: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub l2: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub dataset_size: usize,
    pub eval_every: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitSection,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        let d = InitConfig::default();
        Self {
            alpha_mean: d.alpha_mean,
            alpha_sd: d.alpha_sd,
            beta_mean: d.beta_mean,
            beta_sd: d.beta_sd,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).context("malformed experiment config")?;
        if config.scenario.trim().is_empty() {
            bail!("scenario name must be non-empty");
        }
        Ok(config)
    }

    pub fn model(&self) -> auction_core::Result<ValuationModel> {
        ValuationModel::new(self.model.t_min, self.model.t_max, self.model.c_min, self.model.c_max)
    }

    pub fn net_config(&self) -> auction_core::Result<NetConfig> {
        NetConfig::new(self.net.n, self.net.k, self.net.j, self.net.kappa)
    }

    pub fn train_config(&self, seed_override: Option<u64>) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            l2: t.l2,
            iterations: t.iterations,
            batch_size: t.batch_size,
            dataset_size: t.dataset_size,
            eval_every: t.eval_every,
            seed: seed_override.unwrap_or(t.seed),
            init: InitConfig {
                alpha_mean: t.init.alpha_mean,
                alpha_sd: t.init.alpha_sd,
                beta_mean: t.init.beta_mean,
                beta_sd: t.init.beta_sd,
            },
        }
    }

    /// A paper-grid cell with the Table-1 hyperparameters.
    pub fn grid_cell(n: usize, c_range: (f64, f64), kappa: f64, seed: u64) -> Self {
        let tag = |x: f64| format!("{:02}", (x * 10.0).round() as u32);
        Self {
            scenario: format!("n{n}_c{}_{}_k{}", tag(c_range.0), tag(c_range.1), kappa as u32),
            model: ModelSection { t_min: 0.0, t_max: 1.0, c_min: c_range.0, c_max: c_range.1 },
            net: NetSection { n, k: 5, j: 10, kappa },
            train: TrainSection {
                learning_rate: 1e-4,
                l2: 0.01,
                iterations: 4000,
                batch_size: 100,
                dataset_size: 1000,
                eval_every: 50,
                seed,
                init: InitSection::default(),
            },
        }
    }

    /// Canonical text form used for the provenance hash of generated cells.
    pub fn canonical_text(&self) -> String {
        let t = &self.train;
        format!(
            "scenario={} model=({},{},{},{}) net=({},{},{},{}) train=({},{},{},{},{},{},{}) init=({},{},{},{})",
            self.scenario,
            self.model.t_min,
            self.model.t_max,
            self.model.c_min,
            self.model.c_max,
            self.net.n,
            self.net.k,
            self.net.j,
            self.net.kappa,
            t.learning_rate,
            t.l2,
            t.iterations,
            t.batch_size,
            t.dataset_size,
            t.eval_every,
            t.seed,
            t.init.alpha_mean,
            t.init.alpha_sd,
            t.init.beta_mean,
            t.init.beta_sd,
        )
    }
}
