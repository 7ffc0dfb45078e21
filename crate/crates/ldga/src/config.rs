//! Experiment configuration.
//!
//! A config file is a flat TOML table whose keys are the long flag names of
//! [`Settings`] with `-` replaced by `_`. Values resolve in three steps:
//! profile defaults, then the file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ldga_core::embed::WalkConfig;
use ldga_core::metrics::{MetricConfig, NmiNormalization};
use ldga_core::objective::LossMode;
use ldga_core::synth::{CommunityCount, GeneratorConfig};
use ldga_core::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::EdgeListFormat;

pub const DEFAULT_TRIALS: usize = 10;
pub const MAX_SWEEP_KAPPA: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] ldga_core::Error),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// d=64, d_FFN=128.
    #[default]
    Desk,
    /// d=512, d_FFN=1024.
    Paper,
}

impl Profile {
    pub fn walk(self) -> WalkConfig {
        let dim = match self {
            Profile::Desk => 64,
            Profile::Paper => 512,
        };
        WalkConfig {
            dim,
            ..WalkConfig::default()
        }
    }

    pub fn train(self) -> TrainConfig {
        let ffn_dim = match self {
            Profile::Desk => 128,
            Profile::Paper => 1024,
        };
        TrainConfig {
            ffn_dim,
            epochs: 300,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    PerLayer,
    Pooled,
}

impl From<ModeArg> for LossMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerLayer => LossMode::PerLayer,
            ModeArg::Pooled => LossMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NmiArg {
    Geometric,
    Arithmetic,
    Max,
}

impl From<NmiArg> for NmiNormalization {
    fn from(m: NmiArg) -> Self {
        match m {
            NmiArg::Geometric => NmiNormalization::Geometric,
            NmiArg::Arithmetic => NmiNormalization::Arithmetic,
            NmiArg::Max => NmiNormalization::Max,
        }
    }
}

/// Every tunable option. All fields are optional so that a config file and
/// the command line can each set any subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Preset for embedding and hidden dimensions.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Master seed; per-trial seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Concurrent trials.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,

    /// Edge list file or per-layer directory; a graph is generated when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub graph_format: Option<EdgeListFormat>,
    /// Ground-truth `node label` file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Precomputed feature tensor; skips the random-walk embedding.
    #[arg(long)]
    pub features: Option<PathBuf>,

    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub avg_degree: Option<usize>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    #[arg(long)]
    pub degree_exponent: Option<f64>,
    #[arg(long)]
    pub community_exponent: Option<f64>,
    /// Planted community count, or `auto`.
    #[arg(long)]
    pub communities: Option<String>,
    /// Generator seed; defaults to the master seed.
    #[arg(long)]
    pub graph_seed: Option<u64>,

    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub walk_epochs: Option<usize>,
    #[arg(long)]
    pub walk_lr: Option<f64>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// One resolution for all layers, or one per layer.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Smallest kappa of a sweep.
    #[arg(long)]
    pub kappa_min: Option<usize>,
    /// Largest kappa of a sweep.
    #[arg(long)]
    pub kappa_max: Option<usize>,

    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long, value_enum)]
    pub nmi_normalization: Option<NmiArg>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Settings {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Settings) -> Settings {
        let base = &mut self;
        overlay!(
            base, top, profile, seed, trials, workers, output_dir, graph, graph_format, truth, features, nodes,
            layers, mu, avg_degree, max_degree, degree_exponent, community_exponent, communities, graph_seed, dim,
            window, walks_per_node, walk_length, negatives, walk_epochs, walk_lr, epochs, lr, weight_decay, beta1,
            beta2, eps, ffn_dim, kappa, alpha, gamma, mode, kappa_min, kappa_max, resolution, coupling,
            nmi_normalization,
        );
        self
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let profile = self.profile.unwrap_or_default();
        let seed = self.seed.unwrap_or(0);

        let source = match &self.graph {
            Some(path) => GraphSource::File {
                path: path.clone(),
                format: self.graph_format.unwrap_or_else(|| EdgeListFormat::detect(path)),
                truth: self.truth.clone(),
            },
            None => {
                let d = GeneratorConfig::default();
                let num_communities = match self.communities.as_deref() {
                    None | Some("auto") => CommunityCount::Auto,
                    Some(k) => CommunityCount::Fixed(
                        k.parse()
                            .map_err(|_| ConfigError::Invalid(format!("communities must be `auto` or an integer, got {k:?}")))?,
                    ),
                };
                let generator = GeneratorConfig {
                    num_nodes: self.nodes.unwrap_or(d.num_nodes),
                    num_layers: self.layers.unwrap_or(d.num_layers),
                    mu: self.mu.unwrap_or(d.mu),
                    avg_degree: self.avg_degree.unwrap_or(d.avg_degree),
                    max_degree: self.max_degree.unwrap_or(d.max_degree),
                    degree_exponent: self.degree_exponent.unwrap_or(d.degree_exponent),
                    community_exponent: self.community_exponent.unwrap_or(d.community_exponent),
                    num_communities,
                    seed: self.graph_seed.unwrap_or(seed),
                };
                generator.validate()?;
                GraphSource::Generated(generator)
            }
        };

        let w = profile.walk();
        let walk = WalkConfig {
            window: self.window.unwrap_or(w.window),
            walks_per_node: self.walks_per_node.unwrap_or(w.walks_per_node),
            walk_length: self.walk_length.unwrap_or(w.walk_length),
            dim: self.dim.unwrap_or(w.dim),
            negatives: self.negatives.unwrap_or(w.negatives),
            epochs: self.walk_epochs.unwrap_or(w.epochs),
            learning_rate: self.walk_lr.unwrap_or(w.learning_rate),
            seed,
        };
        walk.validate()?;

        let t = profile.train();
        let train = TrainConfig {
            epochs: self.epochs.unwrap_or(t.epochs),
            learning_rate: self.lr.unwrap_or(t.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(t.weight_decay),
            beta1: self.beta1.unwrap_or(t.beta1),
            beta2: self.beta2.unwrap_or(t.beta2),
            epsilon: self.eps.unwrap_or(t.epsilon),
            seed,
            kappa: self.kappa.unwrap_or(t.kappa),
            alpha: self.alpha.unwrap_or(t.alpha),
            gamma: self.gamma.clone().unwrap_or(t.gamma),
            mode: self.mode.map(LossMode::from).unwrap_or(t.mode),
            ffn_dim: self.ffn_dim.unwrap_or(t.ffn_dim),
        };
        train.validate()?;

        let kappa_sweep = match (self.kappa_min, self.kappa_max) {
            (None, None) => None,
            (lo, hi) => Some(KappaRange::new(lo.unwrap_or(2), hi.unwrap_or(20))?),
        };

        let m = MetricConfig::default();
        let config = ExperimentConfig {
            source,
            features: self.features.clone(),
            walk,
            train,
            trials: self.trials.unwrap_or(DEFAULT_TRIALS),
            kappa_sweep,
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("ldga-out")),
            master_seed: seed,
            workers: self.workers.unwrap_or(1),
            metrics: MetricConfig {
                resolution: self.resolution.unwrap_or(m.resolution),
                coupling: self.coupling.unwrap_or(m.coupling),
                nmi_normalization: self.nmi_normalization.map(Into::into).unwrap_or(m.nmi_normalization),
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    File {
        path: PathBuf,
        format: EdgeListFormat,
        truth: Option<PathBuf>,
    },
    Generated(GeneratorConfig),
}

/// Inclusive kappa range of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KappaRange {
    pub min: usize,
    pub max: usize,
}

impl KappaRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min < 2 || max > MAX_SWEEP_KAPPA || min > max {
            return Err(ConfigError::Invalid(format!(
                "kappa sweep {min}..={max} must be non-empty within 2..={MAX_SWEEP_KAPPA}"
            )));
        }
        Ok(KappaRange { min, max })
    }

    pub fn values(&self) -> impl Iterator<Item = usize> {
        self.min..=self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub source: GraphSource,
    pub features: Option<PathBuf>,
    pub walk: WalkConfig,
    /// Template for every trial; its seed is replaced per trial.
    pub train: TrainConfig,
    pub trials: usize,
    pub kappa_sweep: Option<KappaRange>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub workers: usize,
    pub metrics: MetricConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }
}
