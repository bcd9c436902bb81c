//! Run configuration, read from a TOML file.
//!
//! ```toml
//! config_version = 1
//! output_dir = "out"
//!
//! [input]
//! kind = "synthetic"          # or "csv"
//! n_nodes = 50
//! n_features = 10
//! n_classes = 3
//! noise = 0.05
//! seed = 0
//! # kind = "csv" takes: path, has_header, has_labels
//!
//! [graph]
//! k = 20
//! base_conductivity = 1.0
//! b0 = 1.0
//! distance_transform = "neg_log"   # or "identity"
//! velocity_sign = "magnitude"      # or "negative"
//!
//! [embed]                          # every field optional
//! dim = 10
//! lr = 3e-5
//! epochs = 500
//!
//! [eval]
//! k_vote = 5
//!
//! [experiment]                     # needed by `simulate`
//! missing_fractions = [0.0, 0.25]
//! holdout_fractions = [0.2]
//! trials = 5
//! base_seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use softmanifold::{
    CsvOptions, DistanceTransform, EmbedConfig, ExperimentGrid, FeatureMatrix, FluidConfig,
    SyntheticSpec, VelocitySign,
};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub input: InputConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub experiment: Option<ExperimentGrid>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    Synthetic {
        n_nodes: usize,
        n_features: usize,
        n_classes: usize,
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        has_labels: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    pub base_conductivity: f64,
    pub b0: f64,
    pub distance_transform: DistanceTransform,
    pub velocity_sign: VelocitySign,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            k: 10,
            base_conductivity: 1.0,
            b0: 1.0,
            distance_transform: DistanceTransform::Identity,
            velocity_sign: VelocitySign::Magnitude,
        }
    }
}

impl GraphConfig {
    pub fn fluid(&self) -> FluidConfig {
        FluidConfig {
            b0: self.b0,
            velocity_sign: self.velocity_sign,
            transform: self.distance_transform,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_vote: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k_vote: 5 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Parses and validates; relative input paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let (InputConfig::Csv { path, .. }, Some(base)) = (&mut cfg.input, base) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.config_version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config_version {} (expected {CONFIG_VERSION})",
                self.config_version
            ));
        }
        match &self.input {
            InputConfig::Csv { path, .. } if !path.is_file() => {
                return bad(format!("input file {} does not exist", path.display()));
            }
            InputConfig::Synthetic {
                n_nodes,
                n_features,
                n_classes,
                noise,
                ..
            } => {
                if *n_nodes < 2 || *n_features < 1 || *n_classes < 1 || *n_classes > *n_nodes {
                    return bad("synthetic input needs n_nodes >= 2, n_features >= 1, 1 <= n_classes <= n_nodes".into());
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return bad(format!("synthetic noise must be >= 0, got {noise}"));
                }
            }
            _ => {}
        }
        if self.graph.k < 1 {
            return bad("graph.k must be >= 1".into());
        }
        if !(self.graph.base_conductivity > 0.0 && self.graph.base_conductivity.is_finite()) {
            return bad("graph.base_conductivity must be > 0".into());
        }
        if !(self.graph.b0 > 0.0 && self.graph.b0.is_finite()) {
            return bad("graph.b0 must be > 0".into());
        }
        if self.eval.k_vote < 1 {
            return bad("eval.k_vote must be >= 1".into());
        }
        self.embed
            .validate()
            .map_err(|e| CliError::Config(format!("embed: {e}")))?;
        if let Some(grid) = &self.experiment {
            grid.validate()
                .map_err(|e| CliError::Config(format!("experiment: {e}")))?;
        }
        Ok(())
    }

    pub fn load_features(&self) -> Result<FeatureMatrix, CliError> {
        let fm = match &self.input {
            InputConfig::Synthetic {
                n_nodes,
                n_features,
                n_classes,
                noise,
                seed,
            } => softmanifold::generate_synthetic(&SyntheticSpec {
                n_nodes: *n_nodes,
                n_features: *n_features,
                n_classes: *n_classes,
                noise: *noise,
                seed: *seed,
            })?,
            InputConfig::Csv {
                path,
                has_header,
                has_labels,
            } => softmanifold::load_csv(
                path,
                CsvOptions {
                    has_header: *has_header,
                    has_labels: *has_labels,
                },
            )?,
        };
        Ok(fm)
    }
}
