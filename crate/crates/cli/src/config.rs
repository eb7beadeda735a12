//! Experiment configuration files (TOML).
//!
//! ```toml
//! [dataset]
//! kind = "image"            # "linear", "image" or "idx"
//! intrinsic_dim = 8
//! shape = [3, 16, 16]
//! classes = 4
//! per_class = 100
//! test_fraction = 0.2
//!
//! [model]
//! kind = "conv"             # "conv", "dense" or "explicit"
//! widths = [8, 16]
//!
//! [training]
//! lambda_gid = 0.1
//! global_epochs = 20
//!
//! [evaluation]
//! k = [5, 10, 15]
//!
//! [output]
//! dir = "runs/demo"
//! ```

use std::path::{Path, PathBuf};

use aeidc::data::{gen_image_manifold, gen_linear_manifold, load_idx, LabeledDataset, SyntheticSpec};
use aeidc::loss::ReconKind;
use aeidc::network::{Activation, AutoencoderSpec, Shape3, UnitSpec};
use aeidc::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Linear(SyntheticSpec),
    Image(SyntheticSpec),
    /// Unsigned-byte IDX files. Without a separate test pair, `test_fraction`
    /// of each class is held out.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

impl DatasetConfig {
    /// Relative IDX paths are resolved against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetConfig::Idx {
            images,
            labels,
            test_images,
            test_labels,
            ..
        } = self
        {
            for p in [Some(images), Some(labels), test_images.as_mut(), test_labels.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn load(&self) -> Result<LabeledDataset<f64>, CliError> {
        let ds = match self {
            DatasetConfig::Linear(s) => gen_linear_manifold(s)?,
            DatasetConfig::Image(s) => gen_image_manifold(s)?,
            DatasetConfig::Idx {
                images,
                labels,
                test_images,
                test_labels,
                test_fraction,
                split_seed,
            } => {
                let train = load_idx(images, labels).map_err(|e| CliError::data(format!("{}: {e}", images.display())))?;
                match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => {
                        let test = load_idx(ti, tl).map_err(|e| CliError::data(format!("{}: {e}", ti.display())))?;
                        train.with_test_set(test)?
                    }
                    (None, None) => train.with_split(*test_fraction, *split_seed)?,
                    _ => return Err(CliError::Config("dataset: test_images and test_labels go together".into())),
                }
            }
        };
        Ok(ds)
    }

    /// Sample shape without loading anything, when it is known statically.
    pub fn declared_shape(&self) -> Option<Shape3> {
        match self {
            DatasetConfig::Linear(s) | DatasetConfig::Image(s) => Some(s.shape),
            DatasetConfig::Idx { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Stride-2 convolutions with the given channel widths, mirrored.
    Conv {
        widths: Vec<usize>,
        #[serde(default)]
        hidden_activation: Option<Activation>,
        #[serde(default)]
        recon_activation: Option<Activation>,
    },
    /// Fully connected layers with the given widths, mirrored.
    Dense {
        widths: Vec<usize>,
        #[serde(default)]
        hidden_activation: Option<Activation>,
        #[serde(default)]
        recon_activation: Option<Activation>,
    },
    Explicit { units: Vec<UnitSpec> },
}

impl ModelConfig {
    /// Builds the architecture. Unset activations default to ReLU hidden
    /// layers and linear reconstructions for MSE, all sigmoid for BCE.
    pub fn architecture(&self, input: Shape3, kind: ReconKind) -> aeidc::Result<AutoencoderSpec> {
        let defaults = |h: &Option<Activation>, r: &Option<Activation>| match kind {
            ReconKind::Mse => (h.unwrap_or(Activation::Relu), *r),
            ReconKind::Bce => (h.unwrap_or(Activation::Sigmoid), Some(r.unwrap_or(Activation::Sigmoid))),
        };
        match self {
            ModelConfig::Conv {
                widths,
                hidden_activation,
                recon_activation,
            } => {
                let (h, r) = defaults(hidden_activation, recon_activation);
                AutoencoderSpec::conv_preset(input, widths, h, r)
            }
            ModelConfig::Dense {
                widths,
                hidden_activation,
                recon_activation,
            } => {
                let (h, r) = defaults(hidden_activation, recon_activation);
                AutoencoderSpec::dense_preset(input, widths, h, r)
            }
            ModelConfig::Explicit { units } => {
                let spec = AutoencoderSpec {
                    input_shape: input,
                    units: units.clone(),
                };
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: Vec<usize>,
    /// Cluster count; defaults to the number of classes.
    pub kmeans_k: Option<usize>,
    pub restarts: usize,
    pub geodesic: bool,
    pub geodesic_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: vec![5, 10, 15],
            kmeans_k: None,
            restarts: 10,
            geodesic: false,
            geodesic_k: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs/default".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative dataset paths are taken from the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.dataset.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Every field-level problem that can be found before loading data.
    pub fn problems(&self, input: Option<Shape3>) -> Vec<String> {
        let mut out = Vec::new();
        let arch = input.map(|s| self.model.architecture(s, self.training.recon_kind));
        match &arch {
            Some(Err(e)) => out.push(format!("model: {e}")),
            Some(Ok(a)) => out.extend(self.training.problems(Some(a)).into_iter().map(|p| format!("training: {p}"))),
            None => out.extend(self.training.problems(None).into_iter().map(|p| format!("training: {p}"))),
        }
        let e = &self.evaluation;
        if e.k.is_empty() || e.k.contains(&0) {
            out.push("evaluation.k must be a nonempty list of positive integers".into());
        }
        if e.restarts == 0 {
            out.push("evaluation.restarts must be positive".into());
        }
        if e.kmeans_k == Some(0) {
            out.push("evaluation.kmeans_k must be positive".into());
        }
        if e.geodesic_k == 0 {
            out.push("evaluation.geodesic_k must be positive".into());
        }
        if let DatasetConfig::Linear(s) | DatasetConfig::Image(s) = &self.dataset {
            if let Err(err) = s.validate() {
                out.push(format!("dataset: {err}"));
            }
        }
        out
    }

    pub fn validate(&self, input: Option<Shape3>) -> Result<(), CliError> {
        let p = self.problems(input);
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p.join("\n")))
        }
    }
}
