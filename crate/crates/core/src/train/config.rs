use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use crate::error::{Error, Result};
use crate::loss::ReconKind;
use crate::network::AutoencoderSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Plain,
    /// Gaussian noise on the encoder input; the target stays clean.
    Denoising { noise_std: f64 },
    /// Adds `sparsity_weight · mean |h|` of the bottleneck activation.
    Sparse { sparsity_weight: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    #[default]
    TwoStage,
    LayerwiseOnly,
    GlobalOnly,
    /// Two stages with both ID weights forced to zero.
    Baseline,
}

impl StageMode {
    pub fn runs_layerwise(self) -> bool {
        !matches!(self, StageMode::GlobalOnly)
    }

    pub fn runs_global(self) -> bool {
        !matches!(self, StageMode::LayerwiseOnly)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_gid: f64,
    pub lambda_lid: f64,
    /// Weight of the reconstruction term (0 trains on the ID terms alone).
    pub recon_weight: f64,
    pub layerwise_epochs: usize,
    pub global_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub recon_kind: ReconKind,
    pub variant: Variant,
    pub stage_mode: StageMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_gid: 0.1,
            lambda_lid: 0.1,
            recon_weight: 1.0,
            layerwise_epochs: 100,
            global_epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
            recon_kind: ReconKind::Mse,
            variant: Variant::Plain,
            stage_mode: StageMode::TwoStage,
        }
    }
}

impl TrainConfig {
    /// ID weights after applying the stage mode.
    pub fn effective_lambdas(&self) -> (f64, f64) {
        match self.stage_mode {
            StageMode::Baseline => (0.0, 0.0),
            _ => (self.lambda_gid, self.lambda_lid),
        }
    }

    /// Field-level checks; returns every problem found.
    pub fn problems(&self, arch: Option<&AutoencoderSpec>) -> Vec<String> {
        let mut out = Vec::new();
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.lambda_gid) {
            out.push(format!("lambda_gid must be a nonnegative number, got {}", self.lambda_gid));
        }
        if !nonneg(self.lambda_lid) {
            out.push(format!("lambda_lid must be a nonnegative number, got {}", self.lambda_lid));
        }
        if !nonneg(self.recon_weight) {
            out.push(format!("recon_weight must be a nonnegative number, got {}", self.recon_weight));
        }
        if self.batch_size < 2 {
            out.push(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        match self.optimizer {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                out.push(format!("optimizer.momentum must lie in [0, 1), got {momentum}"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                out.push("optimizer: Adam needs beta1, beta2 in [0, 1) and eps > 0".into())
            }
            _ => {}
        }
        match self.variant {
            Variant::Denoising { noise_std } if !nonneg(noise_std) => {
                out.push(format!("variant.noise_std must be nonnegative, got {noise_std}"))
            }
            Variant::Sparse { sparsity_weight } if !nonneg(sparsity_weight) => {
                out.push(format!("variant.sparsity_weight must be nonnegative, got {sparsity_weight}"))
            }
            _ => {}
        }
        if let Some(arch) = arch {
            if let Err(e) = arch.validate() {
                out.push(format!("model: {e}"));
            }
            if arch.is_dense_only() && self.effective_lambdas().1 != 0.0 {
                out.push("lambda_lid must be 0 for a dense-only model (LID needs multi-channel maps)".into());
            }
        }
        out
    }

    pub fn validate(&self, arch: Option<&AutoencoderSpec>) -> Result<()> {
        let p = self.problems(arch);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p.join("; ")))
        }
    }
}
