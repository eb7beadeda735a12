//! Two-stage training.
//!
//! Layerwise stage: for each unit `i`, the batch is pushed through the frozen
//! encoders `1..i`, and only unit `i`'s encoder and decoder are updated to
//! reconstruct their own input. Global stage: all encoders are chained into
//! one autoencoder (the output of encoder `L` is the reconstruction) and
//! trained end to end; decoders are left untouched.

pub mod config;
pub mod optim;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::{StageMode, TrainConfig, Variant};
pub use optim::{Optimizer, OptimizerKind};

use crate::data::{batch_indices, LabeledDataset};
use crate::error::{Error, Result};
use crate::loss::{self, LossBreakdown, Objective, ReconKind};
use crate::network::{backward_all, forward_all, Cache, Layer, StackedAutoencoder};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const NOISE_SALT: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Zero-based unit index.
    Layerwise { unit: usize },
    Global,
}

impl Stage {
    /// File-friendly name, e.g. `layerwise_unit1` or `global`.
    pub fn name(&self) -> String {
        match self {
            Stage::Layerwise { unit } => format!("layerwise_unit{}", unit + 1),
            Stage::Global => "global".into(),
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Stage::Layerwise { unit } => (*unit as u64 + 1) << 32,
            Stage::Global => 0,
        }
    }
}

/// Batch-averaged loss components of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub gid: f64,
    pub lid: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageLog {
    pub stage: Stage,
    pub records: Vec<EpochRecord>,
}

impl StageLog {
    pub const CSV_HEADER: &'static str = "epoch,reconstruction,gid,lid,total";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.reconstruction, r.gid, r.lid, r.total);
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub stages: Vec<StageLog>,
}

impl TrainLog {
    pub fn stage(&self, stage: Stage) -> Option<&StageLog> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.stages.extend(other.stages);
    }
}

/// Objective for a configuration (baseline mode zeroes the ID weights).
pub fn objective<T: Scalar>(cfg: &TrainConfig) -> Objective<T> {
    let (lg, ll) = cfg.effective_lambdas();
    Objective {
        kind: cfg.recon_kind,
        recon_weight: T::lit(cfg.recon_weight),
        lambda_gid: T::lit(lg),
        lambda_lid: T::lit(ll),
    }
}

/// Loss value and gradients produced for one batch.
#[derive(Clone, Debug)]
pub struct BatchGrads<T> {
    pub loss: LossBreakdown<T>,
    /// Sparse-variant penalty, already included in nothing else.
    pub sparsity: T,
    /// Gradients in the same order as the trained parameter list.
    pub grads: Vec<Tensor<T>>,
}

impl<T: Scalar> BatchGrads<T> {
    pub fn total(&self) -> T {
        self.loss.total + self.sparsity
    }
}

fn sparsity_term<T: Scalar>(variant: Variant, h: &Tensor<T>) -> Option<(T, Tensor<T>)> {
    match variant {
        Variant::Sparse { sparsity_weight } if sparsity_weight > 0.0 => {
            let w = T::lit(sparsity_weight);
            let n = T::from_count(h.len());
            let mean_abs = h.data().iter().fold(T::zero(), |a, &v| a + v.abs()) / n;
            let grad = h.map(|v| w * v.signum() / n);
            Some((w * mean_abs, grad))
        }
        _ => None,
    }
}

/// Encoder input for a batch: adds seeded Gaussian noise for the denoising
/// variant, otherwise returns the batch unchanged.
pub fn apply_variant<T: Scalar>(batch: &Tensor<T>, variant: Variant, rng: &mut ChaCha8Rng) -> Tensor<T> {
    match variant {
        Variant::Denoising { noise_std } if noise_std > 0.0 => {
            let mut out = batch.clone();
            for v in out.data_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += T::lit(noise_std * z);
            }
            out
        }
        _ => batch.clone(),
    }
}

fn flatten_grads<T>(per_layer: Vec<Vec<Tensor<T>>>, out: &mut Vec<Tensor<T>>) {
    out.extend(per_layer.into_iter().flatten());
}

fn labels_for<T>(unit: usize, part: &str, layers: &[Layer<T>], out: &mut Vec<String>) {
    for (l, layer) in layers.iter().enumerate() {
        for (p, _) in layer.params.iter().enumerate() {
            let which = if p == 0 { "weight" } else { "bias" };
            out.push(format!("unit {} {part} layer {l} ({:?}) {which}", unit + 1, layer.spec));
        }
    }
}

/// Loss and gradients for unit `unit` on its own input `input` (the output of
/// the frozen encoders before it). `fed` is what the encoder sees (noisy for
/// the denoising variant); the reconstruction target is always `input`.
/// Gradients are ordered: encoder params then decoder params.
pub fn unit_step_grads<T: Scalar>(
    model: &StackedAutoencoder<T>,
    unit: usize,
    input: &Tensor<T>,
    fed: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<BatchGrads<T>> {
    let ae = &model.units[unit];
    let (h, enc_caches) = forward_all(&ae.encoder, fed)?;
    let (xh, dec_caches) = forward_all(&ae.decoder, &h)?;
    let (loss, g) = objective::<T>(cfg).evaluate_with_grad(input, &xh)?;
    let (mut gh, dec_grads) = backward_all(&ae.decoder, &dec_caches, g)?;
    let mut sparsity = T::zero();
    if let Some((v, sg)) = sparsity_term(cfg.variant, &h) {
        sparsity = v;
        gh.axpy(T::one(), &sg)?;
    }
    let (_, enc_grads) = backward_all(&ae.encoder, &enc_caches, gh)?;
    let mut grads = Vec::new();
    flatten_grads(enc_grads, &mut grads);
    flatten_grads(dec_grads, &mut grads);
    Ok(BatchGrads { loss, sparsity, grads })
}

/// Loss and gradients of the chained encoders on `target`, fed `fed`.
/// Gradients are ordered by unit, then layer, then parameter.
pub fn global_step_grads<T: Scalar>(
    model: &StackedAutoencoder<T>,
    target: &Tensor<T>,
    fed: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<BatchGrads<T>> {
    let l = model.num_units();
    let bottleneck = l / 2 - 1;
    let mut caches: Vec<Vec<Cache<T>>> = Vec::with_capacity(l);
    let mut cur = fed.clone();
    let mut sparse = None;
    for (u, unit) in model.units.iter().enumerate() {
        let (y, c) = forward_all(&unit.encoder, &cur)?;
        caches.push(c);
        if u == bottleneck {
            sparse = sparsity_term(cfg.variant, &y);
        }
        cur = y;
    }
    let (loss, mut g) = objective::<T>(cfg).evaluate_with_grad(target, &cur)?;
    let mut per_unit = vec![Vec::new(); l];
    let mut sparsity = T::zero();
    for u in (0..l).rev() {
        if u == bottleneck {
            if let Some((v, sg)) = &sparse {
                sparsity = *v;
                g.axpy(T::one(), sg)?;
            }
        }
        let (gx, grads) = backward_all(&model.units[u].encoder, &caches[u], g)?;
        per_unit[u] = grads;
        g = gx;
    }
    let mut grads = Vec::new();
    for grads_u in per_unit {
        flatten_grads(grads_u, &mut grads);
    }
    Ok(BatchGrads { loss, sparsity, grads })
}

#[derive(Default)]
struct Accumulator {
    recon: f64,
    gid: f64,
    lid: f64,
    total: f64,
    batches: usize,
}

impl Accumulator {
    fn add<T: Scalar>(&mut self, b: &BatchGrads<T>) -> Result<()> {
        let total = b.total().as_f64();
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("loss became {total}")));
        }
        self.recon += b.loss.reconstruction.as_f64();
        self.gid += b.loss.gid_term.as_f64();
        self.lid += b.loss.lid_term.as_f64();
        self.total += total;
        self.batches += 1;
        Ok(())
    }

    fn record(&self, epoch: usize) -> Result<EpochRecord> {
        if self.batches == 0 {
            return Err(Error::Validation("no batch of at least 2 samples in the training split".into()));
        }
        let n = self.batches as f64;
        Ok(EpochRecord {
            epoch,
            reconstruction: self.recon / n,
            gid: self.gid / n,
            lid: self.lid / n,
            total: self.total / n,
        })
    }
}

fn check_inputs<T: Scalar>(model: &StackedAutoencoder<T>, data: &LabeledDataset<T>, cfg: &TrainConfig) -> Result<()> {
    cfg.validate(Some(&model.spec))?;
    if data.sample_shape() != model.spec.input_shape {
        return Err(Error::Dimension {
            op: "train",
            detail: format!("data samples {:?}, model input {:?}", data.sample_shape(), model.spec.input_shape),
        });
    }
    if data.train.len() < 2 {
        return Err(Error::Validation("training split needs at least 2 samples".into()));
    }
    if cfg.recon_kind == ReconKind::Bce && !data.in_unit_range() {
        return Err(Error::Validation("binary cross entropy needs data in [0, 1]".into()));
    }
    Ok(())
}

/// Layerwise stage; returns one stage log per unit (none when the epoch
/// count is zero).
pub fn train_layerwise<T: Scalar>(
    model: &mut StackedAutoencoder<T>,
    data: &LabeledDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    check_inputs(model, data, cfg)?;
    let mut log = TrainLog::default();
    if cfg.layerwise_epochs == 0 {
        return Ok(log);
    }
    for unit in 0..model.num_units() {
        let stage = Stage::Layerwise { unit };
        let mut labels = Vec::new();
        labels_for(unit, "encoder", &model.units[unit].encoder, &mut labels);
        labels_for(unit, "decoder", &model.units[unit].decoder, &mut labels);
        let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
        let mut records = Vec::with_capacity(cfg.layerwise_epochs);
        for epoch in 0..cfg.layerwise_epochs {
            let stream = stage.stream() | epoch as u64;
            let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NOISE_SALT);
            noise_rng.set_stream(stream);
            let mut acc = Accumulator::default();
            for idx in batch_indices(&data.train, cfg.batch_size, cfg.seed, stream) {
                let batch = data.samples.select(&idx);
                let input = model.encode_stack(&batch, unit)?;
                let fed = apply_variant(&input, cfg.variant, &mut noise_rng);
                let step = unit_step_grads(model, unit, &input, &fed, cfg)?;
                acc.add(&step)?;
                let ae = &mut model.units[unit];
                let mut params: Vec<&mut Tensor<T>> = ae
                    .encoder
                    .iter_mut()
                    .chain(ae.decoder.iter_mut())
                    .flat_map(|l| l.params.iter_mut())
                    .collect();
                opt.step(&mut params, &step.grads, &labels)?;
            }
            records.push(acc.record(epoch + 1)?);
        }
        log.stages.push(StageLog { stage, records });
    }
    Ok(log)
}

/// Global stage over the chained encoders.
pub fn train_global<T: Scalar>(
    model: &mut StackedAutoencoder<T>,
    data: &LabeledDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    check_inputs(model, data, cfg)?;
    let mut log = TrainLog::default();
    if cfg.global_epochs == 0 {
        return Ok(log);
    }
    let stage = Stage::Global;
    let mut labels = Vec::new();
    for (u, unit) in model.units.iter().enumerate() {
        labels_for(u, "encoder", &unit.encoder, &mut labels);
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut records = Vec::with_capacity(cfg.global_epochs);
    for epoch in 0..cfg.global_epochs {
        let stream = stage.stream() | epoch as u64;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NOISE_SALT);
        noise_rng.set_stream(stream);
        let mut acc = Accumulator::default();
        for idx in batch_indices(&data.train, cfg.batch_size, cfg.seed, stream) {
            let batch = data.samples.select(&idx);
            let fed = apply_variant(&batch, cfg.variant, &mut noise_rng);
            let step = global_step_grads(model, &batch, &fed, cfg)?;
            acc.add(&step)?;
            let mut params: Vec<&mut Tensor<T>> = model
                .units
                .iter_mut()
                .flat_map(|u| u.encoder.iter_mut())
                .flat_map(|l| l.params.iter_mut())
                .collect();
            opt.step(&mut params, &step.grads, &labels)?;
        }
        records.push(acc.record(epoch + 1)?);
    }
    log.stages.push(StageLog { stage, records });
    Ok(log)
}

/// Runs the stages selected by `cfg.stage_mode`.
pub fn train<T: Scalar>(model: &mut StackedAutoencoder<T>, data: &LabeledDataset<T>, cfg: &TrainConfig) -> Result<TrainLog> {
    check_inputs(model, data, cfg)?;
    let mut log = TrainLog::default();
    if cfg.stage_mode.runs_layerwise() {
        log.extend(train_layerwise(model, data, cfg)?);
    }
    if cfg.stage_mode.runs_global() {
        log.extend(train_global(model, data, cfg)?);
    }
    Ok(log)
}

/// Unweighted loss components of the full encoder stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackLosses {
    pub reconstruction: f64,
    pub gid: f64,
    pub lid: f64,
}

/// Averages reconstruction, GID penalty and LID penalty of the full stack
/// over consecutive batches of `indices` (a tail shorter than 2 is skipped).
pub fn measure_stack_losses<T: Scalar>(
    model: &StackedAutoencoder<T>,
    data: &LabeledDataset<T>,
    indices: &[usize],
    kind: ReconKind,
    batch_size: usize,
) -> Result<StackLosses> {
    if batch_size < 2 {
        return Err(Error::Validation("batch size must be at least 2".into()));
    }
    let (mut r, mut g, mut l, mut n) = (0.0, 0.0, 0.0, 0usize);
    for chunk in indices.chunks(batch_size).filter(|c| c.len() >= 2) {
        let x = data.samples.select(chunk);
        let xh = model.reconstruct(&x)?;
        r += loss::reconstruction(kind, &x, &xh)?.as_f64();
        g += loss::gid_penalty(&x, &xh)?.as_f64();
        l += loss::lid_penalty(&x, &xh)?.as_f64();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("no batch of at least 2 samples to measure".into()));
    }
    let n = n as f64;
    Ok(StackLosses {
        reconstruction: r / n,
        gid: g / n,
        lid: l / n,
    })
}
