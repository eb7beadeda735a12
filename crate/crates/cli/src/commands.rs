//! Subcommand bodies. Each returns its results as values and also writes the
//! files under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aeidc::data::{read_idx_tensor, write_idx_labels, write_idx_tensor_f64, write_idx_u8_images, LabeledDataset};
use aeidc::eval::{
    class_distance_matrix, cluster_and_score, geodesic_distances, grid_csv, knn_accuracy, EmbeddingSet, MetricsReport,
};
use aeidc::id::{gid, lid_per_sample};
use aeidc::network::{load_checkpoint, save_checkpoint, StackedAutoencoder};
use aeidc::train::{train_global, train_layerwise, StageMode, TrainLog};
use aeidc::Tensor;
use serde::Serialize;

use crate::config::{EvalConfig, ExperimentConfig};
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.aeidc";
/// Model after the layerwise stage, written only when a global stage follows.
pub const LAYERWISE_CHECKPOINT_FILE: &str = "checkpoint_layerwise.aeidc";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Samples per forward pass when embedding a whole split.
const EMBED_CHUNK: usize = 256;

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.training.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serialises");
    text.push('\n');
    write_file(path, text)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, files: Vec<String>) -> Result<(), CliError> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.training.seed,
        config: cfg,
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &m)
}

fn load_checked(cfg: &ExperimentConfig) -> Result<LabeledDataset<f64>, CliError> {
    cfg.validate(cfg.dataset.declared_shape())?;
    let data = cfg.dataset.load()?;
    cfg.validate(Some(data.sample_shape()))?;
    Ok(data)
}

pub struct TrainOutcome {
    pub model: StackedAutoencoder<f64>,
    pub log: TrainLog,
    pub data: LabeledDataset<f64>,
}

/// Initialises the model from `training.seed`, runs the configured stages and
/// writes the checkpoint, one loss curve per stage and the run manifest.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, CliError> {
    let data = load_checked(cfg)?;
    let arch = cfg.model.architecture(data.sample_shape(), cfg.training.recon_kind)?;
    let mut model = StackedAutoencoder::init(arch, cfg.training.seed)?;
    log::info!(
        "training {} parameters on {} samples ({:?})",
        model.param_count(),
        data.train.len(),
        cfg.training.stage_mode
    );
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    let mode = cfg.training.stage_mode;
    let mut log = TrainLog::default();
    if mode.runs_layerwise() {
        log.extend(train_layerwise(&mut model, &data, &cfg.training)?);
        if mode.runs_global() {
            save_checkpoint(&model, &dir.join(LAYERWISE_CHECKPOINT_FILE))?;
            files.push(LAYERWISE_CHECKPOINT_FILE.into());
        }
    }
    if mode.runs_global() {
        log.extend(train_global(&mut model, &data, &cfg.training)?);
    }

    for stage in &log.stages {
        let name = format!("loss_{}.csv", stage.stage.name());
        write_file(&dir.join(&name), stage.to_csv())?;
        files.push(name);
        if let (Some(first), Some(last)) = (stage.records.first(), stage.records.last()) {
            log::info!("{}: total {:.6} -> {:.6}", stage.stage.name(), first.total, last.total);
        }
    }
    save_checkpoint(&model, &dir.join(CHECKPOINT_FILE))?;
    files.push(CHECKPOINT_FILE.into());
    write_manifest(dir, "train", cfg, files)?;
    Ok(TrainOutcome { model, log, data })
}

/// Flattened encoder outputs of the given samples.
pub fn embed_split(
    model: &StackedAutoencoder<f64>,
    data: &LabeledDataset<f64>,
    indices: &[usize],
) -> Result<EmbeddingSet, CliError> {
    let mut vectors = Vec::new();
    for chunk in indices.chunks(EMBED_CHUNK) {
        vectors.extend_from_slice(model.embed(&data.samples.select(chunk))?.data());
    }
    let [c, h, w] = model.spec.embedding_shape()?;
    let labels = indices.iter().map(|&i| data.labels[i]).collect();
    Ok(EmbeddingSet::new(vectors, c * h * w, labels)?)
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
    pub geodesic: Option<Vec<Vec<Option<f64>>>>,
    pub class_distances: Option<Vec<Vec<Option<f64>>>>,
}

/// KNN from the train to the test split for every `k`; K-means, ARI/AMI and
/// (optionally) geodesic matrices on the test split.
pub fn evaluate_model(
    model: &StackedAutoencoder<f64>,
    data: &LabeledDataset<f64>,
    eval: &EvalConfig,
    seed: u64,
) -> Result<Evaluation, CliError> {
    if data.sample_shape() != model.spec.input_shape {
        return Err(CliError::data(format!(
            "model expects samples {:?}, dataset has {:?}",
            model.spec.input_shape,
            data.sample_shape()
        )));
    }
    if data.test.is_empty() || data.train.is_empty() {
        return Err(CliError::Config(
            "evaluation needs nonempty train and test splits (set dataset.test_fraction)".into(),
        ));
    }
    let train = embed_split(model, data, &data.train)?;
    let test = embed_split(model, data, &data.test)?;
    let mut knn = Vec::with_capacity(eval.k.len());
    for &k in &eval.k {
        knn.push((k, knn_accuracy(&train, &test, k)?));
    }
    let classes = data.num_classes();
    let k = eval.kmeans_k.unwrap_or(classes).min(test.len());
    let clustering = cluster_and_score(&test, k, eval.restarts, seed)?;
    let (geodesic, class_distances) = if eval.geodesic {
        let geo = geodesic_distances(&test, eval.geodesic_k)?;
        let cls = class_distance_matrix(&geo, &test.labels)?;
        (Some(geo.rows()), Some(cls))
    } else {
        (None, None)
    };
    Ok(Evaluation {
        report: MetricsReport::from_scores(&knn, Some(&clustering)),
        train,
        test,
        geodesic,
        class_distances,
    })
}

fn write_embeddings(dir: &Path, name: &str, set: &EmbeddingSet) -> Result<Vec<String>, CliError> {
    let t = Tensor::new(vec![set.len(), set.dim()], set.vectors().to_vec())?;
    let (v, l) = (format!("embeddings_{name}.idx"), format!("labels_{name}.idx"));
    write_idx_tensor_f64(&dir.join(&v), &t)?;
    write_idx_labels(&dir.join(&l), &set.labels)?;
    Ok(vec![v, l])
}

/// Loads a checkpoint (default: the one in the output directory) and writes
/// the metrics report, embeddings and optional distance grids.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Evaluation, CliError> {
    let data = load_checked(cfg)?;
    let dir = &cfg.output.dir;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| dir.join(CHECKPOINT_FILE));
    let model: StackedAutoencoder<f64> = load_checkpoint(&ckpt)
        .map_err(|e| CliError::data(format!("{}: {e}", ckpt.display())))?;
    let ev = evaluate_model(&model, &data, &cfg.evaluation, cfg.training.seed)?;
    create_dir(dir)?;
    write_json(&dir.join(METRICS_FILE), &ev.report)?;
    write_embeddings(dir, "train", &ev.train)?;
    write_embeddings(dir, "test", &ev.test)?;
    if let (Some(g), Some(c)) = (&ev.geodesic, &ev.class_distances) {
        write_file(&dir.join("geodesic.csv"), grid_csv(g))?;
        write_file(&dir.join("class_distances.csv"), grid_csv(c))?;
    }
    Ok(ev)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdSummary {
    pub samples: usize,
    pub gid: f64,
    pub lid_min: f64,
    pub lid_mean: f64,
    pub lid_max: f64,
}

impl IdSummary {
    pub fn text(&self) -> String {
        format!(
            "samples {}\nGID {}\nLID min {} mean {} max {}\n",
            self.samples, self.gid, self.lid_min, self.lid_mean, self.lid_max
        )
    }
}

/// GID of the whole batch and the spread of per-sample LID.
pub fn estimate_id(batch: &Tensor<f64>) -> Result<IdSummary, CliError> {
    let g = gid(batch)?.value();
    let lids: Vec<f64> = lid_per_sample(batch)?.into_iter().map(|v| v.value()).collect();
    let n = lids.len();
    Ok(IdSummary {
        samples: n,
        gid: g,
        lid_min: lids.iter().copied().fold(f64::INFINITY, f64::min),
        lid_mean: lids.iter().sum::<f64>() / n as f64,
        lid_max: lids.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Reads an IDX tensor as `[N, C, H, W]`: 2-D files become `[N, 1, 1, M]`
/// and 3-D files `[N, 1, H, W]`.
pub fn read_batch(path: &Path) -> Result<Tensor<f64>, CliError> {
    let t: Tensor<f64> = read_idx_tensor(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let shape = match *t.shape() {
        [n, m] => vec![n, 1, 1, m],
        [n, h, w] => vec![n, 1, h, w],
        [n, c, h, w] => vec![n, c, h, w],
        ref s => return Err(CliError::data(format!("{}: expected 2 to 4 dimensions, got {s:?}", path.display()))),
    };
    Ok(t.reshape(&shape)?)
}

pub fn cmd_estimate_id(input: Option<&Path>, cfg: Option<&ExperimentConfig>) -> Result<IdSummary, CliError> {
    let batch = match (input, cfg) {
        (Some(p), _) => read_batch(p)?,
        (None, Some(c)) => c.dataset.load()?.samples,
        (None, None) => return Err(CliError::Config("estimate-id needs --input or --config".into())),
    };
    estimate_id(&batch)
}

/// One trained-and-evaluated configuration of an ablation or sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub name: String,
    pub lambda_gid: f64,
    pub lambda_lid: f64,
    pub recon_weight: f64,
    pub stage_mode: StageMode,
    pub report: MetricsReport,
}

fn run_cell(base: &ExperimentConfig, name: &str, sub: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<CellResult, CliError> {
    let mut cfg = base.clone();
    edit(&mut cfg);
    cfg.output.dir = base.output.dir.join(sub).join(name);
    log::info!("cell {name}");
    let out = cmd_train(&cfg)?;
    let ev = evaluate_model(&out.model, &out.data, &cfg.evaluation, cfg.training.seed)?;
    write_json(&cfg.output.dir.join(METRICS_FILE), &ev.report)?;
    let (lambda_gid, lambda_lid) = cfg.training.effective_lambdas();
    Ok(CellResult {
        name: name.into(),
        lambda_gid,
        lambda_lid,
        recon_weight: cfg.training.recon_weight,
        stage_mode: cfg.training.stage_mode,
        report: ev.report,
    })
}

fn cells_csv(rows: &[CellResult], ks: &[usize]) -> String {
    let mut s = String::from("variant,lambda_gid,lambda_lid,recon_weight,stage_mode");
    for k in ks {
        let _ = write!(s, ",knn_k{k}");
    }
    s.push_str(",ari,ami\n");
    for r in rows {
        let mode = serde_json::to_value(r.stage_mode).expect("enum serialises");
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.name,
            r.lambda_gid,
            r.lambda_lid,
            r.recon_weight,
            mode.as_str().unwrap_or_default()
        );
        for k in ks {
            let _ = write!(s, ",{}", r.report.knn_accuracy[k]);
        }
        let _ = writeln!(s, ",{},{}", r.report.ari.unwrap_or(f64::NAN), r.report.ami.unwrap_or(f64::NAN));
    }
    s
}

pub const LOSS_VARIANTS: [&str; 5] = ["recon", "recon+gid", "recon+lid", "recon+gid+lid", "gid+lid"];
pub const STAGE_VARIANTS: [&str; 3] = ["layerwise_only", "global_only", "two_stage"];

/// Loss-term ablation with the configured λ values, plus the stage-mode
/// comparison when `stages` is set. Writes `ablation.csv`.
pub fn cmd_ablate(cfg: &ExperimentConfig, stages: bool) -> Result<Vec<CellResult>, CliError> {
    let (lg, ll) = (cfg.training.lambda_gid, cfg.training.lambda_lid);
    if !(lg > 0.0 && ll > 0.0) {
        return Err(CliError::Config("ablate needs positive training.lambda_gid and training.lambda_lid".into()));
    }
    cfg.validate(cfg.dataset.declared_shape())?;
    let base = {
        let mut b = cfg.clone();
        b.training.stage_mode = StageMode::TwoStage;
        b.training.recon_weight = 1.0;
        b
    };
    let mut rows = Vec::new();
    for name in LOSS_VARIANTS {
        let (g, l, w) = match name {
            "recon" => (0.0, 0.0, 1.0),
            "recon+gid" => (lg, 0.0, 1.0),
            "recon+lid" => (0.0, ll, 1.0),
            "recon+gid+lid" => (lg, ll, 1.0),
            _ => (lg, ll, 0.0),
        };
        rows.push(run_cell(&base, name, "ablate", |c| {
            c.training.lambda_gid = g;
            c.training.lambda_lid = l;
            c.training.recon_weight = w;
        })?);
    }
    if stages {
        for (name, mode) in STAGE_VARIANTS.iter().zip([StageMode::LayerwiseOnly, StageMode::GlobalOnly, StageMode::TwoStage]) {
            rows.push(run_cell(&base, name, "ablate", |c| c.training.stage_mode = mode)?);
        }
    }
    create_dir(&cfg.output.dir)?;
    write_file(&cfg.output.dir.join("ablation.csv"), cells_csv(&rows, &cfg.evaluation.k))?;
    write_manifest(&cfg.output.dir, "ablate", cfg, vec!["ablation.csv".into()])?;
    Ok(rows)
}

pub const DEFAULT_GRID: [f64; 4] = [0.0, 0.01, 0.1, 1.0];

/// Full-factorial λ sweep. Writes `sweep.csv` (one row per cell) and, for
/// every `k`, a λ_gid × λ_lid accuracy grid `sweep_grid_k{k}.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, gid_grid: &[f64], lid_grid: &[f64]) -> Result<Vec<CellResult>, CliError> {
    if gid_grid.is_empty() || lid_grid.is_empty() {
        return Err(CliError::Config("sweep grids must be nonempty".into()));
    }
    let mut base = cfg.clone();
    if base.training.stage_mode == StageMode::Baseline {
        base.training.stage_mode = StageMode::TwoStage;
    }
    for &g in gid_grid {
        for &l in lid_grid {
            let mut c = base.clone();
            c.training.lambda_gid = g;
            c.training.lambda_lid = l;
            c.validate(c.dataset.declared_shape())?;
        }
    }
    let mut rows = Vec::new();
    for &g in gid_grid {
        for &l in lid_grid {
            rows.push(run_cell(&base, &format!("gid{g}_lid{l}"), "sweep", |c| {
                c.training.lambda_gid = g;
                c.training.lambda_lid = l;
            })?);
        }
    }
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut files = vec!["sweep.csv".to_string()];
    write_file(&dir.join("sweep.csv"), cells_csv(&rows, &cfg.evaluation.k))?;
    for &k in &cfg.evaluation.k {
        let mut s = String::from("lambda_gid\\lambda_lid");
        for l in lid_grid {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (i, g) in gid_grid.iter().enumerate() {
            let _ = write!(s, "{g}");
            for j in 0..lid_grid.len() {
                let _ = write!(s, ",{}", rows[i * lid_grid.len() + j].report.knn_accuracy[&k]);
            }
            s.push('\n');
        }
        let name = format!("sweep_grid_k{k}.csv");
        write_file(&dir.join(&name), s)?;
        files.push(name);
    }
    write_manifest(dir, "sweep", cfg, files)?;
    Ok(rows)
}

/// Writes the configured dataset as unsigned-byte IDX image/label pairs
/// (`train_*` and, when a test split exists, `test_*`).
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate(cfg.dataset.declared_shape())?;
    let data = cfg.dataset.load()?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut written = Vec::new();
    for (name, idx) in [("train", &data.train), ("test", &data.test)] {
        if idx.is_empty() {
            continue;
        }
        let (samples, labels) = data.gather(idx);
        let (ip, lp) = (dir.join(format!("{name}_images.idx")), dir.join(format!("{name}_labels.idx")));
        write_idx_u8_images(&ip, &samples)?;
        write_idx_labels(&lp, &labels)?;
        written.extend([ip, lp]);
    }
    let files = written
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    write_manifest(dir, "gen-data", cfg, files)?;
    Ok(written)
}
