use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use crate::arch::{build_network, network_macs, FactorizationScheme, MacroArchConfig};
use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::introspect::{collect_layer_report, save_report, LayerStats};
use crate::nn::{seeded_rng, Network};
use crate::quant::{accuracy, calibrate, qce, qmse, relative_degradation, QuantizedModel};
use crate::tensor::Tensor;
use crate::train::{predict_dataset, save_checkpoint, train, TrainConfig, EVAL_BATCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub scheme: FactorizationScheme,
    pub macs: u64,
    pub acc_fp32: Option<f64>,
    pub acc_q: Option<f64>,
    pub qmse: Option<f64>,
    pub qce: Option<f64>,
    pub rel_drop: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    /// Output directory of the configuration, relative to the sweep directory.
    pub dir: String,
    /// Failure message when the configuration did not complete.
    pub error: Option<String>,
    #[serde(default)]
    pub layers: Vec<LayerStats>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub master_seed: u64,
    pub data_source: Option<DataSource>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    arch: &'a MacroArchConfig,
    scheme: FactorizationScheme,
    train: &'a TrainConfig,
}

/// First 16 hex digits of the SHA-256 of the configuration's JSON form.
pub fn config_hash(arch: &MacroArchConfig, scheme: FactorizationScheme, train: &TrainConfig) -> String {
    let json = serde_json::to_vec(&HashInput { arch, scheme, train }).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// Seed of one configuration: depends on the master seed and the
/// configuration hash only, so adding configurations never changes others.
pub fn derive_seed(master: u64, config_hash: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(config_hash.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Everything produced by one configuration beyond its summary row.
pub struct ConfigOutcome {
    pub row: SweepRow,
    pub network: Network<f32>,
}

fn dir_name(scheme: FactorizationScheme) -> String {
    scheme.label().replace(['/', ' '], "_")
}

/// Builds, trains, checkpoints, calibrates, quantizes and analyses a single
/// configuration, writing its artifacts under `dir`.
pub fn run_config(
    cfg: &ExperimentConfig,
    scheme: FactorizationScheme,
    seed: u64,
    train_set: &Dataset,
    test_set: &Dataset,
    dir: &Path,
) -> Result<ConfigOutcome> {
    std::fs::create_dir_all(dir)?;
    let hash = config_hash(&cfg.arch, scheme, &cfg.train);
    let (plan, mut net) = build_network::<f32>(&cfg.arch, scheme, &mut seeded_rng(seed))?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let history = train(&mut net, train_set, Some(test_set), &train_cfg)?;
    save_checkpoint(&dir.join("checkpoint"), &plan, &net)?;
    history.write_csv(std::fs::File::create(dir.join("history.csv"))?)?;

    let calib = calibration_inputs(train_set, cfg.quant.calib_samples, seed)?;
    let record = calibrate(&net, &calib, cfg.quant.clip)?;
    record.save(&dir.join("calibration.json"))?;
    let model = QuantizedModel::build(&net, &record, cfg.quant.sim)?;

    let labels = test_set.labels_usize();
    let p_fp = predict_dataset(&net, test_set, EVAL_BATCH)?;
    let p_q = quantized_predictions(&model, test_set)?;
    let acc_fp32 = accuracy(&p_fp, &labels)?;
    let acc_q = accuracy(&p_q, &labels)?;
    let layers = collect_layer_report(&net, &record, &calib)?;
    save_report(&layers, &dir.join("layers.csv"), &dir.join("layers.json"))?;

    let row = SweepRow {
        label: scheme.label(),
        scheme,
        macs: network_macs(&plan)?,
        acc_fp32: Some(acc_fp32),
        acc_q: Some(acc_q),
        qmse: Some(qmse(&p_fp, &p_q)?),
        qce: Some(qce(&p_fp, &p_q)?),
        rel_drop: relative_degradation(acc_fp32, acc_q).ok(),
        seed,
        config_hash: hash,
        dir: String::new(),
        error: None,
        layers,
    };
    Ok(ConfigOutcome { row, network: net })
}

/// `n` distinct training images chosen with a generator seeded by `seed`,
/// in ascending index order.
pub fn calibration_inputs(train_set: &Dataset, n: usize, seed: u64) -> Result<Tensor<f32>> {
    let n = n.min(train_set.len());
    let mut rng = seeded_rng(seed ^ 0xca1b);
    let mut idx = sample(&mut rng, train_set.len(), n).into_vec();
    idx.sort_unstable();
    Ok(train_set.batch::<f32>(&idx)?.0)
}

pub fn quantized_predictions(model: &QuantizedModel<f32>, data: &Dataset) -> Result<Tensor<f32>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut parts = Vec::new();
    for chunk in idx.chunks(EVAL_BATCH) {
        parts.push(model.predict(&data.batch::<f32>(chunk)?.0)?);
    }
    Tensor::concat(&parts)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every scheme in order. A failing configuration is recorded with its
/// error and the sweep moves on.
pub fn run_sweep(cfg: &ExperimentConfig, schemes: &[FactorizationScheme], out_dir: &Path, master_seed: u64) -> Result<SweepReport> {
    cfg.validate()?;
    if schemes.is_empty() {
        return Err(config("no schemes to sweep"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", out_dir.display())))
    })?;
    let (train_set, test_set, source) = cfg.data.load()?;
    let mut rows = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let hash = config_hash(&cfg.arch, scheme, &cfg.train);
        let seed = derive_seed(master_seed, &hash);
        let name = dir_name(scheme);
        let dir: PathBuf = out_dir.join(&name);
        let result = catch_unwind(AssertUnwindSafe(|| run_config(cfg, scheme, seed, &train_set, &test_set, &dir)));
        let row = match result {
            Ok(Ok(outcome)) => SweepRow { dir: name, ..outcome.row },
            Ok(Err(e)) => failed_row(cfg, scheme, seed, hash, name, e.to_string()),
            Err(p) => failed_row(cfg, scheme, seed, hash, name, format!("panicked: {}", panic_message(p))),
        };
        rows.push(row);
    }
    Ok(SweepReport {
        master_seed,
        data_source: Some(source),
        rows,
    })
}

fn failed_row(cfg: &ExperimentConfig, scheme: FactorizationScheme, seed: u64, hash: String, dir: String, error: String) -> SweepRow {
    let macs = crate::arch::build_plan(&cfg.arch, scheme)
        .and_then(|p| network_macs(&p))
        .unwrap_or(0);
    SweepRow {
        label: scheme.label(),
        scheme,
        macs,
        acc_fp32: None,
        acc_q: None,
        qmse: None,
        qce: None,
        rel_drop: None,
        seed,
        config_hash: hash,
        dir,
        error: Some(error),
        layers: Vec::new(),
    }
}
