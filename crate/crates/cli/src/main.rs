//! `factorizenet`: build, train, quantize and analyse factorized networks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 a sweep that
//! finished with failed configurations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use factorizenet::arch::{build_plan, layer_macs, network_macs, progression, FactorizationScheme, NetworkPlan, ProgressionKind};
use factorizenet::introspect::{collect_layer_report, save_report, LayerStats};
use factorizenet::quant::{accuracy, calibrate, qce, qmse, relative_degradation, ClipPercentiles, QuantizedModel};
use factorizenet::sweep::{calibration_inputs, emit_report, quantized_predictions, run_sweep, ExperimentConfig, ReportFormat, SweepReport};
use factorizenet::train::{load_checkpoint, predict_dataset, EVAL_BATCH};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "factorizenet", version, about = "Progressive depth factorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-layer MAC table of a configuration.
    Macs {
        #[command(flatten)]
        common: Common,
        /// regular, uniform:F, revpyr:F or dws.
        #[arg(long, default_value = "regular", value_parser = parse_scheme)]
        scheme: FactorizationScheme,
    },
    /// Train, quantize and analyse one configuration.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "regular", value_parser = parse_scheme)]
        scheme: FactorizationScheme,
    },
    /// Run a factorization progression end to end.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated schemes; overrides --progression.
        #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
        scheme: Vec<FactorizationScheme>,
        #[arg(long, value_enum, default_value_t = Progression::Uniform)]
        progression: Progression,
        /// Add the Regular_Conv and DWS_Conv endpoints to the progression.
        #[arg(long)]
        endpoints: bool,
    },
    /// Layerwise range and precision report for a checkpoint.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Calibrate a checkpoint and compare fp32 with simulated 8-bit inference.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config, JSON or `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the CIFAR-10 binary batches.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    calib_samples: usize,
    /// Activation clipping percentiles.
    #[arg(long, default_value = "1,99", value_parser = parse_clip)]
    clip_pct: ClipPercentiles,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Progression {
    /// f = 2, 4, 8, 16.
    Uniform,
    /// Reverse pyramid with initial rates 2 and 4.
    Revpyr,
}

fn parse_scheme(s: &str) -> Result<FactorizationScheme, String> {
    s.parse().map_err(|e: factorizenet::Error| e.to_string())
}

fn parse_clip(s: &str) -> Result<ClipPercentiles, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    ClipPercentiles::new(lo, hi).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: factorizenet::Error| e.to_string())
}

impl Common {
    /// The config file (or defaults) with command-line overrides applied.
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.dir = Some(d.clone());
        }
        if let Some(n) = self.epochs {
            cfg.train = cfg.train.with_epochs(n);
        }
        cfg.quant.calib_samples = self.calib_samples;
        cfg.quant.clip = self.clip_pct;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct MacRow {
    layer: String,
    kernel: usize,
    out_h: usize,
    out_w: usize,
    c_in: usize,
    c_out: usize,
    f: usize,
    macs: u64,
}

fn mac_rows(plan: &NetworkPlan) -> Result<Vec<MacRow>> {
    plan.conv_specs()
        .map(|(l, s)| {
            Ok(MacRow {
                layer: l.name.clone(),
                kernel: s.kernel,
                out_h: s.h,
                out_w: s.w,
                c_in: s.c_in,
                c_out: s.c_out,
                f: s.f,
                macs: layer_macs(s)?,
            })
        })
        .collect()
}

fn cmd_macs(common: &Common, scheme: FactorizationScheme) -> Result<()> {
    let cfg = common.experiment()?;
    let plan = build_plan(&cfg.arch, scheme)?;
    let rows = mac_rows(&plan)?;
    let total = network_macs(&plan)?;
    match common.format {
        ReportFormat::Json => {
            let out = serde_json::json!({ "scheme": scheme.label(), "layers": rows, "total": total });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        ReportFormat::Csv => {
            println!("# {}", scheme.label());
            println!("{:<14} {:>6} {:>7} {:>6} {:>6} {:>4} {:>14}", "layer", "kernel", "out_hw", "c_in", "c_out", "f", "macs");
            for r in &rows {
                let hw = format!("{}x{}", r.out_h, r.out_w);
                println!("{:<14} {:>6} {:>7} {:>6} {:>6} {:>4} {:>14}", r.layer, r.kernel, hw, r.c_in, r.c_out, r.f, r.macs);
            }
            println!("{:<14} {:>6} {:>7} {:>6} {:>6} {:>4} {:>14}", "total", "", "", "", "", "", total);
        }
    }
    Ok(())
}

fn print_summary(report: &SweepReport, path: &Path) {
    for r in &report.rows {
        match &r.error {
            None => println!(
                "{:<22} macs {:>12}  fp32 {:.4}  q {:.4}  qmse {:.3e}  qce {:.4}",
                r.label,
                r.macs,
                r.acc_fp32.unwrap_or(f64::NAN),
                r.acc_q.unwrap_or(f64::NAN),
                r.qmse.unwrap_or(f64::NAN),
                r.qce.unwrap_or(f64::NAN),
            ),
            Some(e) => println!("{:<22} FAILED: {e}", r.label),
        }
    }
    println!("report: {}", path.display());
}

/// Runs `schemes` and writes the summary; `Ok(false)` when any configuration failed.
fn cmd_sweep(common: &Common, schemes: &[FactorizationScheme]) -> Result<bool> {
    let cfg = common.experiment()?;
    let report = run_sweep(&cfg, schemes, &common.out, common.seed)?;
    let path = emit_report(&report, &common.out, common.format)?;
    print_summary(&report, &path);
    Ok(report.failures() == 0)
}

/// Loads a checkpoint and the configured data, then calibrates on training images.
fn calibrated(common: &Common, checkpoint: &Path) -> Result<Checkpointed> {
    let cfg = common.experiment()?;
    let (plan, net) = load_checkpoint::<f32>(checkpoint)?;
    let (train, test, _) = cfg.data.load()?;
    if train.image_shape() != plan.config.input_shape {
        bail!(
            "checkpoint expects {:?} inputs, data has {:?}",
            plan.config.input_shape,
            train.image_shape()
        );
    }
    let calib = calibration_inputs(&train, cfg.quant.calib_samples, common.seed)?;
    let record = calibrate(&net, &calib, cfg.quant.clip)?;
    Ok(Checkpointed {
        cfg,
        net,
        test,
        calib,
        record,
    })
}

struct Checkpointed {
    cfg: ExperimentConfig,
    net: factorizenet::nn::Network<f32>,
    test: factorizenet::data::Dataset,
    calib: factorizenet::Tensor<f32>,
    record: factorizenet::quant::CalibrationRecord,
}

fn cmd_analyze(common: &Common, checkpoint: &Path) -> Result<()> {
    let c = calibrated(common, checkpoint)?;
    let stats = collect_layer_report(&c.net, &c.record, &c.calib)?;
    std::fs::create_dir_all(&common.out)?;
    save_report(&stats, &common.out.join("layers.csv"), &common.out.join("layers.json"))?;
    c.record.save(&common.out.join("calibration.json"))?;
    match common.format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&stats)?),
        ReportFormat::Csv => print_stats(&stats),
    }
    Ok(())
}

fn print_stats(stats: &[LayerStats]) {
    println!("{:<14} {:<16} {:>12} {:>12} {:>9}", "layer", "series", "min", "max", "avg_prec");
    for s in stats {
        println!(
            "{:<14} {:<16} {:>12.5} {:>12.5} {:>9.4}{}",
            s.layer_name,
            s.kind.as_str(),
            s.tensor_range.min,
            s.tensor_range.max,
            s.avg_precision,
            if s.no_bn { "  (no bn)" } else { "" }
        );
    }
}

#[derive(Serialize)]
struct QuantizeSummary {
    acc_fp32: f64,
    acc_q: f64,
    qmse: f64,
    qce: f64,
    rel_drop: Option<f64>,
}

fn cmd_quantize(common: &Common, checkpoint: &Path) -> Result<()> {
    let c = calibrated(common, checkpoint)?;
    let model = QuantizedModel::build(&c.net, &c.record, c.cfg.quant.sim)?;
    let labels = c.test.labels_usize();
    let p_fp = predict_dataset(&c.net, &c.test, EVAL_BATCH)?;
    let p_q = quantized_predictions(&model, &c.test)?;
    let acc_fp32 = accuracy(&p_fp, &labels)?;
    let acc_q = accuracy(&p_q, &labels)?;
    let summary = QuantizeSummary {
        acc_fp32,
        acc_q,
        qmse: qmse(&p_fp, &p_q)?,
        qce: qce(&p_fp, &p_q)?,
        rel_drop: relative_degradation(acc_fp32, acc_q).ok(),
    };
    std::fs::create_dir_all(&common.out)?;
    c.record.save(&common.out.join("calibration.json"))?;
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(common.out.join("quantize.json"), &json)?;
    match common.format {
        ReportFormat::Json => println!("{json}"),
        ReportFormat::Csv => {
            println!("acc_fp32,acc_q,qmse,qce,rel_drop");
            let drop = summary.rel_drop.map(|d| d.to_string()).unwrap_or_default();
            println!("{},{},{},{},{drop}", summary.acc_fp32, summary.acc_q, summary.qmse, summary.qce);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ok = match &cli.command {
        Command::Macs { common, scheme } => cmd_macs(common, *scheme).map(|_| true)?,
        Command::Train { common, scheme } => cmd_sweep(common, &[*scheme])?,
        Command::Sweep {
            common,
            scheme,
            progression: p,
            endpoints,
        } => {
            let schemes = if scheme.is_empty() {
                let kind = match p {
                    Progression::Uniform => ProgressionKind::UniformDoubling,
                    Progression::Revpyr => ProgressionKind::ReversePyramidDoubling,
                };
                progression(kind, *endpoints)
            } else {
                scheme.clone()
            };
            if !cmd_sweep(common, &schemes)? {
                return Ok(ExitCode::from(3));
            }
            true
        }
        Command::Analyze { common, checkpoint } => cmd_analyze(common, checkpoint).map(|_| true)?,
        Command::Quantize { common, checkpoint } => cmd_quantize(common, checkpoint).map(|_| true)?,
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
