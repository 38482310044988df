//! Layerwise dynamic ranges and average channel precision.
//!
//! Average channel precision of a tensor with `K` channels is
//! `(1/K) * sum_i width(channel_i) / width(tensor)`, where width is `max - min`.
//! It is 1.0 when every channel spans the whole tensor range and falls towards
//! 0 when a few channels dominate the range that a per-tensor encoding must cover.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Error, Result};
use crate::nn::Network;
use crate::quant::{percentile_range_in_place, quant_units, slice_minmax, CalibrationRecord, ClipPercentiles, ValueRange};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsKind {
    Weights,
    BnFoldWeights,
    Activations,
}

impl StatsKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Weights => "weights",
            Self::BnFoldWeights => "bn_fold_weights",
            Self::Activations => "activations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer_name: String,
    pub kind: StatsKind,
    pub tensor_range: ValueRange,
    pub channel_ranges: Vec<ValueRange>,
    pub avg_precision: f64,
    pub channel_axis: usize,
    /// The tensor range has zero width; precision is reported as 1.0.
    pub degenerate: bool,
    /// No batchnorm follows the layer, so the folded series repeats the raw weights.
    pub no_bn: bool,
}

/// Splits `shape` around `axis` into `(outer, channels, inner)`.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(invalid(format!("channel axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    if outer == 0 || inner == 0 || shape[axis] == 0 {
        return Err(invalid(format!("empty channel slice in shape {shape:?}")));
    }
    Ok((outer, shape[axis], inner))
}

/// Gathers the values of channel `ch` into `buf`.
fn channel_values<T: Scalar>(t: &Tensor<T>, split: (usize, usize, usize), ch: usize, buf: &mut Vec<T>) {
    let (outer, c, inner) = split;
    buf.clear();
    for o in 0..outer {
        let start = (o * c + ch) * inner;
        buf.extend_from_slice(&t.data()[start..start + inner]);
    }
}

/// Exact per-channel min/max over every other axis.
pub fn channel_ranges<T: Scalar>(t: &Tensor<T>, channel_axis: usize) -> Result<Vec<ValueRange>> {
    let split = axis_split(t.shape(), channel_axis)?;
    let mut buf = Vec::new();
    (0..split.1)
        .map(|ch| {
            channel_values(t, split, ch, &mut buf);
            slice_minmax(&buf)
        })
        .collect()
}

/// Per-channel percentile ranges.
pub fn channel_percentile_ranges<T: Scalar>(t: &Tensor<T>, channel_axis: usize, clip: ClipPercentiles) -> Result<Vec<ValueRange>> {
    let split = axis_split(t.shape(), channel_axis)?;
    let mut buf = Vec::new();
    (0..split.1)
        .map(|ch| {
            channel_values(t, split, ch, &mut buf);
            percentile_range_in_place(&mut buf, clip)
        })
        .collect()
}

/// Average channel precision from precomputed ranges, with the degenerate
/// flag set when the tensor range has zero width.
pub fn precision_from_ranges(tensor: ValueRange, channels: &[ValueRange]) -> (f64, bool) {
    let width = tensor.width();
    if !(width > 0.0) || channels.is_empty() {
        return (1.0, true);
    }
    let sum: f64 = channels.iter().map(|c| (c.width() / width).clamp(0.0, 1.0)).sum();
    (sum / channels.len() as f64, false)
}

pub fn average_precision<T: Scalar>(t: &Tensor<T>, channel_axis: usize) -> Result<f64> {
    let channels = channel_ranges(t, channel_axis)?;
    Ok(precision_from_ranges(envelope(&channels), &channels).0)
}

fn envelope(channels: &[ValueRange]) -> ValueRange {
    channels.iter().fold(
        ValueRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        },
        |a, c| ValueRange {
            min: a.min.min(c.min),
            max: a.max.max(c.max),
        },
    )
}

fn weight_stats<T: Scalar>(name: &str, kind: StatsKind, w: &Tensor<T>, no_bn: bool) -> Result<LayerStats> {
    let channel_ranges = channel_ranges(w, 0)?;
    let tensor_range = envelope(&channel_ranges);
    let (avg_precision, degenerate) = precision_from_ranges(tensor_range, &channel_ranges);
    Ok(LayerStats {
        layer_name: name.to_string(),
        kind,
        tensor_range,
        channel_ranges,
        avg_precision,
        channel_axis: 0,
        degenerate,
        no_bn,
    })
}

/// Three series per conv/dense layer in network order: raw weights,
/// batchnorm-folded weights, and clipped activations at the unit output.
///
/// Activation tensor ranges are the pooled percentile ranges of the record;
/// channel ranges use the same percentiles per channel over `calib_inputs`
/// and are then clamped into the tensor range.
pub fn collect_layer_report<T: Scalar>(net: &Network<T>, record: &CalibrationRecord, calib_inputs: &Tensor<T>) -> Result<Vec<LayerStats>> {
    let units = quant_units(net);
    let mut report = Vec::with_capacity(units.len() * 3);
    let mut sites = HashMap::new();
    for u in &units {
        if let Some(bn) = u.bn {
            bn.validate()
                .map_err(|e| config(format!("batchnorm after `{}` has unusable running statistics: {e}", u.name)))?;
        }
        let tensor_range = record.get(u.name)?.activation;
        report.push(Some(weight_stats(u.name, StatsKind::Weights, u.weight(), false)?));
        let folded = u.folded()?.0;
        report.push(Some(weight_stats(u.name, StatsKind::BnFoldWeights, &folded, u.bn.is_none())?));
        sites.insert(u.site, (report.len(), u.name, tensor_range));
        report.push(None);
    }
    net.forward_visit(calib_inputs, |idx, out| {
        if let Some(&(slot, name, tensor_range)) = sites.get(&idx) {
            let channel_ranges: Vec<ValueRange> = channel_percentile_ranges(out, 1, record.clip)?
                .iter()
                .map(|c| c.clamp_to(&tensor_range))
                .collect();
            let (avg_precision, degenerate) = precision_from_ranges(tensor_range, &channel_ranges);
            report[slot] = Some(LayerStats {
                layer_name: name.to_string(),
                kind: StatsKind::Activations,
                tensor_range,
                channel_ranges,
                avg_precision,
                channel_axis: 1,
                degenerate,
                no_bn: false,
            });
        }
        Ok(())
    })?;
    report
        .into_iter()
        .map(|s| s.ok_or_else(|| invalid("activation site was never reached")))
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    kind: &'a str,
    min: f64,
    max: f64,
    avg_precision: f64,
    degenerate: bool,
    no_bn: bool,
}

/// One row per layer and series: name, kind, min, max, avg_precision, and the flags.
pub fn write_report_csv<W: Write>(stats: &[LayerStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if stats.is_empty() {
        w.write_record(["name", "kind", "min", "max", "avg_precision", "degenerate", "no_bn"])?;
    }
    for s in stats {
        w.serialize(CsvRow {
            name: &s.layer_name,
            kind: s.kind.as_str(),
            min: s.tensor_range.min,
            max: s.tensor_range.max,
            avg_precision: s.avg_precision,
            degenerate: s.degenerate,
            no_bn: s.no_bn,
        })?;
    }
    w.flush().map_err(Error::from)
}

pub fn save_report(stats: &[LayerStats], csv_path: &Path, json_path: &Path) -> Result<()> {
    write_report_csv(stats, std::fs::File::create(csv_path)?)?;
    std::fs::write(json_path, serde_json::to_string_pretty(stats)?)?;
    Ok(())
}
