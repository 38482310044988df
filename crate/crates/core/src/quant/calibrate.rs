//! Calibration of activation ranges and the per-layer quantization record.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::fold::fold_conv_bn;
use super::range::{percentile_range_in_place, range_minmax, ClipPercentiles, ValueRange};
use crate::error::{config, invalid, Result};
use crate::nn::{BatchNorm, Conv2d, Dense, Layer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Conv,
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub enum UnitOp<'a, T> {
    Conv(&'a Conv2d<T>),
    Dense(&'a Dense<T>),
}

/// A weight layer together with the batchnorm and ReLU that directly follow
/// it. The unit's activation site is the output of its last layer.
#[derive(Debug, Clone, Copy)]
pub struct QuantUnit<'a, T> {
    pub name: &'a str,
    pub op: UnitOp<'a, T>,
    pub bn: Option<&'a BatchNorm<T>>,
    pub relu: bool,
    /// Index of the first layer of the unit.
    pub start: usize,
    /// Index of the layer whose output is the activation site.
    pub site: usize,
}

impl<'a, T: Scalar> QuantUnit<'a, T> {
    pub fn kind(&self) -> UnitKind {
        match self.op {
            UnitOp::Conv(_) => UnitKind::Conv,
            UnitOp::Dense(_) => UnitKind::Dense,
        }
    }

    pub fn weight(&self) -> &'a Tensor<T> {
        match self.op {
            UnitOp::Conv(c) => &c.weight,
            UnitOp::Dense(d) => &d.weight,
        }
    }

    /// Weight and bias with the batchnorm folded in, if there is one.
    pub fn folded(&self) -> Result<(Tensor<T>, Tensor<T>)> {
        match (self.op, self.bn) {
            (UnitOp::Conv(c), Some(bn)) => {
                let f = fold_conv_bn(c, bn)?;
                Ok((f.weight, f.bias))
            }
            (UnitOp::Conv(c), None) => Ok((c.weight.clone(), c.bias.clone())),
            (UnitOp::Dense(d), Some(bn)) => super::fold::fold_batchnorm(
                &d.weight,
                &d.bias,
                &bn.gamma,
                &bn.beta,
                &bn.running_mean,
                &bn.running_var,
                bn.epsilon,
            ),
            (UnitOp::Dense(d), None) => Ok((d.weight.clone(), d.bias.clone())),
        }
    }
}

/// Groups the layers of `net` into quantization units in order.
pub fn quant_units<T: Scalar>(net: &Network<T>) -> Vec<QuantUnit<'_, T>> {
    let layers = &net.layers;
    let mut units = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        let op = match &layers[i].layer {
            Layer::Conv2d(c) => UnitOp::Conv(c),
            Layer::Dense(d) => UnitOp::Dense(d),
            _ => {
                i += 1;
                continue;
            }
        };
        let start = i;
        let mut site = i;
        let bn = match layers.get(site + 1).map(|l| &l.layer) {
            Some(Layer::BatchNorm(b)) => {
                site += 1;
                Some(b)
            }
            _ => None,
        };
        let relu = matches!(layers.get(site + 1).map(|l| &l.layer), Some(Layer::Relu));
        if relu {
            site += 1;
        }
        units.push(QuantUnit {
            name: &layers[start].name,
            op,
            bn,
            relu,
            start,
            site,
        });
        i = site + 1;
    }
    units
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub kind: UnitKind,
    /// Min/max of the raw weights.
    pub weight: ValueRange,
    /// Min/max of the weights after batchnorm folding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_fold: Option<ValueRange>,
    /// Clipped range of the unit's output activation.
    pub activation: ValueRange,
}

impl LayerCalibration {
    /// Range used to encode the unit's weights.
    pub fn encode_weight_range(&self) -> ValueRange {
        self.bn_fold.unwrap_or(self.weight)
    }
}

/// Everything needed to simulate quantized inference, keyed by unit name in
/// network order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub clip: ClipPercentiles,
    pub samples: usize,
    /// Min/max of the calibration inputs.
    pub input: ValueRange,
    pub layers: IndexMap<String, LayerCalibration>,
}

impl CalibrationRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Result<&LayerCalibration> {
        self.layers
            .get(name)
            .ok_or_else(|| config(format!("calibration record has no entry for layer `{name}`")))
    }
}

/// Runs the whole calibration set through `net` in inference mode and records
/// weight ranges (min/max) and activation ranges (percentile clipped, pooled
/// over every value of the site).
pub fn calibrate<T: Scalar>(net: &Network<T>, inputs: &Tensor<T>, clip: ClipPercentiles) -> Result<CalibrationRecord> {
    let clip = ClipPercentiles::new(clip.lo, clip.hi)?;
    if inputs.is_empty() || inputs.rank() < 2 {
        return Err(invalid("calibration needs a non-empty batch of inputs"));
    }
    let units = quant_units(net);
    let mut weights = HashMap::new();
    for u in &units {
        let weight = range_minmax(u.weight())?;
        let bn_fold = match u.bn {
            Some(bn) => {
                bn.validate()?;
                Some(range_minmax(&u.folded()?.0)?)
            }
            None => None,
        };
        weights.insert(u.site, (u.name, u.kind(), weight, bn_fold));
    }
    let mut layers = IndexMap::new();
    net.forward_visit(inputs, |idx, out| {
        if let Some(&(name, kind, weight, bn_fold)) = weights.get(&idx) {
            let mut values = out.data().to_vec();
            let activation = percentile_range_in_place(&mut values, clip)?;
            layers.insert(
                name.to_string(),
                LayerCalibration {
                    kind,
                    weight,
                    bn_fold,
                    activation,
                },
            );
        }
        Ok(())
    })?;
    Ok(CalibrationRecord {
        clip,
        samples: inputs.batch(),
        input: range_minmax(inputs)?,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_network, FactorizationScheme, MacroArchConfig};
    use crate::nn::seeded_rng;

    fn tiny() -> MacroArchConfig {
        MacroArchConfig {
            input_shape: [3, 8, 8],
            stem_channels: 4,
            stage_widths: vec![4, 8],
            blocks_per_stage: 1,
            dense_widths: vec![6, 3],
        }
    }

    #[test]
    fn units_cover_every_weight_layer() {
        let (_, net) = build_network::<f32>(&tiny(), FactorizationScheme::Uniform(2), &mut seeded_rng(1)).unwrap();
        let units = quant_units(&net);
        let names: Vec<&str> = units.iter().map(|u| u.name).collect();
        assert_eq!(names, ["stem", "s0b0_gconv", "s0b0_pw", "s1b0_gconv", "s1b0_pw", "fc0", "fc1"]);
        assert!(units[..5].iter().all(|u| u.bn.is_some() && u.relu));
        assert!(units[5].relu && units[5].bn.is_none());
        assert!(!units[6].relu);
    }

    #[test]
    fn record_round_trips_through_json_in_order() {
        let (_, net) = build_network::<f32>(&tiny(), FactorizationScheme::Regular, &mut seeded_rng(2)).unwrap();
        let x = Tensor::from_fn(&[4, 3, 8, 8], |i| ((i * 37) % 101) as f32 / 101.0);
        let rec = calibrate(&net, &x, ClipPercentiles::default()).unwrap();
        let back = CalibrationRecord::from_json(&rec.to_json().unwrap()).unwrap();
        assert_eq!(back, rec);
        let order: Vec<&String> = back.layers.keys().collect();
        assert_eq!(order, ["stem", "s0b0_conv", "s1b0_conv", "fc0", "fc1"]);
        for l in back.layers.values() {
            assert!(l.activation.min <= l.activation.max);
        }
        assert!(rec.get("nope").is_err());
    }

    #[test]
    fn empty_calibration_set_is_rejected() {
        let (_, net) = build_network::<f32>(&tiny(), FactorizationScheme::Regular, &mut seeded_rng(2)).unwrap();
        assert!(calibrate(&net, &Tensor::<f32>::zeros(&[1]), ClipPercentiles::default()).is_err());
    }
}
