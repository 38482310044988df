use serde::{Deserialize, Serialize};

use super::{layer_macs, ConvSpec, FactorizationScheme};
use crate::error::{config, Result};
use crate::nn::{glorot_uniform_init, BatchNorm, Conv2d, Dense, Layer, NamedLayer, Network, Role, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Macro-architecture shared by every point of a sweep.
///
/// Defaults: 3x32x32 input, 3x3/64 stem, stages of 64/128/256 channels with two
/// blocks each and a 2x2 max-pool after every stage, then Dense 512 and
/// Dense 10. Channel doubling happens in the first block of each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacroArchConfig {
    /// `[C, H, W]`
    pub input_shape: [usize; 3],
    pub stem_channels: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    /// Hidden widths followed by the class count.
    pub dense_widths: Vec<usize>,
}

impl Default for MacroArchConfig {
    fn default() -> Self {
        Self {
            input_shape: [3, 32, 32],
            stem_channels: 64,
            stage_widths: vec![64, 128, 256],
            blocks_per_stage: 2,
            dense_widths: vec![512, 10],
        }
    }
}

impl MacroArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_shape.contains(&0) {
            return Err(config("input shape must be positive"));
        }
        let Some(&first) = self.stage_widths.first() else {
            return Err(config("at least one stage is required"));
        };
        if self.stem_channels != first {
            return Err(config(format!(
                "stem channels {} must equal the first stage width {first}",
                self.stem_channels
            )));
        }
        if first == 0 || self.stage_widths.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(config(format!(
                "stage widths {:?} must double from stage to stage",
                self.stage_widths
            )));
        }
        if self.blocks_per_stage == 0 {
            return Err(config("blocks_per_stage must be positive"));
        }
        if self.dense_widths.is_empty() || self.dense_widths.contains(&0) {
            return Err(config("dense widths must be non-empty and positive"));
        }
        let down = 1usize << self.stage_widths.len();
        if self.input_shape[1] < down || self.input_shape[2] < down {
            return Err(config(format!(
                "input {}x{} is too small for {} pooling stages",
                self.input_shape[1],
                self.input_shape[2],
                self.stage_widths.len()
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        *self.dense_widths.last().expect("validated config")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        groups: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    SoftmaxOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub role: Role,
    pub kind: LayerKind,
    /// Per-sample input shape.
    pub input_shape: Vec<usize>,
    /// Per-sample output shape.
    pub output_shape: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conv_spec: Option<ConvSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub scheme: FactorizationScheme,
    pub config: MacroArchConfig,
    pub layers: Vec<LayerDesc>,
}

impl NetworkPlan {
    pub fn conv_specs(&self) -> impl Iterator<Item = (&LayerDesc, &ConvSpec)> {
        self.layers
            .iter()
            .filter_map(|l| l.conv_spec.as_ref().map(|s| (l, s)))
    }
}

struct PlanBuilder {
    layers: Vec<LayerDesc>,
    shape: Vec<usize>,
}

impl PlanBuilder {
    fn push(&mut self, name: String, role: Role, kind: LayerKind) {
        let input_shape = self.shape.clone();
        let (output_shape, conv_spec) = match kind {
            LayerKind::Conv2d {
                c_in,
                c_out,
                kernel,
                groups,
                stride,
                padding,
            } => {
                let (h, w) = (input_shape[1], input_shape[2]);
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                let spec = ConvSpec {
                    kernel,
                    h: oh,
                    w: ow,
                    c_in,
                    c_out,
                    f: groups,
                    stride,
                    has_pointwise_follower: role == Role::GroupConv,
                };
                (vec![c_out, oh, ow], Some(spec))
            }
            LayerKind::MaxPool2d { window, stride } => (
                vec![
                    input_shape[0],
                    (input_shape[1] - window) / stride + 1,
                    (input_shape[2] - window) / stride + 1,
                ],
                None,
            ),
            LayerKind::Dense { fan_out, .. } => (vec![fan_out], None),
            _ => (input_shape.clone(), None),
        };
        self.shape = output_shape.clone();
        self.layers.push(LayerDesc {
            name,
            role,
            kind,
            input_shape,
            output_shape,
            conv_spec,
        });
    }

    fn conv_bn_relu(&mut self, name: &str, role: Role, c_in: usize, c_out: usize, kernel: usize, groups: usize) {
        self.push(
            name.to_string(),
            role,
            LayerKind::Conv2d {
                c_in,
                c_out,
                kernel,
                groups,
                stride: 1,
                padding: kernel / 2,
            },
        );
        self.push(format!("{name}_bn"), Role::Bn, LayerKind::BatchNorm { channels: c_out });
        self.push(format!("{name}_relu"), Role::Relu, LayerKind::Relu);
    }
}

/// Layer-by-layer description of a network; no parameters are allocated.
pub fn build_plan(cfg: &MacroArchConfig, scheme: FactorizationScheme) -> Result<NetworkPlan> {
    cfg.validate()?;
    let base = cfg.stage_widths[0];
    let mut b = PlanBuilder {
        layers: Vec::new(),
        shape: cfg.input_shape.to_vec(),
    };
    b.conv_bn_relu("stem", Role::Stem, cfg.input_shape[0], cfg.stem_channels, 3, 1);

    let mut depth = cfg.stem_channels;
    for (s, &width) in cfg.stage_widths.iter().enumerate() {
        for blk in 0..cfg.blocks_per_stage {
            let prefix = format!("s{s}b{blk}");
            match scheme.rate_for(depth, base)? {
                None => b.conv_bn_relu(&format!("{prefix}_conv"), Role::Conv, depth, width, 3, 1),
                Some(f) => {
                    b.conv_bn_relu(&format!("{prefix}_gconv"), Role::GroupConv, depth, depth, 3, f);
                    b.conv_bn_relu(&format!("{prefix}_pw"), Role::Pointwise, depth, width, 1, 1);
                }
            }
            depth = width;
        }
        b.push(format!("s{s}_pool"), Role::Pool, LayerKind::MaxPool2d { window: 2, stride: 2 });
    }

    let mut fan_in: usize = b.shape.iter().product();
    let last = cfg.dense_widths.len() - 1;
    for (i, &fan_out) in cfg.dense_widths.iter().enumerate() {
        b.push(format!("fc{i}"), Role::Dense, LayerKind::Dense { fan_in, fan_out });
        if i < last {
            b.push(format!("fc{i}_relu"), Role::Relu, LayerKind::Relu);
        }
        fan_in = fan_out;
    }
    b.push("softmax".into(), Role::Output, LayerKind::SoftmaxOutput);

    Ok(NetworkPlan {
        scheme,
        config: cfg.clone(),
        layers: b.layers,
    })
}

/// Allocates a network for `plan`. With an rng, conv and dense weights are
/// Glorot-uniform and biases zero; without one every parameter is zero and
/// batchnorm starts at the identity.
pub fn instantiate<T: Scalar>(plan: &NetworkPlan, mut rng: Option<&mut SeededRng>) -> Result<Network<T>> {
    let mut layers = Vec::with_capacity(plan.layers.len());
    for desc in &plan.layers {
        let layer = match desc.kind {
            LayerKind::Conv2d {
                c_in,
                c_out,
                kernel,
                groups,
                stride,
                padding,
            } => {
                let mut conv = Conv2d::zeros(c_in, c_out, kernel, groups, stride, padding)?;
                if let Some(r) = rng.as_deref_mut() {
                    let kk = kernel * kernel;
                    conv.weight = glorot_uniform_init(kk * c_in / groups, kk * c_out / groups, conv.weight.shape(), r);
                }
                Layer::Conv2d(conv)
            }
            LayerKind::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels)),
            LayerKind::Relu => Layer::Relu,
            LayerKind::MaxPool2d { window, stride } => Layer::MaxPool2d { window, stride },
            LayerKind::Dense { fan_in, fan_out } => {
                let mut dense = Dense::zeros(fan_in, fan_out);
                if let Some(r) = rng.as_deref_mut() {
                    dense.weight = glorot_uniform_init(fan_in, fan_out, &[fan_out, fan_in], r);
                }
                dense.bias = Tensor::zeros(&[fan_out]);
                Layer::Dense(dense)
            }
            LayerKind::SoftmaxOutput => Layer::SoftmaxOutput,
        };
        layers.push(NamedLayer {
            name: desc.name.clone(),
            role: desc.role,
            layer,
        });
    }
    Ok(Network::new(layers))
}

/// Plan plus a freshly initialised network.
pub fn build_network<T: Scalar>(cfg: &MacroArchConfig, scheme: FactorizationScheme, rng: &mut SeededRng) -> Result<(NetworkPlan, Network<T>)> {
    let plan = build_plan(cfg, scheme)?;
    let net = instantiate(&plan, Some(rng))?;
    Ok((plan, net))
}

/// Total MACs of every convolution (stem, group, pointwise); dense layers are
/// excluded.
pub fn network_macs(plan: &NetworkPlan) -> Result<u64> {
    plan.conv_specs().map(|(_, s)| layer_macs(s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;
    use FactorizationScheme::*;

    fn conv_shapes(plan: &NetworkPlan) -> Vec<(usize, usize, usize, usize)> {
        plan.conv_specs().map(|(_, s)| (s.c_in, s.c_out, s.kernel, s.f)).collect()
    }

    #[test]
    fn default_regular_plan_structure() {
        let plan = build_plan(&MacroArchConfig::default(), Regular).unwrap();
        let convs = conv_shapes(&plan);
        assert_eq!(convs.len(), 7);
        assert_eq!(convs[0], (3, 64, 3, 1));
        assert_eq!(convs[3], (64, 128, 3, 1));
        assert_eq!(plan.layers.last().unwrap().kind, LayerKind::SoftmaxOutput);
        let fc0 = plan.layers.iter().find(|l| l.name == "fc0").unwrap();
        assert_eq!(fc0.kind, LayerKind::Dense { fan_in: 256 * 4 * 4, fan_out: 512 });
    }

    #[test]
    fn group_conv_is_followed_by_bn_relu_pointwise() {
        let plan = build_plan(&MacroArchConfig::default(), Uniform(4)).unwrap();
        for (i, l) in plan.layers.iter().enumerate() {
            if l.role == Role::GroupConv {
                let roles: Vec<Role> = plan.layers[i + 1..i + 6].iter().map(|l| l.role).collect();
                assert_eq!(roles, [Role::Bn, Role::Relu, Role::Pointwise, Role::Bn, Role::Relu]);
            }
        }
    }

    #[test]
    fn uniform_one_matches_regular_channel_flow() {
        let cfg = MacroArchConfig::default();
        let reg = build_plan(&cfg, Regular).unwrap();
        let u1 = build_plan(&cfg, Uniform(1)).unwrap();
        let outs = |p: &NetworkPlan| -> Vec<Vec<usize>> {
            p.layers
                .iter()
                .filter(|l| matches!(l.role, Role::Pool | Role::Dense | Role::Output))
                .map(|l| l.output_shape.clone())
                .collect()
        };
        assert_eq!(outs(&reg), outs(&u1));
        assert!(u1.conv_specs().filter(|(l, _)| l.role == Role::GroupConv).all(|(_, s)| s.f == 1));
    }

    #[test]
    fn first_conv_is_never_factorized() {
        for scheme in [Regular, Uniform(16), ReversePyramid(4), DepthwiseSeparable] {
            let plan = build_plan(&MacroArchConfig::default(), scheme).unwrap();
            assert_eq!(plan.conv_specs().next().unwrap().1.f, 1);
        }
    }

    #[test]
    fn incompatible_rate_is_a_config_error() {
        let cfg = MacroArchConfig {
            stem_channels: 16,
            stage_widths: vec![16, 32],
            ..Default::default()
        };
        assert!(matches!(build_plan(&cfg, Uniform(32)), Err(crate::Error::Config(_))));
        assert!(matches!(build_plan(&cfg, ReversePyramid(32)), Err(crate::Error::Config(_))));
        let bad = MacroArchConfig {
            stage_widths: vec![64, 96],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn network_matches_plan_and_initialisation_is_seeded() {
        let cfg = MacroArchConfig {
            input_shape: [3, 8, 8],
            stem_channels: 4,
            stage_widths: vec![4, 8],
            blocks_per_stage: 1,
            dense_widths: vec![6, 2],
        };
        let (plan, a) = build_network::<f32>(&cfg, Uniform(2), &mut seeded_rng(1)).unwrap();
        let (_, b) = build_network::<f32>(&cfg, Uniform(2), &mut seeded_rng(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers.len(), plan.layers.len());
        let x = Tensor::<f32>::zeros(&[2, 3, 8, 8]);
        a.forward_visit(&x, |i, out| {
            assert_eq!(&out.shape()[1..], plan.layers[i].output_shape.as_slice());
            Ok(())
        })
        .unwrap();
    }
}
