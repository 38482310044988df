//! FactorizeNet construction and MAC accounting.
//!
//! A network is described by a [`MacroArchConfig`] (widths, depths, classifier)
//! and a [`FactorizationScheme`] choosing where each groupwise separable block
//! sits between regular (`f = 1`) and depthwise (`f = C_in`) convolution.

mod plan;
mod scheme;

pub use plan::{build_network, build_plan, instantiate, network_macs, LayerDesc, LayerKind, MacroArchConfig, NetworkPlan};
pub use scheme::{progression, FactorizationScheme, ProgressionKind};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Shape of one convolution for MAC accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    /// Output height.
    pub h: usize,
    /// Output width.
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Factorization rate, i.e. the number of channel groups.
    pub f: usize,
    pub stride: usize,
    pub has_pointwise_follower: bool,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.f > self.c_in || self.c_in % self.f != 0 || self.c_out % self.f != 0 {
            return Err(config(format!(
                "factorization rate {} must divide c_in {} and c_out {}",
                self.f, self.c_in, self.c_out
            )));
        }
        Ok(())
    }
}

/// `K * K * H * W * (C_in / f) * (C_out / f) * f`; with `f = 1` this is the
/// regular convolution count. Pointwise followers are separate specs.
pub fn layer_macs(spec: &ConvSpec) -> Result<u64> {
    spec.validate()?;
    let per_group = (spec.c_in / spec.f) as u64 * (spec.c_out / spec.f) as u64;
    Ok((spec.kernel * spec.kernel * spec.h * spec.w) as u64 * per_group * spec.f as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kernel: usize, hw: usize, c_in: usize, c_out: usize, f: usize) -> ConvSpec {
        ConvSpec {
            kernel,
            h: hw,
            w: hw,
            c_in,
            c_out,
            f,
            stride: 1,
            has_pointwise_follower: false,
        }
    }

    #[test]
    fn regular_three_by_three_count() {
        assert_eq!(layer_macs(&spec(3, 32, 64, 64, 1)).unwrap(), 37_748_736);
    }

    #[test]
    fn factor_two_halves_the_count() {
        assert_eq!(layer_macs(&spec(3, 32, 64, 64, 2)).unwrap(), 18_874_368);
    }

    #[test]
    fn pointwise_count() {
        let s = ConvSpec {
            h: 4,
            w: 4,
            ..spec(1, 4, 2, 3, 1)
        };
        assert_eq!(layer_macs(&s).unwrap(), 96);
    }

    #[test]
    fn rejects_non_dividing_rate() {
        assert!(layer_macs(&spec(3, 8, 6, 6, 4)).is_err());
        assert!(layer_macs(&spec(3, 8, 4, 4, 8)).is_err());
    }
}
