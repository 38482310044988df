use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Error, Result};

/// Position of a network on the factorization spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", content = "f", rename_all = "snake_case")]
pub enum FactorizationScheme {
    /// Plain Conv-BN-ReLU blocks, no pointwise convolutions.
    Regular,
    /// Every groupwise separable block uses the same rate.
    Uniform(usize),
    /// Rate starts at `f_init` and doubles whenever the input depth doubles,
    /// keeping the channels per group constant.
    ReversePyramid(usize),
    /// Rate equals the input depth of every block.
    DepthwiseSeparable,
}

impl FactorizationScheme {
    /// Report label, e.g. `FactorizeNet-f4`.
    pub fn label(&self) -> String {
        match self {
            Self::Regular => "Regular_Conv".into(),
            Self::Uniform(f) => format!("FactorizeNet-f{f}"),
            Self::ReversePyramid(f) => format!("FactorizeNet-finit{f}"),
            Self::DepthwiseSeparable => "DWS_Conv".into(),
        }
    }

    /// Rate for a group convolution with `c_in` input channels, given the
    /// first stage width. `None` for [`FactorizationScheme::Regular`].
    pub fn rate_for(&self, c_in: usize, base_width: usize) -> Result<Option<usize>> {
        let f = match *self {
            Self::Regular => return Ok(None),
            Self::Uniform(f) => f,
            Self::ReversePyramid(f_init) => {
                if f_init == 0 || base_width % f_init != 0 {
                    return Err(config(format!(
                        "reverse-pyramid f_init {f_init} must divide the base width {base_width}"
                    )));
                }
                let per_group = base_width / f_init;
                if c_in % per_group != 0 {
                    return Err(config(format!(
                        "input depth {c_in} is not a multiple of {per_group} channels per group"
                    )));
                }
                c_in / per_group
            }
            Self::DepthwiseSeparable => c_in,
        };
        if f == 0 || c_in % f != 0 {
            return Err(config(format!(
                "factorization rate {f} does not divide input depth {c_in}"
            )));
        }
        Ok(Some(f))
    }
}

impl fmt::Display for FactorizationScheme {
    /// Command-line form: `regular`, `uniform:F`, `revpyr:F`, `dws`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Regular => write!(f, "regular"),
            Self::Uniform(r) => write!(f, "uniform:{r}"),
            Self::ReversePyramid(r) => write!(f, "revpyr:{r}"),
            Self::DepthwiseSeparable => write!(f, "dws"),
        }
    }
}

impl FromStr for FactorizationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let rate = |r: &str| -> Result<usize> {
            match r.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(invalid(format!("invalid factorization rate `{r}` in `{s}`"))),
            }
        };
        match s.split_once(':') {
            None if s == "regular" => Ok(Self::Regular),
            None if s == "dws" => Ok(Self::DepthwiseSeparable),
            Some(("uniform", r)) => Ok(Self::Uniform(rate(r)?)),
            Some(("revpyr", r)) => Ok(Self::ReversePyramid(rate(r)?)),
            _ => Err(invalid(format!(
                "unknown scheme `{s}` (expected regular, uniform:F, revpyr:F or dws)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgressionKind {
    UniformDoubling,
    ReversePyramidDoubling,
}

/// The fixed progressions: uniform `f = 2, 4, 8, 16` and reverse pyramid
/// `f_init = 2, 4`, optionally bracketed by the regular and depthwise endpoints.
pub fn progression(kind: ProgressionKind, endpoints: bool) -> Vec<FactorizationScheme> {
    let inner: Vec<FactorizationScheme> = match kind {
        ProgressionKind::UniformDoubling => [2, 4, 8, 16].map(FactorizationScheme::Uniform).to_vec(),
        ProgressionKind::ReversePyramidDoubling => [2, 4].map(FactorizationScheme::ReversePyramid).to_vec(),
    };
    if !endpoints {
        return inner;
    }
    std::iter::once(FactorizationScheme::Regular)
        .chain(inner)
        .chain(std::iter::once(FactorizationScheme::DepthwiseSeparable))
        .collect()
}
