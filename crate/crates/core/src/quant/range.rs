use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Closed interval `[min, max]` of observed values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min <= max) {
            return Err(invalid(format!("range min {min} exceeds max {max}")));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, other: &ValueRange) -> bool {
        self.min <= other.min && other.max <= self.max
    }

    /// Intersection with `outer`, collapsed to the nearest bound when disjoint.
    pub fn clamp_to(&self, outer: &ValueRange) -> ValueRange {
        let min = self.min.clamp(outer.min, outer.max);
        let max = self.max.clamp(outer.min, outer.max);
        ValueRange { min, max: max.max(min) }
    }

    pub fn scaled(&self, a: f64) -> ValueRange {
        let (p, q) = (self.min * a, self.max * a);
        ValueRange {
            min: p.min(q),
            max: p.max(q),
        }
    }
}

/// Percentile pair used for clipping, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPercentiles {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClipPercentiles {
    fn default() -> Self {
        Self { lo: 1.0, hi: 99.0 }
    }
}

impl ClipPercentiles {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(invalid(format!(
                "percentiles must satisfy 0 <= lo < hi <= 100, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }
}

pub fn range_minmax<T: Scalar>(t: &Tensor<T>) -> Result<ValueRange> {
    slice_minmax(t.data())
}

pub fn slice_minmax<T: Scalar>(values: &[T]) -> Result<ValueRange> {
    if values.is_empty() {
        return Err(invalid("cannot take the range of an empty tensor"));
    }
    let (mut lo, mut hi) = (values[0], values[0]);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    ValueRange::new(lo.to_f64_lossy(), hi.to_f64_lossy())
}

/// Percentile range of the flattened values, interpolating linearly between
/// order statistics at rank `p / 100 * (n - 1)`.
pub fn range_percentile<T: Scalar>(samples: &Tensor<T>, clip: ClipPercentiles) -> Result<ValueRange> {
    let mut buf = samples.data().to_vec();
    percentile_range_in_place(&mut buf, clip)
}

/// As [`range_percentile`], reordering `values` in the process.
pub fn percentile_range_in_place<T: Scalar>(values: &mut [T], clip: ClipPercentiles) -> Result<ValueRange> {
    ClipPercentiles::new(clip.lo, clip.hi)?;
    if values.is_empty() {
        return Err(invalid("cannot take percentiles of an empty tensor"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("cannot take percentiles of NaN values"));
    }
    let lo = percentile_in_place(values, clip.lo);
    let hi = percentile_in_place(values, clip.hi);
    ValueRange::new(lo, hi.max(lo))
}

fn percentile_in_place<T: Scalar>(values: &mut [T], pct: f64) -> f64 {
    let n = values.len();
    let rank = pct / 100.0 * (n - 1) as f64;
    let below = rank.floor() as usize;
    let frac = rank - below as f64;
    let (_, a, upper) = values.select_nth_unstable_by(below, |x, y| x.partial_cmp(y).unwrap());
    let a = a.to_f64_lossy();
    if frac == 0.0 || upper.is_empty() {
        return a;
    }
    let b = upper.iter().fold(T::infinity(), |m, &v| m.min(v)).to_f64_lossy();
    a + (b - a) * frac
}
