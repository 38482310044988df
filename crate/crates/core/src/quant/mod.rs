//! Post-training affine quantization: batchnorm folding, range calibration,
//! simulated quint8 inference and the degradation metrics.

pub mod affine;
pub mod calibrate;
pub mod fold;
pub mod metrics;
pub mod range;
pub mod sim;

pub use affine::{dequantize, fake_quantize, quantize_affine, QuantParams, QuantizedTensor};
pub use calibrate::{calibrate, quant_units, CalibrationRecord, LayerCalibration, QuantUnit, UnitKind, UnitOp};
pub use fold::{fold_batchnorm, fold_conv_bn};
pub use metrics::{accuracy, qce, qmse, relative_degradation, QCE_EPSILON};
pub use range::{percentile_range_in_place, range_minmax, range_percentile, slice_minmax, ClipPercentiles, ValueRange};
pub use sim::{quantized_inference, QuantSimOptions, QuantizedModel};
