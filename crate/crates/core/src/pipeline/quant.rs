use crate::error::{Error, Result};

/// Per-tensor symmetric linear quantization of one weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub scale: f32,
    pub bits: u32,
    pub values: Vec<i16>,
    pub dims: Vec<usize>,
}

impl QuantizedTensor {
    pub fn quantize(weights: &[f32], dims: Vec<usize>, bits: u32) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(Error::param(format!("quantization needs 2..=16 bits, got {bits}")));
        }
        if dims.iter().product::<usize>() != weights.len() {
            return Err(Error::shape(format!("dims {dims:?} do not hold {} weights", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("cannot quantize non-finite weights".into()));
        }
        let qmax = ((1i32 << (bits - 1)) - 1) as f32;
        let peak = weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
        let scale = if peak == 0.0 { 1.0 } else { peak / qmax };
        let values = weights.iter().map(|&w| (w / scale).round().clamp(-qmax, qmax) as i16).collect();
        Ok(Self { scale, bits, values, dims })
    }

    pub fn dequantize(&self) -> Vec<f32> {
        self.values.iter().map(|&q| q as f32 * self.scale).collect()
    }
}
