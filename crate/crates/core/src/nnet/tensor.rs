use crate::error::{Error, Result};

/// Dense row-major tensor of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("tensor holds non-finite values".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    /// Interleaved RGB bytes (HWC) to a CHW tensor scaled to [0, 1].
    pub fn from_rgb_bytes(raw: &[u8], width: usize, height: usize) -> Result<Self> {
        if raw.len() != width * height * 3 {
            return Err(Error::invalid("RGB buffer size does not match dimensions"));
        }
        Ok(Self {
            shape: vec![3, height, width],
            data: chw_from_rgb(raw, width, height),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn chw_from_rgb(raw: &[u8], width: usize, height: usize) -> Vec<f64> {
    let plane = width * height;
    let mut out = vec![0.0; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    out
}
