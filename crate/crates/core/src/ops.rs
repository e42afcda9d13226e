//! Small tensor helpers shared by the model, losses and GAN code.

use candle_core::{DType, Device, Tensor, D};
use sha2::{Digest, Sha256};

use crate::error::{OsdaError, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

pub fn device() -> Device {
    Device::Cpu
}

/// Softmax over the last dimension, shifted by the (detached) row maximum.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

pub fn clamp_prob(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?)
}

/// `log(clamp(p))`.
pub fn safe_log(p: &Tensor) -> Result<Tensor> {
    Ok(clamp_prob(p)?.log()?)
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((pos + tail)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    // exp(-softplus(-x)) keeps large |x| finite in both directions
    Ok(softplus(&x.neg()?)?.neg()?.exp()?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub fn rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

pub fn flat(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

pub fn from_rows(rows: &[Vec<f64>], device: &Device) -> Result<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(OsdaError::invalid("ragged rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Tensor::from_vec(flat, (rows.len(), cols), device)?)
}

pub fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    if flat(t)?.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OsdaError::NonFinite(what.to_string()))
    }
}

/// SHA-256 over the names, shapes and little-endian bytes of the tensors.
pub fn checksum<'a>(named: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<String> {
    let mut h = Sha256::new();
    for (name, t) in named {
        h.update(name.as_bytes());
        for d in t.dims() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in flat(t)? {
            h.update(v.to_le_bytes());
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
