use candle_core::{DType, Device, Tensor, D};

use crate::error::Result;

/// Row-stochastic `(out, in)` matrix of 1-D linear interpolation weights with
/// half-pixel centres (no corner alignment, edge clamping).
pub fn bilinear_matrix(input: usize, output: usize) -> Vec<f64> {
    let mut m = vec![0.0; output * input];
    let scale = input as f64 / output as f64;
    for o in 0..output {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        let frac = src - i0 as f64;
        m[o * input + i0] += 1.0 - frac;
        m[o * input + i1] += frac;
    }
    m
}

fn matrix_tensor(rows: usize, cols: usize, data: Vec<f64>, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, (rows, cols), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Bilinear resampling of an NCHW tensor, expressed as two matrix products.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let dtype = x.dtype();
    // (W_out, W)^T applied along the width axis.
    let rw = matrix_tensor(out_w, w, bilinear_matrix(w, out_w), dtype)?.t()?;
    let rh = matrix_tensor(out_h, h, bilinear_matrix(h, out_h), dtype)?.t()?;
    let y = x.reshape((b * c * h, w))?.matmul(&rw)?; // (b c h, out_w)
    let y = y
        .reshape((b, c, h, out_w))?
        .transpose(2, 3)?
        .contiguous()?
        .reshape((b * c * out_w, h))?
        .matmul(&rh)?; // (b c out_w, out_h)
    Ok(y
        .reshape((b, c, out_w, out_h))?
        .transpose(2, 3)?
        .contiguous()?)
}

/// Numerically stable softmax over the last axis.
pub fn softmax_last_dim(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

/// `(B, C, H, W)` to `(B, H, W, C)`.
pub fn to_nhwc(x: &Tensor) -> Result<Tensor> {
    Ok(x.permute((0, 2, 3, 1))?.contiguous()?)
}

/// `(B, H, W, C)` to `(B, C, H, W)`.
pub fn to_nchw(x: &Tensor) -> Result<Tensor> {
    Ok(x.permute((0, 3, 1, 2))?.contiguous()?)
}
