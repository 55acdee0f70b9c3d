use candle_core::{Tensor, Var, D};

use super::store::{Buffer, Init, Scope};
use super::Mode;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        scope: &mut Scope<'_>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel * kernel;
        let weight = scope.var("weight", &[out_ch, in_ch, kernel, kernel], Init::Kaiming { fan_in })?;
        let bias = if bias {
            Some(scope.var("bias", &[out_ch], Init::Zeros)?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }
}

/// Batch normalisation over `(N, H, W)` per channel.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(scope: &mut Scope<'_>, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: scope.var("gamma", &[channels], Init::Ones)?,
            beta: scope.var("beta", &[channels], Init::Zeros)?,
            running_mean: scope.buffer("running_mean", &[channels], Init::Zeros)?,
            running_var: scope.buffer("running_var", &[channels], Init::Ones)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let gamma = self.gamma.as_tensor().reshape((1, (), 1, 1))?;
        let beta = self.beta.as_tensor().reshape((1, (), 1, 1))?;
        batch_norm(
            x,
            &gamma,
            &beta,
            &self.running_mean,
            &self.running_var,
            self.momentum,
            self.eps,
            mode,
        )
    }
}

/// Shared batch-norm kernel. In training mode the batch statistics normalise
/// and the running estimates advance; in eval mode the running estimates
/// normalise and nothing changes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Buffer,
    running_var: &Buffer,
    momentum: f64,
    eps: f64,
    mode: Mode,
) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (mean, var) = match mode {
        Mode::Train => {
            let mean = x.mean_keepdim((0, 2, 3))?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim((0, 2, 3))?;
            let count = n * h * w;
            let unbiased = if count > 1 {
                count as f64 / (count - 1) as f64
            } else {
                1.0
            };
            let rm = running_mean.get();
            let rv = running_var.get();
            let m = mean.detach().reshape(c)?;
            let v = var.detach().reshape(c)?;
            running_mean.set(((rm * (1.0 - momentum))? + (m * momentum)?)?);
            running_var.set(((rv * (1.0 - momentum))? + (v * (momentum * unbiased))?)?);
            (mean, var)
        }
        Mode::Eval => (
            running_mean.get().reshape((1, c, 1, 1))?,
            running_var.get().reshape((1, c, 1, 1))?,
        ),
    };
    let xhat = x
        .broadcast_sub(&mean)?
        .broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(xhat.broadcast_mul(gamma)?.broadcast_add(beta)?)
}

/// `ReLU(BN(Conv(x)))`.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBlock {
    pub fn new(scope: &mut Scope<'_>, in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        let conv = Conv2d::new(&mut scope.sub("conv"), in_ch, out_ch, kernel, 1, kernel / 2, true)?;
        let bn = BatchNorm2d::new(&mut scope.sub("bn"), out_ch)?;
        Ok(ConvBlock { conv, bn })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?, mode)?.relu()?)
    }
}

/// `y = x W^T + b` over the last axis of any-rank input.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    pub fn new(
        scope: &mut Scope<'_>,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        std: f64,
    ) -> Result<Self> {
        let weight = scope.var("weight", &[out_dim, in_dim], Init::Normal(std))?;
        let bias = if bias {
            Some(scope.var("bias", &[out_dim], Init::Zeros)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let in_dim = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / in_dim;
        let y = x
            .reshape((rows, in_dim))?
            .matmul(&self.weight.as_tensor().t()?)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b.as_tensor())?,
            None => y,
        };
        let mut out = dims;
        *out.last_mut().unwrap() = self.weight.dims()[0];
        Ok(y.reshape(out)?)
    }
}

/// Layer normalisation over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Var,
    pub beta: Var,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: scope.var("gamma", &[dim], Init::Ones)?,
            beta: scope.var("beta", &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let xhat = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xhat
            .broadcast_mul(self.gamma.as_tensor())?
            .broadcast_add(self.beta.as_tensor())?)
    }
}
