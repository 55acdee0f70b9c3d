//! Batched, differentiable form of the training loss on tensors.

use candle_core::{Tensor, D};

use crate::error::{Error, Result};
use crate::metrics::LossWeights;

/// Loss tensor (scalar) and the batch means of its three terms.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub total: Tensor,
    pub kldiv: f64,
    pub nss: f64,
    pub cc: f64,
}

impl BatchLoss {
    pub fn value(&self) -> Result<f64> {
        Ok(self.total.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
    }
}

fn zscore_rows(x: &Tensor) -> Result<Tensor> {
    let centred = x.broadcast_sub(&x.mean_keepdim(1)?)?;
    let std = centred.sqr()?.mean_keepdim(1)?.sqrt()?;
    Ok(centred.broadcast_div(&std)?)
}

/// `mean_b [mu * kldiv(norm P_b, norm Q_b) - eta * nss(P_b, fix_b) - xi * cc(P_b, Q_b)]`.
///
/// `pred`, `gt` and `fix_mask` are `(B, 1, H, W)`; the mask holds 1 at fixated
/// pixels and 0 elsewhere and must be nonempty per sample.
pub fn batch_loss(
    pred: &Tensor,
    gt: &Tensor,
    fix_mask: &Tensor,
    w: &LossWeights,
    epsilon: f64,
) -> Result<BatchLoss> {
    if pred.dims() != gt.dims() || pred.dims() != fix_mask.dims() {
        return Err(Error::shape("loss inputs", pred.dims(), gt.dims()));
    }
    let b = pred.dims()[0];
    let p = pred.flatten_from(1)?;
    let q = gt.to_dtype(p.dtype())?.flatten_from(1)?;
    let m = fix_mask.to_dtype(p.dtype())?.flatten_from(1)?;

    let ph = p.broadcast_div(&p.sum_keepdim(1)?)?;
    let qh = q.broadcast_div(&q.sum_keepdim(1)?)?;
    let ratio = (qh.clone() / (ph + epsilon)?)?;
    let kl = (&qh * (ratio + epsilon)?.log()?)?.sum(1)?;

    let zp = zscore_rows(&p)?;
    let zq = zscore_rows(&q)?;
    let nss = ((&zp * &m)?.sum(1)? / m.sum(1)?)?;
    let cc = (&zp * &zq)?.mean(D::Minus1)?;

    let per = ((kl.affine(w.mu, 0.0)? - nss.affine(w.eta, 0.0)?)? - cc.affine(w.xi, 0.0)?)?;
    let total = per.mean(0)?;
    let mean_of = |t: &Tensor| -> Result<f64> {
        Ok(t.detach().to_dtype(candle_core::DType::F64)?.sum_all()?.to_scalar::<f64>()? / b as f64)
    };
    Ok(BatchLoss {
        kldiv: mean_of(&kl)?,
        nss: mean_of(&nss)?,
        cc: mean_of(&cc)?,
        total,
    })
}
