use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::shape::{ShapePlan, Stage};

/// A batched NCHW tensor tagged with the stage it belongs to.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub data: Tensor,
    pub stage: Stage,
}

impl FeatureMap {
    /// Wraps `data`, checking its per-sample shape against the plan.
    pub fn new(data: Tensor, stage: Stage, plan: &ShapePlan) -> Result<Self> {
        let want = plan.get(stage).dims();
        let dims = data.dims();
        if dims.len() != 4 || dims[1..] != want {
            let batch = dims.first().copied().unwrap_or(0);
            return Err(Error::shape(
                format!("{stage:?}"),
                &[batch, want[0], want[1], want[2]],
                dims,
            ));
        }
        Ok(FeatureMap { data, stage })
    }

    pub fn batch(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn dims(&self) -> &[usize] {
        self.data.dims()
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> Result<bool> {
        let v: Vec<f64> = self
            .data
            .flatten_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_vec1()?;
        Ok(v.iter().all(|x| x.is_finite()))
    }
}

/// Checks that a tensor has exactly the expected dims.
pub(crate) fn expect_dims(what: &str, t: &Tensor, want: &[usize]) -> Result<()> {
    if t.dims() != want {
        return Err(Error::shape(what, want, t.dims()));
    }
    Ok(())
}
