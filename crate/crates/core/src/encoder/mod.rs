//! Dual-pathway feature extraction: a residual CNN producing `C1..C5` and a
//! windowed-attention transformer producing `T1..T4`.

mod cnn;
mod swin;

pub use cnn::CnnPathway;
pub use swin::{heads_for, window_for, TransformerPathway, WindowAttention};

use candle_core::Tensor;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::nn::{Mode, Scope};
use crate::shape::{ShapePlan, Stage};

/// Both pathways of the encoder.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub cnn: CnnPathway,
    pub trans: TransformerPathway,
}

impl Encoder {
    pub fn new(scope: &mut Scope<'_>, cfg: &ModelConfig, plan: &ShapePlan) -> Result<Self> {
        let cnn = CnnPathway::new(
            &mut scope.sub("cnn"),
            plan.cnn.map(|s| s.channels),
            cfg.cnn_blocks,
        )?;
        let trans = TransformerPathway::new(
            &mut scope.sub("trans"),
            plan.trans.map(|s| s.channels),
            plan.trans.map(|s| s.height),
            cfg.trans_blocks,
            cfg.max_window,
            cfg.head_dim,
        )?;
        Ok(Encoder { cnn, trans })
    }
}

pub(crate) fn check_image_dims(images: &Tensor, plan: &ShapePlan) -> Result<()> {
    let dims = images.dims();
    let s = plan.input_side;
    if dims.len() != 4 || dims[1..] != [3, s, s] {
        let batch = dims.first().copied().unwrap_or(0);
        return Err(Error::shape("images", &[batch, 3, s, s], dims));
    }
    Ok(())
}

/// Runs the convolutional pathway, returning `C1..C5`.
pub fn cnn_forward(
    images: &Tensor,
    pathway: &CnnPathway,
    plan: &ShapePlan,
    mode: Mode,
) -> Result<[FeatureMap; 5]> {
    check_image_dims(images, plan)?;
    let feats = pathway.forward(images, mode)?;
    let mut out = Vec::with_capacity(5);
    for (i, f) in feats.into_iter().enumerate() {
        out.push(FeatureMap::new(f, Stage::Cnn(i + 1), plan)?);
    }
    Ok(out.try_into().expect("five maps"))
}

/// Runs the transformer pathway, returning `T1..T4`.
pub fn transformer_forward(
    images: &Tensor,
    pathway: &TransformerPathway,
    plan: &ShapePlan,
) -> Result<[FeatureMap; 4]> {
    check_image_dims(images, plan)?;
    let feats = pathway.forward(images)?;
    let mut out = Vec::with_capacity(4);
    for (i, f) in feats.into_iter().enumerate() {
        out.push(FeatureMap::new(f, Stage::Trans(i + 1), plan)?);
    }
    Ok(out.try_into().expect("four maps"))
}
