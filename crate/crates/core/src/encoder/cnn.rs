//! Residual convolutional pathway with the ResNet-18 stage layout.

use candle_core::Tensor;

use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, Mode, Scope};

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    shortcut: Option<(Conv2d, BatchNorm2d)>,
}

impl BasicBlock {
    fn new(scope: &mut Scope<'_>, in_ch: usize, out_ch: usize, stride: usize) -> Result<Self> {
        let conv1 = Conv2d::new(&mut scope.sub("conv1"), in_ch, out_ch, 3, stride, 1, false)?;
        let bn1 = BatchNorm2d::new(&mut scope.sub("bn1"), out_ch)?;
        let conv2 = Conv2d::new(&mut scope.sub("conv2"), out_ch, out_ch, 3, 1, 1, false)?;
        let bn2 = BatchNorm2d::new(&mut scope.sub("bn2"), out_ch)?;
        let shortcut = if stride != 1 || in_ch != out_ch {
            Some((
                Conv2d::new(&mut scope.sub("down"), in_ch, out_ch, 1, stride, 0, false)?,
                BatchNorm2d::new(&mut scope.sub("down_bn"), out_ch)?,
            ))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1,
            bn1,
            conv2,
            bn2,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, mode)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, mode)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }
}

/// Stride-2 7x7 stem followed by four residual stages, each halving the side.
///
/// The first residual stage downsamples with a strided block in place of the
/// max-pool, so every stage output is reached through differentiable
/// convolutions only.
#[derive(Debug, Clone)]
pub struct CnnPathway {
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    stages: Vec<Vec<BasicBlock>>,
}

impl CnnPathway {
    pub fn new(scope: &mut Scope<'_>, channels: [usize; 5], blocks_per_stage: usize) -> Result<Self> {
        let stem = Conv2d::new(&mut scope.sub("stem"), 3, channels[0], 7, 2, 3, false)?;
        let stem_bn = BatchNorm2d::new(&mut scope.sub("stem_bn"), channels[0])?;
        let mut stages = Vec::with_capacity(4);
        for s in 1..5 {
            let mut blocks = Vec::with_capacity(blocks_per_stage);
            for b in 0..blocks_per_stage {
                let (in_ch, stride) = if b == 0 { (channels[s - 1], 2) } else { (channels[s], 1) };
                let mut sc = scope.sub(&format!("stage{}.block{b}", s + 1));
                blocks.push(BasicBlock::new(&mut sc, in_ch, channels[s], stride)?);
            }
            stages.push(blocks);
        }
        Ok(CnnPathway {
            stem,
            stem_bn,
            stages,
        })
    }

    /// Returns `[C1, .., C5]`.
    pub fn forward(&self, images: &Tensor, mode: Mode) -> Result<[Tensor; 5]> {
        let c1 = self.stem_bn.forward(&self.stem.forward(images)?, mode)?.relu()?;
        let mut feats = vec![c1];
        for stage in &self.stages {
            let mut x = feats.last().unwrap().clone();
            for block in stage {
                x = block.forward(&x, mode)?;
            }
            feats.push(x);
        }
        Ok(feats.try_into().expect("five stages"))
    }
}
