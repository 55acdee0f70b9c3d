//! Exact per-stage tensor shapes for a configuration.

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, FeedbackNode, ModelConfig};
use crate::error::Result;

/// `(channels, height, width)` of one feature map, batch dimension excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl StageShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        StageShape {
            channels,
            height,
            width,
        }
    }

    pub const fn square(channels: usize, side: usize) -> Self {
        Self::new(channels, side, side)
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// Dims with a leading batch axis.
    pub fn batched(&self, batch: usize) -> [usize; 4] {
        [batch, self.channels, self.height, self.width]
    }
}

impl From<(usize, usize, usize)> for StageShape {
    fn from((c, h, w): (usize, usize, usize)) -> Self {
        StageShape::new(c, h, w)
    }
}

/// Which tensor of the network a shape or feature map refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// CNN feature `C_i`, `i` in 1..=5.
    Cnn(usize),
    /// Transformer feature `T_i`, `i` in 1..=4.
    Trans(usize),
    /// Decoder feature `d_j`, `j` in 0..=4.
    Decoder(usize),
    Knowledge,
    KnowledgeFusion,
    /// Output of the fusion module, on the fusion grid.
    Fusion,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    pub input_side: usize,
    pub cnn: [StageShape; 5],
    pub trans: [StageShape; 4],
    pub decoder: [StageShape; 5],
    pub knowledge: StageShape,
    pub knowledge_fusion: StageShape,
    pub attention: StageShape,
}

impl ShapePlan {
    pub fn get(&self, stage: Stage) -> StageShape {
        match stage {
            Stage::Cnn(i) => self.cnn[i - 1],
            Stage::Trans(i) => self.trans[i - 1],
            Stage::Decoder(j) => self.decoder[j],
            Stage::Knowledge => self.knowledge,
            Stage::KnowledgeFusion | Stage::Fusion => self.knowledge_fusion,
            Stage::Attention => self.attention,
        }
    }

    /// Number of tokens on the fusion grid.
    pub fn fusion_tokens(&self) -> usize {
        self.knowledge_fusion.height * self.knowledge_fusion.width
    }

    /// Token dimension on the fusion grid.
    pub fn fusion_dim(&self) -> usize {
        self.knowledge_fusion.channels
    }
}

/// Derives every stage shape from the configuration.
///
/// CNN stages follow the ResNet layout where the first two stages share the
/// base width: `C_i = (w * 2^max(0, i-2), S / 2^i)`. Transformer stages start
/// at patch size 4: `T_i = (w * 2^(i-1), S / 2^(i+1))`. The decoder climbs
/// from `(4w, S/16)` to `(w/4, S)`, halving channels while doubling the side.
pub fn shape_plan(cfg: &ModelConfig) -> Result<ShapePlan> {
    let cfg = validate_config(cfg.clone())?;
    let (s, w) = (cfg.input_side, cfg.base_width);

    let cnn = std::array::from_fn(|k| {
        let i = k + 1;
        StageShape::square(w << i.saturating_sub(2), s >> i)
    });
    let trans = std::array::from_fn(|k| {
        let i = k + 1;
        StageShape::square(w << (i - 1), s >> (i + 1))
    });
    let decoder = std::array::from_fn(|j| StageShape::square((4 * w) >> j, s >> (4 - j)));

    let knowledge = decoder[cfg.feedback_node.index()];
    Ok(ShapePlan {
        input_side: s,
        cnn,
        trans,
        decoder,
        knowledge,
        knowledge_fusion: StageShape::square(4 * w, s / 16),
        attention: StageShape::square(1, s),
    })
}

/// Shape of the decoder feature at `node` (the knowledge shape when it is the feedback node).
pub fn node_shape(plan: &ShapePlan, node: FeedbackNode) -> StageShape {
    plan.decoder[node.index()]
}
