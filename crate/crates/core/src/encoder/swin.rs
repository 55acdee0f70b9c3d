//! Windowed self-attention pathway: patch embedding, four attention stages,
//! patch merging between stages. Tensors are channels-last inside a stage.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{softmax_last_dim, to_nchw, to_nhwc, Conv2d, LayerNorm, Linear, Scope};

/// Largest divisor of `side` that does not exceed `max_window`.
///
/// Gives 7 on every stage of a 224-pixel input and the whole stage once the
/// side drops below 7.
pub fn window_for(side: usize, max_window: usize) -> usize {
    (1..=max_window.min(side))
        .rev()
        .find(|w| side % w == 0)
        .unwrap_or(1)
}

/// Largest head count not above `channels / head_dim` that divides `channels`.
pub fn heads_for(channels: usize, head_dim: usize) -> usize {
    let cap = (channels / head_dim).max(1);
    (1..=cap).rev().find(|h| channels % h == 0).unwrap_or(1)
}

/// Multi-head self-attention restricted to non-overlapping square windows of
/// an NHWC tensor.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl WindowAttention {
    pub fn new(scope: &mut Scope<'_>, dim: usize, heads: usize, depth: usize) -> Result<Self> {
        let std = 1.0 / (dim as f64).sqrt();
        Ok(WindowAttention {
            qkv: Linear::new(&mut scope.sub("qkv"), dim, 3 * dim, true, std)?,
            proj: Linear::new(&mut scope.sub("proj"), dim, dim, true, std / (depth as f64).sqrt())?,
            heads,
        })
    }

    pub fn forward(&self, x: &Tensor, window: usize) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        for side in [h, w] {
            if side % window != 0 {
                return Err(Error::Window { side, window });
            }
        }
        let (nh, nw) = (h / window, w / window);
        let n = window * window;
        let windows = x
            .reshape((b, nh, window, nw, window, c))?
            .permute((0, 1, 3, 2, 4, 5))?
            .contiguous()?
            .reshape((b * nh * nw, n, c))?;

        let bn = b * nh * nw;
        let hd = c / self.heads;
        let qkv = self
            .qkv
            .forward(&windows)?
            .reshape((bn, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?
            .contiguous()?;
        let q = qkv.get(0)?;
        let k = qkv.get(1)?;
        let v = qkv.get(2)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
        let attn = softmax_last_dim(&scores)?;
        let out = attn
            .matmul(&v)?
            .permute((0, 2, 1, 3))?
            .contiguous()?
            .reshape((bn, n, c))?;
        let out = self.proj.forward(&out)?;

        Ok(out
            .reshape((b, nh, nw, window, window, c))?
            .permute((0, 1, 3, 2, 4, 5))?
            .contiguous()?
            .reshape((b, h, w, c))?)
    }
}

#[derive(Debug, Clone)]
struct SwinBlock {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl SwinBlock {
    fn new(scope: &mut Scope<'_>, dim: usize, heads: usize, depth: usize) -> Result<Self> {
        let hidden = 4 * dim;
        Ok(SwinBlock {
            norm1: LayerNorm::new(&mut scope.sub("norm1"), dim)?,
            attn: WindowAttention::new(&mut scope.sub("attn"), dim, heads, depth)?,
            norm2: LayerNorm::new(&mut scope.sub("norm2"), dim)?,
            fc1: Linear::new(&mut scope.sub("fc1"), dim, hidden, true, 1.0 / (dim as f64).sqrt())?,
            fc2: Linear::new(
                &mut scope.sub("fc2"),
                hidden,
                dim,
                true,
                1.0 / (hidden as f64 * depth as f64).sqrt(),
            )?,
        })
    }

    fn forward(&self, x: &Tensor, window: usize) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm1.forward(x)?, window)?)?;
        let mlp = self.fc2.forward(&self.fc1.forward(&self.norm2.forward(&x)?)?.gelu()?)?;
        Ok((x + mlp)?)
    }
}

/// Concatenates each 2x2 neighbourhood and projects `4C -> 2C`.
#[derive(Debug, Clone)]
struct PatchMerging {
    norm: LayerNorm,
    reduction: Linear,
}

impl PatchMerging {
    fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(PatchMerging {
            norm: LayerNorm::new(&mut scope.sub("norm"), 4 * dim)?,
            reduction: Linear::new(
                &mut scope.sub("reduction"),
                4 * dim,
                2 * dim,
                false,
                1.0 / (4.0 * dim as f64).sqrt(),
            )?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let merged = x
            .reshape((b, h / 2, 2, w / 2, 2, c))?
            .permute((0, 1, 3, 4, 2, 5))?
            .contiguous()?
            .reshape((b, h / 2, w / 2, 4 * c))?;
        self.reduction.forward(&self.norm.forward(&merged)?)
    }
}

#[derive(Debug, Clone)]
pub struct TransformerPathway {
    patch_embed: Conv2d,
    embed_norm: LayerNorm,
    stages: Vec<Vec<SwinBlock>>,
    merges: Vec<PatchMerging>,
    out_norms: Vec<LayerNorm>,
    windows: [usize; 4],
}

impl TransformerPathway {
    /// `channels[i]` and `sides[i]` describe `T_{i+1}`.
    pub fn new(
        scope: &mut Scope<'_>,
        channels: [usize; 4],
        sides: [usize; 4],
        blocks_per_stage: usize,
        max_window: usize,
        head_dim: usize,
    ) -> Result<Self> {
        let mut embed_scope = scope.sub("patch_embed");
        let patch_embed = Conv2d::new(&mut embed_scope, 3, channels[0], 4, 4, 0, true)?;
        let embed_norm = LayerNorm::new(&mut scope.sub("embed_norm"), channels[0])?;
        let depth = 4 * blocks_per_stage;
        let mut stages = Vec::new();
        let mut merges = Vec::new();
        let mut out_norms = Vec::new();
        for i in 0..4 {
            let heads = heads_for(channels[i], head_dim);
            let blocks = (0..blocks_per_stage)
                .map(|b| {
                    SwinBlock::new(&mut scope.sub(&format!("stage{}.block{b}", i + 1)), channels[i], heads, depth)
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(blocks);
            out_norms.push(LayerNorm::new(&mut scope.sub(&format!("stage{}.out_norm", i + 1)), channels[i])?);
            if i < 3 {
                merges.push(PatchMerging::new(&mut scope.sub(&format!("merge{}", i + 1)), channels[i])?);
            }
        }
        let windows = sides.map(|s| window_for(s, max_window));
        Ok(TransformerPathway {
            patch_embed,
            embed_norm,
            stages,
            merges,
            out_norms,
            windows,
        })
    }

    pub fn windows(&self) -> [usize; 4] {
        self.windows
    }

    /// Returns `[T1, .., T4]` in NCHW layout.
    pub fn forward(&self, images: &Tensor) -> Result<[Tensor; 4]> {
        let mut x = self.embed_norm.forward(&to_nhwc(&self.patch_embed.forward(images)?)?)?;
        let mut feats = Vec::with_capacity(4);
        for i in 0..4 {
            if i > 0 {
                x = self.merges[i - 1].forward(&x)?;
            }
            for block in &self.stages[i] {
                x = block.forward(&x, self.windows[i])?;
            }
            feats.push(to_nchw(&self.out_norms[i].forward(&x)?)?);
        }
        Ok(feats.try_into().expect("four stages"))
    }
}
