//! Knowledge-guided fusion of `C5` and `T4` on the fusion grid, plus the
//! additive and concatenation baselines.
//!
//! Pipeline for [`FusionMode::Fbl`]:
//!
//! 1. `K_a = softmax_tokens(K_fusion)` per channel.
//! 2. `X_g = N_t * K_a ⊙ LN(Flatten(up(squeeze(X))))` for `X` in `{C5, T4}`.
//! 3. `W = softmax_rows((C5_g W_q^T)(T4_g W_k^T)^T / sqrt(D))`, `F = W C5_g`.
//! 4. `F_out = Block(F + Block(up(C5)) + Block(up(T4)))`.
//!
//! [`FusionMode::NoFbl`] runs the same pipeline with a uniform `K_a`.

use candle_core::{DType, Device, Tensor};

use crate::config::FusionMode;
use crate::error::{Error, Result};
use crate::feature::expect_dims;
use crate::nn::{resize_bilinear, softmax_last_dim, Conv2d, ConvBlock, LayerNorm, Linear, Mode, Scope};
use crate::shape::ShapePlan;

/// Token grid `(batch, N_t, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Cnn,
    Trans,
    Fused,
}

#[derive(Debug, Clone)]
pub struct TokenGrid {
    pub tokens: Tensor,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub squeeze_c: Conv2d,
    pub squeeze_t: Conv2d,
    pub ln_c: LayerNorm,
    pub ln_t: LayerNorm,
    pub w_q: Linear,
    pub w_k: Linear,
    pub side_c: ConvBlock,
    pub side_t: ConvBlock,
    pub main: ConvBlock,
    pub cat_proj: Conv2d,
    grid: (usize, usize),
    dim: usize,
}

impl FusionParams {
    pub fn new(scope: &mut Scope<'_>, plan: &ShapePlan) -> Result<Self> {
        let wide = plan.cnn[4].channels;
        let d = plan.fusion_dim();
        let std = 1.0 / (d as f64).sqrt();
        Ok(FusionParams {
            squeeze_c: Conv2d::new(&mut scope.sub("squeeze_c"), wide, d, 1, 1, 0, false)?,
            squeeze_t: Conv2d::new(&mut scope.sub("squeeze_t"), wide, d, 1, 1, 0, false)?,
            ln_c: LayerNorm::new(&mut scope.sub("ln_c"), d)?,
            ln_t: LayerNorm::new(&mut scope.sub("ln_t"), d)?,
            w_q: Linear::new(&mut scope.sub("w_q"), d, d, false, std)?,
            w_k: Linear::new(&mut scope.sub("w_k"), d, d, false, std)?,
            side_c: ConvBlock::new(&mut scope.sub("side_c"), wide, d, 3)?,
            side_t: ConvBlock::new(&mut scope.sub("side_t"), wide, d, 3)?,
            main: ConvBlock::new(&mut scope.sub("main"), d, d, 3)?,
            cat_proj: Conv2d::new(&mut scope.sub("cat_proj"), 2 * d, d, 1, 1, 0, true)?,
            grid: (plan.knowledge_fusion.height, plan.knowledge_fusion.width),
            dim: d,
        })
    }

    pub fn tokens(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Per-channel softmax over the spatial tokens of `(1, D, h, w)` knowledge.
/// Returns `(N_t, D)`: column `c` is the attention distribution of channel `c`.
pub fn knowledge_attention(k_fusion: &Tensor) -> Result<Tensor> {
    let (one, d, h, w) = k_fusion.dims4()?;
    if one != 1 {
        return Err(Error::shape("knowledge (unbatched)", &[1, d, h, w], k_fusion.dims()));
    }
    let flat = k_fusion.reshape((d, h * w))?;
    Ok(softmax_last_dim(&flat)?.t()?.contiguous()?)
}

/// The `K_a` that a constant knowledge map produces: every entry `1 / N_t`.
pub fn uniform_attention(tokens: usize, dim: usize, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::full(1.0 / tokens as f64, (tokens, dim), &Device::Cpu)?.to_dtype(dtype)?)
}

fn squeeze_up_flatten(x: &Tensor, squeeze: &Conv2d, grid: (usize, usize)) -> Result<Tensor> {
    let up = resize_bilinear(&squeeze.forward(x)?, grid.0, grid.1)?;
    let (b, d, h, w) = up.dims4()?;
    Ok(up.reshape((b, d, h * w))?.transpose(1, 2)?.contiguous()?)
}

/// Squeezes, upsamples, flattens and layer-normalises both features, then
/// gates every token by `N_t * K_a`.
pub fn guide_features(
    c5: &Tensor,
    t4: &Tensor,
    k_attention: &Tensor,
    params: &FusionParams,
) -> Result<(TokenGrid, TokenGrid)> {
    if c5.dims() != t4.dims() {
        return Err(Error::shape("T4 vs C5", c5.dims(), t4.dims()));
    }
    let (n_t, d) = (params.tokens(), params.dim());
    expect_dims("K_a", k_attention, &[n_t, d])?;
    let gate = (k_attention * n_t as f64)?.unsqueeze(0)?;
    let c = params.ln_c.forward(&squeeze_up_flatten(c5, &params.squeeze_c, params.grid)?)?;
    let t = params.ln_t.forward(&squeeze_up_flatten(t4, &params.squeeze_t, params.grid)?)?;
    Ok((
        TokenGrid {
            tokens: c.broadcast_mul(&gate)?,
            provenance: Provenance::Cnn,
        },
        TokenGrid {
            tokens: t.broadcast_mul(&gate)?,
            provenance: Provenance::Trans,
        },
    ))
}

/// Row-softmax attention weights `W` with `C5_g` as query and `T4_g` as key.
pub fn attention_weights(c5_g: &TokenGrid, t4_g: &TokenGrid, params: &FusionParams) -> Result<Tensor> {
    if c5_g.tokens.dims() != t4_g.tokens.dims() || c5_g.tokens.rank() != 3 {
        return Err(Error::shape("token grids", c5_g.tokens.dims(), t4_g.tokens.dims()));
    }
    let d = c5_g.tokens.dims()[2];
    let q = params.w_q.forward(&c5_g.tokens)?;
    let k = params.w_k.forward(&t4_g.tokens)?;
    let logits = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (d as f64).sqrt()))?;
    softmax_last_dim(&logits)
}

/// `F = W V` with `V = C5_g`.
pub fn cross_attention_fuse(c5_g: &TokenGrid, t4_g: &TokenGrid, params: &FusionParams) -> Result<TokenGrid> {
    let w = attention_weights(c5_g, t4_g, params)?;
    Ok(TokenGrid {
        tokens: w.matmul(&c5_g.tokens)?,
        provenance: Provenance::Fused,
    })
}

fn tokens_to_grid(tokens: &Tensor, grid: (usize, usize)) -> Result<Tensor> {
    let (b, _, d) = tokens.dims3()?;
    Ok(tokens
        .transpose(1, 2)?
        .contiguous()?
        .reshape((b, d, grid.0, grid.1))?)
}

/// `F_out = Block(F + Block(up(C5)) + Block(up(T4)))`; the side blocks squeeze
/// channels with their own convolution.
pub fn residual_enrich(
    fused: &TokenGrid,
    c5: &Tensor,
    t4: &Tensor,
    params: &FusionParams,
    mode: Mode,
) -> Result<Tensor> {
    let (gh, gw) = params.grid;
    let f = tokens_to_grid(&fused.tokens, params.grid)?;
    expect_dims("F", &f, &[c5.dims()[0], params.dim(), gh, gw])?;
    let side_c = params.side_c.forward(&resize_bilinear(c5, gh, gw)?, mode)?;
    let side_t = params.side_t.forward(&resize_bilinear(t4, gh, gw)?, mode)?;
    params.main.forward(&((f + side_c)? + side_t)?, mode)
}

/// Everything the guided pipeline computes, for inspection and tests.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub k_attention: Tensor,
    pub c5_g: TokenGrid,
    pub t4_g: TokenGrid,
    pub fused: TokenGrid,
    pub output: Tensor,
}

/// Guided pipeline with the given `K_a`.
pub fn guided_fuse(
    c5: &Tensor,
    t4: &Tensor,
    k_attention: Tensor,
    params: &FusionParams,
    mode: Mode,
) -> Result<FusionTrace> {
    let (c5_g, t4_g) = guide_features(c5, t4, &k_attention, params)?;
    let fused = cross_attention_fuse(&c5_g, &t4_g, params)?;
    let output = residual_enrich(&fused, c5, t4, params, mode)?;
    Ok(FusionTrace {
        k_attention,
        c5_g,
        t4_g,
        fused,
        output,
    })
}

/// The non-knowledge fusions: `add`, `cat`, and the guided pipeline with a
/// uniform attention grid (`no_fbl`).
pub fn fuse_baseline(
    c5: &Tensor,
    t4: &Tensor,
    fusion: FusionMode,
    params: &FusionParams,
    mode: Mode,
) -> Result<Tensor> {
    if c5.dims() != t4.dims() {
        return Err(Error::shape("T4 vs C5", c5.dims(), t4.dims()));
    }
    let (gh, gw) = params.grid;
    match fusion {
        FusionMode::Add => {
            let c = resize_bilinear(&params.squeeze_c.forward(c5)?, gh, gw)?;
            let t = resize_bilinear(&params.squeeze_t.forward(t4)?, gh, gw)?;
            params.main.forward(&(c + t)?, mode)
        }
        FusionMode::Cat => {
            let c = resize_bilinear(&params.squeeze_c.forward(c5)?, gh, gw)?;
            let t = resize_bilinear(&params.squeeze_t.forward(t4)?, gh, gw)?;
            let joined = params.cat_proj.forward(&Tensor::cat(&[&c, &t], 1)?)?;
            params.main.forward(&joined, mode)
        }
        FusionMode::NoFbl => {
            let ka = uniform_attention(params.tokens(), params.dim(), c5.dtype())?;
            Ok(guided_fuse(c5, t4, ka, params, mode)?.output)
        }
        FusionMode::Fbl => Err(Error::Mode(fusion.to_string())),
    }
}
