//! The feedback loop: a persistent knowledge buffer `K` that absorbs one
//! detached decoder feature per training step.
//!
//! One update is
//!
//! ```text
//! K' = mean_batch( ReLU(BN(Conv3x3(broadcast(K) ++ B))) + K )
//! ```
//!
//! where `++` concatenates channels and `Conv3x3` maps `2c -> c`. The
//! convolution and batch-norm affine parameters are frozen at initialisation
//! (no loss path reaches them); batch-norm normalises with the statistics of
//! the concatenated batch and advances its own running estimates.

use candle_core::{DType, Device, Tensor};

use crate::config::FeedbackNode;
use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::nn::{resize_bilinear, Buffer, Conv2d, Init, Mode, Scope};
use crate::shape::{ShapePlan, StageShape};

/// Frozen parameters of the update convolution and its batch norm.
#[derive(Debug, Clone)]
pub struct UpdateParams {
    /// `(c, 2c, 3, 3)`.
    pub conv_weight: Tensor,
    /// `(c,)`.
    pub conv_bias: Tensor,
    pub bn_gamma: Tensor,
    pub bn_beta: Tensor,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl UpdateParams {
    /// Kaiming-initialised convolution, unit/zero batch-norm affine.
    pub fn new(scope: &mut Scope<'_>, channels: usize) -> Result<Self> {
        let fan_in = 2 * channels * 9;
        Ok(UpdateParams {
            conv_weight: scope.sample(&[channels, 2 * channels, 3, 3], Init::Kaiming { fan_in })?,
            conv_bias: scope.sample(&[channels], Init::Zeros)?,
            bn_gamma: scope.sample(&[channels], Init::Ones)?,
            bn_beta: scope.sample(&[channels], Init::Zeros)?,
            running_mean: Buffer::new(scope.sample(&[channels], Init::Zeros)?),
            running_var: Buffer::new(scope.sample(&[channels], Init::Ones)?),
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        })
    }

    /// Named tensors, for checkpoints.
    pub fn named_tensors(&self) -> Vec<(&'static str, Tensor)> {
        vec![
            ("knowledge.update.conv.weight", self.conv_weight.clone()),
            ("knowledge.update.conv.bias", self.conv_bias.clone()),
            ("knowledge.update.bn.gamma", self.bn_gamma.clone()),
            ("knowledge.update.bn.beta", self.bn_beta.clone()),
            ("knowledge.update.bn.running_mean", self.running_mean.get()),
            ("knowledge.update.bn.running_var", self.running_var.get()),
        ]
    }
}

/// The incremental-knowledge buffer and its update counter.
#[derive(Debug, Clone)]
pub struct KnowledgeState {
    /// `(c, h, w)`, no batch axis.
    pub k: Tensor,
    pub iteration: u64,
    pub update: UpdateParams,
}

/// Fresh all-ones knowledge for the plan's feedback node.
pub fn init_knowledge(plan: &ShapePlan, update: UpdateParams, dtype: DType) -> Result<KnowledgeState> {
    let s = plan.knowledge;
    if update.conv_weight.dims() != [s.channels, 2 * s.channels, 3, 3] {
        return Err(Error::shape(
            "knowledge update conv",
            &[s.channels, 2 * s.channels, 3, 3],
            update.conv_weight.dims(),
        ));
    }
    let k = Tensor::ones(s.dims().as_slice(), dtype, &Device::Cpu)?;
    Ok(KnowledgeState {
        k,
        iteration: 0,
        update,
    })
}

impl KnowledgeState {
    pub fn shape(&self) -> StageShape {
        let d = self.k.dims();
        StageShape::new(d[0], d[1], d[2])
    }

    pub fn is_all_ones(&self) -> Result<bool> {
        let v: Vec<f64> = self.k.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
        Ok(v.iter().all(|x| *x == 1.0))
    }
}

/// A detached copy of the decoder feature at the feedback node.
#[derive(Debug, Clone)]
pub struct FeedbackFeature {
    /// `(batch, c, h, w)`.
    pub b: Tensor,
    pub source_node: FeedbackNode,
}

/// Copies `d_node` out of the decoder features, cut from the gradient graph.
pub fn select_feedback(decoder: &[FeatureMap], node: FeedbackNode) -> Result<FeedbackFeature> {
    let feat = decoder
        .get(node.index())
        .ok_or_else(|| Error::Node(node.to_string()))?;
    // `copy` allocates fresh storage, so later writes never alias the decoder tensor.
    let b = feat.data.detach().copy()?;
    Ok(FeedbackFeature {
        b,
        source_node: node,
    })
}

/// Applies one knowledge update. Training mode only.
pub fn update_knowledge(state: &mut KnowledgeState, feedback: &FeedbackFeature, mode: Mode) -> Result<()> {
    if !mode.is_train() {
        return Err(Error::Eval);
    }
    let shape = state.shape();
    let b = feedback.b.detach().to_dtype(state.k.dtype())?;
    let dims = b.dims();
    if dims.len() != 4 || dims[1..] != shape.dims() {
        let batch = dims.first().copied().unwrap_or(0);
        return Err(Error::shape("feedback feature", &shape.batched(batch), dims));
    }
    let batch = dims[0];
    let k = state.k.unsqueeze(0)?.broadcast_as(dims)?.contiguous()?;
    let x = Tensor::cat(&[&k, &b], 1)?;

    let p = &state.update;
    let y = x
        .conv2d(&p.conv_weight, 1, 1, 1, 1)?
        .broadcast_add(&p.conv_bias.reshape((1, (), 1, 1))?)?;
    let y = crate::nn::batch_norm(
        &y,
        &p.bn_gamma.reshape((1, (), 1, 1))?,
        &p.bn_beta.reshape((1, (), 1, 1))?,
        &p.running_mean,
        &p.running_var,
        p.bn_momentum,
        p.bn_eps,
        Mode::Train,
    )?
    .relu()?;
    let next = (y + &k)?.sum(0)?.affine(1.0 / batch as f64, 0.0)?;
    state.k = next.detach();
    state.iteration += 1;
    Ok(())
}

/// Learned `1x1` projection taking resized knowledge to the fusion width.
#[derive(Debug, Clone)]
pub struct KnowledgeProjection {
    pub proj: Conv2d,
}

impl KnowledgeProjection {
    pub fn new(scope: &mut Scope<'_>, plan: &ShapePlan) -> Result<Self> {
        let proj = Conv2d::new(
            scope,
            plan.knowledge.channels,
            plan.knowledge_fusion.channels,
            1,
            1,
            0,
            true,
        )?;
        Ok(KnowledgeProjection { proj })
    }
}

/// Bilinearly resamples `K` onto the fusion grid and projects its channels.
/// Returns `(1, D, h_f, w_f)`.
pub fn resize_knowledge(
    state: &KnowledgeState,
    projection: &KnowledgeProjection,
    plan: &ShapePlan,
) -> Result<Tensor> {
    let f = plan.knowledge_fusion;
    let k = state.k.unsqueeze(0)?;
    let resized = resize_bilinear(&k, f.height, f.width)?;
    projection.proj.forward(&resized)
}
