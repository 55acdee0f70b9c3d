//! The assembled network: encoder, feedback loop, fusion, decoder, head.

use candle_core::{DType, Tensor};

use crate::config::{EncoderMode, FusionMode, ModelConfig};
use crate::decoder::{decode, head, Decoder};
use crate::encoder::{check_image_dims, cnn_forward, transformer_forward, Encoder};
use crate::error::Result;
use crate::fbl::{
    init_knowledge, resize_knowledge, select_feedback, update_knowledge, KnowledgeProjection,
    KnowledgeState, UpdateParams,
};
use crate::feature::FeatureMap;
use crate::fusion::{fuse_baseline, guided_fuse, knowledge_attention, FusionParams};
use crate::nn::{Mode, ParamStore};
use crate::shape::{shape_plan, ShapePlan, Stage};

/// All intermediate tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub cnn: [FeatureMap; 5],
    pub trans: [FeatureMap; 4],
    /// `(1, D, h_f, w_f)`; present only when the knowledge was consulted.
    pub knowledge_fusion: Option<Tensor>,
    /// Fusion module output on the fusion grid.
    pub fused: FeatureMap,
    pub decoder: [FeatureMap; 5],
    /// `(batch, 1, S, S)` in `(0, 1)`.
    pub attention: FeatureMap,
}

#[derive(Debug)]
pub struct FblNet {
    pub cfg: ModelConfig,
    pub plan: ShapePlan,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub knowledge_proj: KnowledgeProjection,
    pub fusion: FusionParams,
    pub decoder: Decoder,
    pub knowledge: KnowledgeState,
    mode: Mode,
}

impl FblNet {
    /// Builds and initialises every parameter from `cfg.seed`. The parameter
    /// set does not depend on the fusion or encoder mode, so two configs that
    /// differ only in those modes start from identical weights.
    pub fn new(cfg: &ModelConfig, dtype: DType) -> Result<Self> {
        let plan = shape_plan(cfg)?;
        let mut store = ParamStore::new(dtype, cfg.seed);
        let mut root = store.root();
        let encoder = Encoder::new(&mut root.sub("encoder"), cfg, &plan)?;
        let knowledge_proj = KnowledgeProjection::new(&mut root.sub("knowledge_proj"), &plan)?;
        let fusion = FusionParams::new(&mut root.sub("fusion"), &plan)?;
        let decoder = Decoder::new(&mut root.sub("decoder"), &plan)?;
        let update = UpdateParams::new(&mut root, plan.knowledge.channels)?;
        let knowledge = init_knowledge(&plan, update, dtype)?;
        Ok(FblNet {
            cfg: cfg.clone(),
            plan,
            store,
            encoder,
            knowledge_proj,
            fusion,
            decoder,
            knowledge,
            mode: Mode::Train,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn train(&mut self) {
        self.mode = Mode::Train;
    }

    pub fn eval(&mut self) {
        self.mode = Mode::Eval;
    }

    /// Full forward pass in the current mode. Never touches the knowledge.
    pub fn forward(&self, images: &Tensor) -> Result<ForwardOutput> {
        let plan = &self.plan;
        let images = images.to_dtype(self.dtype())?;
        let batch = images.dims().first().copied().unwrap_or(0);
        let zeros = |stage: Stage| -> Result<FeatureMap> {
            let t = Tensor::zeros(&plan.get(stage).batched(batch), self.dtype(), images.device())?;
            FeatureMap::new(t, stage, plan)
        };

        let cnn: [FeatureMap; 5] = if self.cfg.encoder_mode.uses_cnn() {
            cnn_forward(&images, &self.encoder.cnn, plan, self.mode)?
        } else {
            check_image_dims(&images, plan)?;
            collect_array((1..=5).map(|i| zeros(Stage::Cnn(i))))?
        };
        let trans: [FeatureMap; 4] = if self.cfg.encoder_mode.uses_trans() {
            transformer_forward(&images, &self.encoder.trans, plan)?
        } else {
            check_image_dims(&images, plan)?;
            collect_array((1..=4).map(|i| zeros(Stage::Trans(i))))?
        };

        let (c5, t4) = (&cnn[4].data, &trans[3].data);
        let (knowledge_fusion, fused) = match self.cfg.fusion_mode {
            FusionMode::Fbl => {
                let kf = resize_knowledge(&self.knowledge, &self.knowledge_proj, plan)?;
                let ka = knowledge_attention(&kf)?;
                let out = guided_fuse(c5, t4, ka, &self.fusion, self.mode)?.output;
                (Some(kf), out)
            }
            other => (None, fuse_baseline(c5, t4, other, &self.fusion, self.mode)?),
        };
        let fused = FeatureMap::new(fused, Stage::Fusion, plan)?;

        let cnn_t = cnn.clone().map(|f| f.data);
        let trans_t = trans.clone().map(|f| f.data);
        let decoder = decode(&fused.data, &cnn_t, &trans_t, &self.decoder, plan, self.mode)?;
        let attention = FeatureMap::new(head(&decoder[4].data, &self.decoder)?, Stage::Attention, plan)?;
        Ok(ForwardOutput {
            cnn,
            trans,
            knowledge_fusion,
            fused,
            decoder,
            attention,
        })
    }

    /// Feeds the detached decoder feature at the configured node back into
    /// the knowledge. A no-op for fusion modes that do not use knowledge.
    pub fn feed_back(&mut self, out: &ForwardOutput) -> Result<()> {
        if !self.cfg.fusion_mode.uses_knowledge() {
            return Ok(());
        }
        let fb = select_feedback(&out.decoder, self.cfg.feedback_node)?;
        update_knowledge(&mut self.knowledge, &fb, self.mode)
    }

    /// Prediction in the current mode, `(batch, 1, S, S)`.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.forward(images)?.attention.data)
    }

    pub fn encoder_mode(&self) -> EncoderMode {
        self.cfg.encoder_mode
    }
}

fn collect_array<const N: usize>(it: impl Iterator<Item = Result<FeatureMap>>) -> Result<[FeatureMap; N]> {
    let v = it.collect::<Result<Vec<_>>>()?;
    Ok(v.try_into().expect("length matches"))
}
