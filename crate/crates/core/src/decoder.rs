//! Five-block upsampling decoder with paired CNN/transformer skips and the
//! sigmoid prediction head.
//!
//! | block | input      | skips    | output        |
//! |-------|------------|----------|---------------|
//! | D0    | `F`        | none     | `(4w, S/16)`  |
//! | D1    | `d0`       | C4, T3   | `(2w, S/8)`   |
//! | D2    | `d1`       | C3, T2   | `(w, S/4)`    |
//! | D3    | `d2`       | C2, T1   | `(w/2, S/2)`  |
//! | D4    | `d3`       | none     | `(w/4, S)`    |

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::nn::{resize_bilinear, Conv2d, ConvBlock, Mode, Scope};
use crate::shape::{ShapePlan, Stage};

#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub skip: Option<ConvBlock>,
    pub main: ConvBlock,
    pub upsample: bool,
}

impl DecoderBlock {
    /// `out = up(Block(cat(skip_c, skip_t))) + up(Block(d_prev))`, with the
    /// skip term dropped when the block has no skips.
    pub fn forward(
        &self,
        d_prev: &Tensor,
        skip_c: Option<&Tensor>,
        skip_t: Option<&Tensor>,
        mode: Mode,
    ) -> Result<Tensor> {
        let (_, _, h, w) = d_prev.dims4()?;
        let (oh, ow) = if self.upsample { (2 * h, 2 * w) } else { (h, w) };
        let main = resize_bilinear(&self.main.forward(d_prev, mode)?, oh, ow)?;
        match (&self.skip, skip_c, skip_t) {
            (Some(block), Some(c), Some(t)) => {
                if c.dims() != t.dims() {
                    return Err(Error::shape("skip pair", c.dims(), t.dims()));
                }
                let (cb, _, ch, cw) = c.dims4()?;
                if (cb, ch, cw) != (d_prev.dims()[0], h, w) {
                    let mut want = c.dims().to_vec();
                    want[0] = d_prev.dims()[0];
                    want[2] = h;
                    want[3] = w;
                    return Err(Error::shape("skip vs decoder input", &want, c.dims()));
                }
                let skip = block.forward(&Tensor::cat(&[c, t], 1)?, mode)?;
                Ok((resize_bilinear(&skip, oh, ow)? + main)?)
            }
            (None, None, None) => Ok(main),
            _ => Err(Error::Shape {
                what: "decoder block skips".into(),
                expected: vec![],
                actual: vec![],
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub blocks: Vec<DecoderBlock>,
    pub head: Conv2d,
}

impl Decoder {
    pub fn new(scope: &mut Scope<'_>, plan: &ShapePlan) -> Result<Self> {
        let d = plan.decoder.map(|s| s.channels);
        let fusion = plan.fusion_dim();
        let mut blocks = Vec::with_capacity(5);
        blocks.push(DecoderBlock {
            skip: None,
            main: ConvBlock::new(&mut scope.sub("d0.main"), fusion, d[0], 3)?,
            upsample: false,
        });
        for j in 1..5 {
            let skip = if j <= 3 {
                // D_j pairs C_{5-j} with T_{4-j}.
                let skip_ch = plan.cnn[4 - j].channels + plan.trans[3 - j].channels;
                Some(ConvBlock::new(&mut scope.sub(&format!("d{j}.skip")), skip_ch, d[j], 3)?)
            } else {
                None
            };
            blocks.push(DecoderBlock {
                skip,
                main: ConvBlock::new(&mut scope.sub(&format!("d{j}.main")), d[j - 1], d[j], 3)?,
                upsample: true,
            });
        }
        let head = Conv2d::new(&mut scope.sub("head"), d[4], 1, 1, 1, 0, true)?;
        Ok(Decoder { blocks, head })
    }
}

/// Runs D0..D4. `cnn` and `trans` are the full encoder outputs.
pub fn decode(
    fused: &Tensor,
    cnn: &[Tensor; 5],
    trans: &[Tensor; 4],
    decoder: &Decoder,
    plan: &ShapePlan,
    mode: Mode,
) -> Result<[FeatureMap; 5]> {
    let f = plan.knowledge_fusion;
    let b = fused.dims().first().copied().unwrap_or(0);
    crate::feature::expect_dims("F", fused, &f.batched(b))?;
    let mut out: Vec<FeatureMap> = Vec::with_capacity(5);
    let d0 = decoder.blocks[0].forward(fused, None, None, mode)?;
    out.push(FeatureMap::new(d0, Stage::Decoder(0), plan)?);
    for j in 1..5 {
        let prev = &out[j - 1].data;
        let (c, t) = if j <= 3 {
            (Some(&cnn[4 - j]), Some(&trans[3 - j]))
        } else {
            (None, None)
        };
        let d = decoder.blocks[j].forward(prev, c, t, mode)?;
        out.push(FeatureMap::new(d, Stage::Decoder(j), plan)?);
    }
    Ok(out.try_into().expect("five blocks"))
}

/// `A = sigmoid(Conv1x1(d4))`, shape `(batch, 1, S, S)`.
pub fn head(d4: &Tensor, decoder: &Decoder) -> Result<Tensor> {
    let logits = decoder.head.forward(d4)?;
    sigmoid(&logits)
}

pub(crate) fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::nn::{Init, ParamStore};
    use crate::shape::shape_plan;
    use candle_core::{DType, Device};

    fn setup(s: usize, w: usize) -> (ShapePlan, ParamStore, Decoder) {
        let plan = shape_plan(&ModelConfig::with_scale(s, w)).unwrap();
        let mut store = ParamStore::new(DType::F64, 9);
        let dec = Decoder::new(&mut store.root(), &plan).unwrap();
        (plan, store, dec)
    }

    #[test]
    fn d1_from_published_sizes() {
        let (plan, mut store, dec) = setup(224, 64);
        let d0 = store.sample(&[1, 256, 14, 14], Init::Normal(1.0)).unwrap();
        let c4 = store.sample(&plan.cnn[3].batched(1), Init::Normal(1.0)).unwrap();
        let t3 = store.sample(&plan.trans[2].batched(1), Init::Normal(1.0)).unwrap();
        let d1 = dec.blocks[1].forward(&d0, Some(&c4), Some(&t3), Mode::Train).unwrap();
        assert_eq!(d1.dims(), &[1, 128, 28, 28]);
    }

    #[test]
    fn skipless_last_block() {
        let (_, mut store, dec) = setup(224, 64);
        let d3 = store.sample(&[1, 32, 112, 112], Init::Normal(1.0)).unwrap();
        let d4 = dec.blocks[4].forward(&d3, None, None, Mode::Eval).unwrap();
        assert_eq!(d4.dims(), &[1, 16, 224, 224]);
    }

    #[test]
    fn mismatched_skips_error() {
        let (plan, mut store, dec) = setup(64, 16);
        let d0 = store.sample(&plan.decoder[0].batched(1), Init::Normal(1.0)).unwrap();
        let c4 = store.sample(&plan.cnn[3].batched(1), Init::Normal(1.0)).unwrap();
        let bad = store.sample(&[1, 32, 4, 4], Init::Normal(1.0)).unwrap();
        assert!(matches!(
            dec.blocks[1].forward(&d0, Some(&c4), Some(&bad), Mode::Train),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_inputs_stay_bounded() {
        let (plan, _, dec) = setup(64, 16);
        let zeros = |s: crate::shape::StageShape| Tensor::zeros(&s.batched(2), DType::F64, &Device::Cpu).unwrap();
        let out = dec.blocks[2]
            .forward(&zeros(plan.decoder[1]), Some(&zeros(plan.cnn[2])), Some(&zeros(plan.trans[1])), Mode::Train)
            .unwrap();
        let v: Vec<f64> = out.flatten_all().unwrap().to_vec1().unwrap();
        assert!(v.iter().all(|x| x.is_finite() && x.abs() < 1e-6));
    }

    #[test]
    fn decode_ladder_and_head_range() {
        let (plan, mut store, dec) = setup(64, 16);
        let cnn = plan.cnn.map(|s| store.sample(&s.batched(2), Init::Normal(1.0)).unwrap());
        let trans = plan.trans.map(|s| store.sample(&s.batched(2), Init::Normal(1.0)).unwrap());
        let f = store.sample(&plan.knowledge_fusion.batched(2), Init::Normal(1.0)).unwrap();
        let d = decode(&f, &cnn, &trans, &dec, &plan, Mode::Train).unwrap();
        assert_eq!(d[2].dims(), &[2, 16, 16, 16]);
        for j in 0..4 {
            assert_eq!(d[j + 1].dims()[2], 2 * d[j].dims()[2]);
        }
        let a: Vec<f64> = head(&d[4].data, &dec).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(a.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn zero_head_is_one_half() {
        let (_, mut store, dec) = setup(32, 8);
        let w = dec.head.weight.as_tensor().zeros_like().unwrap();
        dec.head.weight.set(&w).unwrap();
        let d4 = store.sample(&[1, 2, 32, 32], Init::Normal(1.0)).unwrap();
        let a: Vec<f64> = head(&d4, &dec).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(a.iter().all(|x| *x == 0.5));
    }
}
