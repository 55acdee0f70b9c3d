mod common;

use candle_core::{DType, Device, Tensor, Var};
use common::*;
use fblnet::config::ModelConfig;
use fblnet::fusion::{
    attention_weights, cross_attention_fuse, guide_features, guided_fuse, knowledge_attention, FusionParams,
    Provenance, TokenGrid,
};
use fblnet::nn::{ConvBlock, Linear, Mode, ParamStore};
use fblnet::shape::{shape_plan, ShapePlan};

struct Setup {
    plan: ShapePlan,
    _store: ParamStore,
    params: FusionParams,
}

/// Fusion parameters with every bias and affine term moved off its
/// initial value, so the oracle exercises all of them.
fn setup(seed: u64) -> Setup {
    let plan = shape_plan(&ModelConfig::with_scale(64, 16)).unwrap();
    let mut store = ParamStore::new(DType::F64, seed);
    let params = FusionParams::new(&mut store.root(), &plan).unwrap();
    for (i, (name, var)) in store.vars().iter().enumerate() {
        let n = var.elem_count();
        let s = seed * 1000 + i as u64;
        let v = if name.ends_with("gamma") {
            uniform(s, n, 0.5, 1.5)
        } else if name.ends_with("beta") || name.ends_with("bias") {
            uniform(s, n, -0.5, 0.5)
        } else {
            continue;
        };
        var.set(&Tensor::from_vec(v, var.dims(), &Device::Cpu).unwrap()).unwrap();
    }
    Setup {
        plan,
        _store: store,
        params,
    }
}

fn knowledge(seed: u64, plan: &ShapePlan) -> Nd {
    let f = plan.knowledge_fusion;
    let mut k = random_nd(seed, &[1, f.channels, f.height, f.width]);
    k.v.iter_mut().for_each(|v| *v *= 3.0);
    k
}

/// `K_a[t][c]`: softmax over tokens of each channel.
fn scripted_attention(k: &Nd) -> Vec<Vec<f64>> {
    let (c, h, w) = (k.dims[1], k.dims[2], k.dims[3]);
    let per_channel: Vec<Vec<f64>> = (0..c)
        .map(|ch| softmax(&(0..h * w).map(|t| k.at4(0, ch, t / w, t % w)).collect::<Vec<_>>()))
        .collect();
    transpose(&per_channel)
}

fn var_nd(v: &Var) -> Nd {
    Nd::from_tensor(v.as_tensor())
}

fn scripted_block(x: &Nd, b: &ConvBlock) -> Nd {
    let bias = b.conv.bias.as_ref().map(|v| values(v.as_tensor()));
    let y = conv2d(x, &var_nd(&b.conv.weight), bias.as_deref(), 1, b.conv.padding);
    relu(&batch_norm(&y, &values(b.bn.gamma.as_tensor()), &values(b.bn.beta.as_tensor()), b.bn.eps))
}

/// Squeeze, upsample, flatten, layer-normalise, gate by `N_t * K_a`.
fn scripted_guide(x: &Nd, squeeze: &Var, ln: &fblnet::nn::LayerNorm, ka: &[Vec<f64>], grid: (usize, usize)) -> Vec<Vec<Vec<f64>>> {
    let sq = conv2d(x, &var_nd(squeeze), None, 1, 0);
    let up = bilinear(&sq, grid.0, grid.1);
    let n_t = (grid.0 * grid.1) as f64;
    let (g, b) = (values(ln.gamma.as_tensor()), values(ln.beta.as_tensor()));
    to_tokens(&up)
        .into_iter()
        .map(|mat| {
            mat.iter()
                .enumerate()
                .map(|(t, row)| {
                    layer_norm(row, &g, &b, ln.eps)
                        .iter()
                        .zip(&ka[t])
                        .map(|(v, a)| v * n_t * a)
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn weight_rows(l: &Linear) -> Vec<Vec<f64>> {
    rows(l.weight.as_tensor())
}

/// `softmax_rows((C Wq^T)(T Wk^T)^T / sqrt(D)) C`.
fn scripted_cross(c: &[Vec<f64>], t: &[Vec<f64>], wq: &[Vec<f64>], wk: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = c[0].len() as f64;
    let q = matmul(c, &transpose(wq));
    let k = matmul(t, &transpose(wk));
    let logits = matmul(&q, &transpose(&k));
    let w: Vec<Vec<f64>> = logits
        .iter()
        .map(|r| softmax(&r.iter().map(|v| v / d.sqrt()).collect::<Vec<_>>()))
        .collect();
    let f = matmul(&w, c);
    (w, f)
}

fn flat(m: &[Vec<Vec<f64>>]) -> Vec<f64> {
    m.iter().flatten().flatten().copied().collect()
}

fn inputs(plan: &ShapePlan, batch: usize) -> (Nd, Nd) {
    let c5 = plan.cnn[4];
    let dims = [batch, c5.channels, c5.height, c5.width];
    (random_nd(21, &dims), random_nd(22, &dims))
}

#[test]
fn knowledge_softmax_matches_direct_exp_sum() {
    let s = setup(5);
    let k = knowledge(5, &s.plan);
    let ka = knowledge_attention(&k.tensor()).unwrap();
    let expected = scripted_attention(&k);
    let err = max_abs_diff(&values(&ka), &expected.concat());
    assert!(err < 1e-7, "max error {err}");
    for c in 0..k.dims[1] {
        let col: f64 = expected.iter().map(|r| r[c]).sum();
        assert!((col - 1.0).abs() < 1e-12);
    }
}

#[test]
fn guidance_matches_scripted_composition() {
    let s = setup(8);
    let grid = (s.plan.knowledge_fusion.height, s.plan.knowledge_fusion.width);
    let k = knowledge(6, &s.plan);
    let ka_rows = scripted_attention(&k);
    let ka = knowledge_attention(&k.tensor()).unwrap();
    let (c5, t4) = inputs(&s.plan, 2);
    let (cg, tg) = guide_features(&c5.tensor(), &t4.tensor(), &ka, &s.params).unwrap();
    let want_c = scripted_guide(&c5, &s.params.squeeze_c.weight, &s.params.ln_c, &ka_rows, grid);
    let want_t = scripted_guide(&t4, &s.params.squeeze_t.weight, &s.params.ln_t, &ka_rows, grid);
    assert_eq!(cg.tokens.dims(), &[2, s.params.tokens(), s.params.dim()]);
    assert!(max_abs_diff(&values(&cg.tokens), &flat(&want_c)) < 1e-6);
    assert!(max_abs_diff(&values(&tg.tokens), &flat(&want_t)) < 1e-6);
}

#[test]
fn four_token_two_dim_attention_by_hand() {
    let s = setup(1);
    let c = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.5]];
    let t = vec![vec![0.5, -1.0], vec![2.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]];
    let wq = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
    let wk = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];

    let linear = |m: &[Vec<f64>]| Linear {
        weight: Var::from_tensor(&Tensor::from_vec(m.concat(), (2, 2), &Device::Cpu).unwrap()).unwrap(),
        bias: None,
    };
    let mut params = s.params.clone();
    params.w_q = linear(&wq);
    params.w_k = linear(&wk);
    let grid = |m: &[Vec<f64>], p: Provenance| TokenGrid {
        tokens: Tensor::from_vec(m.concat(), (1, 4, 2), &Device::Cpu).unwrap(),
        provenance: p,
    };
    let (cg, tg) = (grid(&c, Provenance::Cnn), grid(&t, Provenance::Trans));

    // q_i = Wq c_i, k_j = Wk t_j, logit_ij = q_i . k_j / sqrt(2).
    let q: Vec<[f64; 2]> = c.iter().map(|r| [r[0] + 2.0 * r[1], r[1]]).collect();
    let k: Vec<[f64; 2]> = t.iter().map(|r| [r[0], -r[0] + r[1]]).collect();
    let mut w = vec![[0.0; 4]; 4];
    for i in 0..4 {
        let logits: Vec<f64> = (0..4)
            .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for j in 0..4 {
            w[i][j] = logits[j].exp() / z;
        }
    }
    let mut f = vec![[0.0; 2]; 4];
    for i in 0..4 {
        for j in 0..4 {
            f[i][0] += w[i][j] * c[j][0];
            f[i][1] += w[i][j] * c[j][1];
        }
    }

    let got_w = values(&attention_weights(&cg, &tg, &params).unwrap());
    let got_f = cross_attention_fuse(&cg, &tg, &params).unwrap();
    assert_eq!(got_f.provenance, Provenance::Fused);
    assert!(max_abs_diff(&got_w, &w.concat()) < 1e-6);
    assert!(max_abs_diff(&values(&got_f.tokens), &f.concat()) < 1e-6);
}

#[test]
fn full_guided_pipeline_matches_one_scripted_oracle() {
    let s = setup(12);
    let p = &s.params;
    let grid = (s.plan.knowledge_fusion.height, s.plan.knowledge_fusion.width);
    let k = knowledge(13, &s.plan);
    let (c5, t4) = inputs(&s.plan, 2);

    let ka = scripted_attention(&k);
    let cg = scripted_guide(&c5, &p.squeeze_c.weight, &p.ln_c, &ka, grid);
    let tg = scripted_guide(&t4, &p.squeeze_t.weight, &p.ln_t, &ka, grid);
    let fused: Vec<Vec<Vec<f64>>> = cg
        .iter()
        .zip(&tg)
        .map(|(c, t)| scripted_cross(c, t, &weight_rows(&p.w_q), &weight_rows(&p.w_k)).1)
        .collect();
    let f = from_tokens(&fused, grid.0, grid.1);
    let side_c = scripted_block(&bilinear(&c5, grid.0, grid.1), &p.side_c);
    let side_t = scripted_block(&bilinear(&t4, grid.0, grid.1), &p.side_t);
    let expected = scripted_block(&add(&add(&f, &side_c), &side_t), &p.main);

    let ka_t = knowledge_attention(&k.tensor()).unwrap();
    let trace = guided_fuse(&c5.tensor(), &t4.tensor(), ka_t, p, Mode::Train).unwrap();
    assert_eq!(trace.output.dims(), expected.dims.as_slice());
    assert!(max_abs_diff(&values(&trace.fused.tokens), &flat(&fused)) < 1e-6);
    let err = max_abs_diff(&values(&trace.output), &expected.v);
    assert!(err < 1e-5, "max error {err}");
}

#[test]
fn cat_baseline_projects_to_fusion_width() {
    let s = setup(3);
    let (c5, t4) = inputs(&s.plan, 2);
    let out = fblnet::fusion::fuse_baseline(&c5.tensor(), &t4.tensor(), fblnet::FusionMode::Cat, &s.params, Mode::Train)
        .unwrap();
    let f = s.plan.knowledge_fusion;
    assert_eq!(out.dims(), &[2, 4 * 16, f.height, f.width]);
    assert_eq!(s.params.cat_proj.out_channels(), 64);
}
