//! The four fusion modes on the same encoder features.
//!
//! ```text
//! cargo run --release --example fusion
//! ```

use candle_core::{DType, Tensor};
use fblnet::config::{FusionMode, ModelConfig};
use fblnet::fusion::{fuse_baseline, guided_fuse, knowledge_attention};
use fblnet::fbl::resize_knowledge;
use fblnet::nn::{Init, Mode, ParamStore};
use fblnet::FblNet;

fn stats(t: &Tensor) -> fblnet::Result<(f64, f64)> {
    let v: Vec<f64> = t.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    Ok((mean, var.sqrt()))
}

fn main() -> fblnet::Result<()> {
    let cfg = ModelConfig::with_scale(64, 16);
    let model = FblNet::new(&cfg, DType::F64)?;
    let mut noise = ParamStore::new(DType::F64, 42);
    let c5 = noise.sample(&model.plan.cnn[4].batched(2), Init::Normal(1.0))?;
    let t4 = noise.sample(&model.plan.trans[3].batched(2), Init::Normal(1.0))?;

    for mode in [FusionMode::Cat, FusionMode::Add, FusionMode::NoFbl] {
        let out = fuse_baseline(&c5, &t4, mode, &model.fusion, Mode::Eval)?;
        let (m, s) = stats(&out)?;
        println!("{:<7} -> {:?}  mean {m:.4} std {s:.4}", mode.to_string(), out.dims());
    }

    let kf = resize_knowledge(&model.knowledge, &model.knowledge_proj, &model.plan)?;
    let ka = knowledge_attention(&kf)?;
    let trace = guided_fuse(&c5, &t4, ka, &model.fusion, Mode::Eval)?;
    let (m, s) = stats(&trace.output)?;
    println!("{:<7} -> {:?}  mean {m:.4} std {s:.4}", FusionMode::Fbl, trace.output.dims());
    let (ka_mean, ka_std) = stats(&trace.k_attention)?;
    println!(
        "K_a over {} tokens: mean {ka_mean:.5} (1/N = {:.5}), std {ka_std:.1e}",
        model.plan.fusion_tokens(),
        1.0 / model.plan.fusion_tokens() as f64
    );
    Ok(())
}
