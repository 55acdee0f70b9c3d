//! Prints every intermediate tensor shape for a few scales and checks a real
//! forward pass against the plan.
//!
//! ```text
//! cargo run --release --example shape_plan
//! ```

use candle_core::{DType, Device, Tensor};
use fblnet::config::ModelConfig;
use fblnet::shape::{shape_plan, StageShape};
use fblnet::FblNet;

fn fmt(s: StageShape) -> String {
    format!("({}, {}, {})", s.channels, s.height, s.width)
}

fn main() -> fblnet::Result<()> {
    for (side, width) in [(224, 64), (64, 16), (32, 8)] {
        let plan = shape_plan(&ModelConfig::with_scale(side, width))?;
        println!("S={side} w={width}");
        for (i, s) in plan.cnn.iter().enumerate() {
            println!("  C{}  {}", i + 1, fmt(*s));
        }
        for (i, s) in plan.trans.iter().enumerate() {
            println!("  T{}  {}", i + 1, fmt(*s));
        }
        println!("  K   {}", fmt(plan.knowledge));
        println!("  K_f {}  ({} tokens)", fmt(plan.knowledge_fusion), plan.fusion_tokens());
        for (j, s) in plan.decoder.iter().enumerate() {
            println!("  d{j}  {}", fmt(*s));
        }
        println!("  A   {}", fmt(plan.attention));
    }

    let cfg = ModelConfig::with_scale(64, 16);
    let model = FblNet::new(&cfg, DType::F32)?;
    let x = Tensor::zeros((2, 3, 64, 64), DType::F32, &Device::Cpu)?;
    let out = model.forward(&x)?;
    println!("forward at S=64: A is {:?}, fused is {:?}", out.attention.dims(), out.fused.dims());
    Ok(())
}
