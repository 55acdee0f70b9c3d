//! Writes a heatmap PNG for one frame, at the model grid and at the source
//! resolution.
//!
//! ```text
//! cargo run --release --example predict -- [image.png] [out_dir]
//! ```

use std::path::PathBuf;

use candle_core::DType;
use fblnet::config::{ModelConfig, RunConfig, SynthConfig};
use fblnet::data::Split;
use fblnet::harness::{predict_map, predict_to_file, resolve_split, TrainState, SYNTHETIC};

fn main() -> fblnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let image = args.next().map(PathBuf::from);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fblnet-predict"));

    let run = RunConfig {
        model: ModelConfig::with_scale(64, 16),
        synth: SynthConfig {
            n_train: 1,
            ..SynthConfig::default()
        },
        ..RunConfig::default()
    };
    let image = match image {
        Some(p) => p,
        None => {
            let ds = resolve_split(SYNTHETIC, &run, Split::Train)?.expect("train split");
            ds.save(&out.join("input"))?;
            out.join("input").join("frames").join(format!("{}.png", ds.samples[0].id))
        }
    };

    let mut state = TrainState::new(&run, DType::F32)?;
    let (map, (w, h)) = predict_map(&mut state.model, &image)?;
    println!("source {w}x{h}, map {}x{}, range [{:.3}, {:.3}]", map.width, map.height, min(&map.values), map.max());
    predict_to_file(&mut state.model, &image, &out.join("heatmap.png"), false)?;
    predict_to_file(&mut state.model, &image, &out.join("heatmap_native.png"), true)?;
    println!("wrote heatmap.png and heatmap_native.png under {}", out.display());
    Ok(())
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}
