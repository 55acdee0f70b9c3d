//! Saves a trained state, reloads it, and checks that nothing changed.
//!
//! ```text
//! cargo run --release --example checkpoint
//! ```

use candle_core::DType;
use fblnet::config::{ModelConfig, RunConfig, SynthConfig, TrainConfig};
use fblnet::data::Split;
use fblnet::harness::{
    evaluate_model, load_checkpoint, read_manifest, resolve_split, save_checkpoint, train, TrainState, SYNTHETIC,
};

fn main() -> fblnet::Result<()> {
    let run = RunConfig {
        model: ModelConfig::with_scale(32, 8),
        train: TrainConfig {
            steps: 5,
            batch_size: 4,
            validate_every: 0,
            auc_borji_splits: 10,
            ..TrainConfig::default()
        },
        synth: SynthConfig {
            n_train: 16,
            n_val: 4,
            ..SynthConfig::default()
        },
    };
    let train_ds = resolve_split(SYNTHETIC, &run, Split::Train)?.expect("train split");
    let val = resolve_split(SYNTHETIC, &run, Split::Val)?.expect("val split");
    let mut state = TrainState::new(&run, DType::F32)?;
    train(&mut state, &train_ds, None, None)?;

    let dir = tempfile_dir();
    let opts = state.eval_options();
    let before = evaluate_model(&mut state.model, &val, &opts)?.mean()?;
    save_checkpoint(&state, &dir.join("a"), Some(&before))?;
    let mut back = load_checkpoint(&dir.join("a"))?;
    save_checkpoint(&back, &dir.join("b"), Some(&before))?;
    let after = evaluate_model(&mut back.model, &val, &opts)?.mean()?;

    let m = read_manifest(&dir.join("a"))?;
    println!("step {} iteration {} blob {} bytes", m.step, m.knowledge_iteration, m.blob.bytes);
    for f in ["manifest.json", "index.tsv", "tensors.bin"] {
        let same = std::fs::read(dir.join("a").join(f)).ok() == std::fs::read(dir.join("b").join(f)).ok();
        println!("{f:<14} identical after reload: {same}");
    }
    println!("CC before {:.6} after {:.6}", before.cc, after.cc);
    std::fs::remove_dir_all(&dir).map_err(|e| fblnet::Error::io(&dir, e))?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("fblnet-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
