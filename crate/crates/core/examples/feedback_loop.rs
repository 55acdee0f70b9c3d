//! The knowledge buffer across training steps: neutral while all ones,
//! moving once per step in `fbl` mode, frozen during evaluation.
//!
//! ```text
//! cargo run --release --example feedback_loop
//! ```

use candle_core::{DType, Tensor};
use fblnet::config::{FusionMode, ModelConfig, RunConfig, SynthConfig, TrainConfig};
use fblnet::data::{make_batch, synth_generate, DatasetSpec, Split};
use fblnet::harness::{evaluate_model, train_step, TrainState};
use fblnet::FblNet;

fn max_abs_diff(a: &Tensor, b: &Tensor) -> fblnet::Result<f64> {
    Ok((a - b)?.abs()?.flatten_all()?.max(0)?.to_dtype(DType::F64)?.to_scalar()?)
}

fn main() -> fblnet::Result<()> {
    let mut cfg = ModelConfig::with_scale(32, 8);
    let synth = SynthConfig {
        n_train: 8,
        n_val: 4,
        ..SynthConfig::default()
    };
    let ds = synth_generate(&DatasetSpec::synthetic(&synth, Split::Train, 32, 0.75))?;
    let batch = make_batch(&ds, &[0, 1, 2, 3], DType::F64)?;

    let fbl = FblNet::new(&cfg, DType::F64)?;
    cfg.fusion_mode = FusionMode::NoFbl;
    let plain = FblNet::new(&cfg, DType::F64)?;
    let gap = max_abs_diff(&fbl.predict(&batch.images)?, &plain.predict(&batch.images)?)?;
    println!("all-ones knowledge: fbl vs no_fbl differ by {gap:.2e}");

    cfg.fusion_mode = FusionMode::Fbl;
    let run = RunConfig {
        model: cfg,
        train: TrainConfig {
            auc_borji_splits: 10,
            ..TrainConfig::default()
        },
        synth: synth.clone(),
    };
    let mut state = TrainState::new(&run, DType::F32)?;
    let batch = make_batch(&ds, &[0, 1, 2, 3], DType::F32)?;
    for _ in 0..3 {
        let before = state.model.knowledge.k.clone();
        let out = train_step(&mut state, &batch)?;
        println!(
            "step {}: loss {:.4}, iteration {}, K moved by {:.4}",
            state.step,
            out.loss,
            state.model.knowledge.iteration,
            max_abs_diff(&state.model.knowledge.k, &before)?
        );
    }

    let val = synth_generate(&DatasetSpec::synthetic(&synth, Split::Val, 32, 0.75))?;
    let before = state.model.knowledge.k.clone();
    let opts = state.eval_options();
    evaluate_model(&mut state.model, &val, &opts)?;
    evaluate_model(&mut state.model, &val, &opts)?;
    println!("after two evaluations K moved by {:.1e}", max_abs_diff(&state.model.knowledge.k, &before)?);
    Ok(())
}
