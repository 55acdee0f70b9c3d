//! A short training run on synthetic scenes with periodic validation,
//! compared against the centre-Gaussian baseline.
//!
//! ```text
//! cargo run --release --example train_tiny -- [steps] [side] [width]
//! ```

use std::time::Instant;

use candle_core::DType;
use fblnet::config::{ModelConfig, RunConfig, SynthConfig, TrainConfig};
use fblnet::data::Split;
use fblnet::harness::{evaluate_center_baseline, resolve_split, train, TrainState, SYNTHETIC};

fn main() -> fblnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let steps = args.first().copied().unwrap_or(100) as u64;
    let side = args.get(1).copied().unwrap_or(32);
    let width = args.get(2).copied().unwrap_or(8);

    let run = RunConfig {
        model: ModelConfig::with_scale(side, width),
        train: TrainConfig {
            steps,
            validate_every: (steps / 4).max(1),
            auc_borji_splits: 20,
            ..TrainConfig::default()
        },
        synth: SynthConfig {
            n_train: 200,
            n_val: 40,
            ..SynthConfig::default()
        },
    };
    let train_ds = resolve_split(SYNTHETIC, &run, Split::Train)?.expect("synthetic train split");
    let val_ds = resolve_split(SYNTHETIC, &run, Split::Val)?.expect("synthetic val split");

    let mut state = TrainState::new(&run, DType::F32)?;
    println!("{} parameters, S={side}, w={width}", state.model.store.num_parameters());
    let t0 = Instant::now();
    let report = train(&mut state, &train_ds, Some(&val_ds), None)?;
    let secs = t0.elapsed().as_secs_f64();
    println!("{steps} steps in {secs:.1}s ({:.1} ms/step)", 1e3 * secs / steps.max(1) as f64);

    let baseline = evaluate_center_baseline(&val_ds, &state.eval_options())?.mean()?;
    let (_, last) = report.validations.last().expect("final validation");
    println!("{:<10} {:>8} {:>8} {:>8} {:>8}", "", "CC", "SIM", "NSS", "Kldiv");
    for (name, m) in [("model", last), ("baseline", &baseline)] {
        println!("{name:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", m.cc, m.sim, m.nss, m.kldiv);
    }
    println!("knowledge iteration {}", state.model.knowledge.iteration);
    Ok(())
}
