//! Runs the fusion, feedback-node and encoder ablations at a tiny budget and
//! prints the tables.
//!
//! ```text
//! cargo run --release --example ablation -- [steps]
//! ```

use candle_core::DType;
use fblnet::config::{ModelConfig, RunConfig, SynthConfig, TrainConfig};
use fblnet::data::Split;
use fblnet::harness::{resolve_split, run_ablation, Grid, SYNTHETIC};

fn main() -> fblnet::Result<()> {
    let steps = std::env::args().nth(1).map(|s| s.parse().expect("step count")).unwrap_or(10);
    let run = RunConfig {
        model: ModelConfig::with_scale(32, 8),
        train: TrainConfig {
            steps,
            validate_every: 0,
            auc_borji_splits: 10,
            ..TrainConfig::default()
        },
        synth: SynthConfig {
            n_train: 64,
            n_val: 16,
            ..SynthConfig::default()
        },
    };
    let train_ds = resolve_split(SYNTHETIC, &run, Split::Train)?.expect("train split");
    let evals = vec![
        ("val".to_string(), resolve_split(SYNTHETIC, &run, Split::Val)?.expect("val split")),
        ("test".to_string(), resolve_split(SYNTHETIC, &run, Split::Test)?.expect("test split")),
    ];
    for grid in Grid::ALL {
        let table = run_ablation(&run, grid, &train_ds, &evals, DType::F32)?;
        println!("{}", table.to_tsv());
    }
    Ok(())
}
