//! Generates synthetic driving-like scenes and writes them in the dataset
//! directory layout, ready for `fblnet train --data DIR`.
//!
//! ```text
//! cargo run --release --example synthetic_data -- [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use fblnet::config::SynthConfig;
use fblnet::data::{load_dataset, synth_generate, DatasetSpec, Split};

fn main() -> fblnet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fblnet-synthetic"));
    let synth = SynthConfig {
        n_train: 40,
        n_val: 10,
        ..SynthConfig::default()
    };
    for (name, split) in [("train", Split::Train), ("val", Split::Val)] {
        let t0 = Instant::now();
        let ds = synth_generate(&DatasetSpec::synthetic(&synth, split, 64, 0.75))?;
        let secs = t0.elapsed().as_secs_f64();
        ds.save(&out.join(name))?;
        let mean_fix = ds.samples.iter().map(|s| s.fixations.len()).sum::<usize>() as f64 / ds.len() as f64;
        println!(
            "{name}: {} frames in {secs:.2}s, {mean_fix:.1} fixations per frame, digest {}",
            ds.len(),
            &ds.digest()[..16]
        );
    }
    let back = load_dataset(&DatasetSpec::Directory {
        root: out.join("train"),
        side: 64,
        fixation_threshold: 0.75,
    })?;
    println!("reloaded {} training frames from {}", back.len(), out.display());
    Ok(())
}
