//! Training, evaluation, prediction, checkpoints and ablations.

pub mod ablation;
pub mod checkpoint;
pub mod eval;
pub mod optim;
pub mod predict;
pub mod train;

pub use ablation::{parse_grid_spec, run_ablation, AblationTable, Grid};
pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Manifest};
pub use eval::{center_gaussian, evaluate_center_baseline, evaluate_checkpoint, evaluate_model, EvalOptions};
pub use optim::Adam;
pub use predict::{predict_checkpoint, predict_map, predict_to_file};
pub use train::{train, train_step, StepOutput, TrainReport, TrainState};

use std::path::Path;

use crate::config::RunConfig;
use crate::data::{load_dataset, Dataset, DatasetSpec, Split};
use crate::error::Result;

/// The `--data` value that selects the built-in synthetic generator.
pub const SYNTHETIC: &str = "synthetic";

fn directory(root: &Path, run: &RunConfig) -> DatasetSpec {
    DatasetSpec::Directory {
        root: root.to_path_buf(),
        side: run.model.input_side,
        fixation_threshold: run.model.fixation_threshold,
    }
}

/// Resolves a `--data` argument for one split.
///
/// `synthetic` generates the split from the config. A directory holding
/// `<split>/frames` uses that subdirectory; otherwise the directory itself
/// is the dataset. Returns `None` for a missing `val` split.
pub fn resolve_split(data: &str, run: &RunConfig, split: Split) -> Result<Option<Dataset>> {
    if data == SYNTHETIC {
        let spec = DatasetSpec::synthetic(&run.synth, split, run.model.input_side, run.model.fixation_threshold);
        return load_dataset(&spec).map(Some);
    }
    let root = Path::new(data);
    let name = match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    };
    let sub = root.join(name);
    if sub.join("frames").is_dir() {
        return load_dataset(&directory(&sub, run)).map(Some);
    }
    match split {
        Split::Train => load_dataset(&directory(root, run)).map(Some),
        _ => Ok(None),
    }
}

/// The dataset `eval` scores: the synthetic validation split, or a
/// directory's `test/`, then `val/`, then the directory itself.
pub fn resolve_eval(data: &str, run: &RunConfig) -> Result<Dataset> {
    if data == SYNTHETIC {
        return resolve_split(data, run, Split::Val).map(|d| d.expect("synthetic split"));
    }
    for split in [Split::Test, Split::Val] {
        if let Some(ds) = resolve_split(data, run, split)? {
            return Ok(ds);
        }
    }
    load_dataset(&directory(Path::new(data), run))
}
