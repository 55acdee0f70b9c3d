use std::path::Path;

use candle_core::{DType, Tensor};

use super::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::data::{make_batch, Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{
    auc_borji, auc_judd, cc, kldiv, normalize_dist, nss, AttentionMap, FrameMetrics, MetricsReport,
};
use crate::model::FblNet;

/// Evaluation settings shared by model and baseline scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub auc_borji_splits: usize,
    pub seed: u64,
    pub epsilon_kl: f64,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            auc_borji_splits: 100,
            seed: 0,
            epsilon_kl: 1e-7,
            batch_size: 8,
        }
    }
}

impl EvalOptions {
    pub fn from_run(run: &RunConfig) -> Self {
        EvalOptions {
            auc_borji_splits: run.train.auc_borji_splits,
            seed: run.model.seed,
            epsilon_kl: run.model.epsilon_kl,
            batch_size: run.train.batch_size,
        }
    }
}

/// Splits a `(B, 1, H, W)` tensor into per-sample maps.
pub fn tensor_to_maps(t: &Tensor) -> Result<Vec<AttentionMap>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(Error::shape("prediction", &[b, 1, h, w], t.dims()));
    }
    let v: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    v.chunks(h * w).map(|chunk| AttentionMap::new(h, w, chunk.to_vec())).collect()
}

/// Scores a constant map as chance for the z-scored metrics.
fn or_chance(r: Result<f64>, id: &str, what: &str) -> Result<f64> {
    match r {
        Err(Error::ConstMap) => {
            log::warn!("{id}: constant prediction, {what} scored 0");
            Ok(0.0)
        }
        other => other,
    }
}

/// The six metrics of one prediction against one sample.
pub fn frame_metrics(pred: &AttentionMap, sample: &Sample, frame: usize, opts: &EvalOptions) -> Result<FrameMetrics> {
    let p = normalize_dist(pred)?;
    let q = normalize_dist(&sample.gt_map)?;
    let fix = &sample.fixations;
    let seed = opts.seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    Ok(FrameMetrics {
        id: sample.id.clone(),
        auc_j: auc_judd(pred, fix)?,
        auc_b: auc_borji(pred, fix, opts.auc_borji_splits, seed)?,
        sim: crate::metrics::sim(&p, &q)?,
        cc: or_chance(cc(pred, &sample.gt_map), &sample.id, "CC")?,
        kldiv: kldiv(&p, &q, opts.epsilon_kl)?,
        nss: or_chance(nss(pred, fix), &sample.id, "NSS")?,
    })
}

/// Scores a fixed map-producing rule over a dataset.
pub fn evaluate_maps(ds: &Dataset, opts: &EvalOptions, map: impl Fn(&Sample) -> AttentionMap) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let frames = ds
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| frame_metrics(&map(s), s, i, opts))
        .collect::<Result<_>>()?;
    Ok(MetricsReport { frames })
}

/// Evaluates in eval mode, restoring the previous mode afterwards. The
/// knowledge buffer is read but never written.
pub fn evaluate_model(model: &mut FblNet, ds: &Dataset, opts: &EvalOptions) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let prev = model.mode();
    model.eval();
    let result = (|| {
        let mut frames = Vec::with_capacity(ds.len());
        let order: Vec<usize> = (0..ds.len()).collect();
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let batch = make_batch(ds, chunk, model.dtype())?;
            let maps = tensor_to_maps(&model.predict(&batch.images)?)?;
            for (&i, p) in chunk.iter().zip(&maps) {
                frames.push(frame_metrics(p, &ds.samples[i], i, opts)?);
            }
        }
        Ok(MetricsReport { frames })
    })();
    if prev.is_train() {
        model.train();
    }
    result
}

pub fn evaluate_checkpoint(dir: &Path, ds: &Dataset, opts: &EvalOptions) -> Result<MetricsReport> {
    let mut state = load_checkpoint(dir)?;
    evaluate_model(&mut state.model, ds, opts)
}

/// Isotropic Gaussian centred in the frame, `sigma = side / 6`, peak 1.
pub fn center_gaussian(side: usize) -> AttentionMap {
    let c = side as f64 / 2.0;
    let sigma = side as f64 / 6.0;
    AttentionMap::from_fn(side, side, |r, col| {
        let d2 = (r as f64 + 0.5 - c).powi(2) + (col as f64 + 0.5 - c).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

pub fn evaluate_center_baseline(ds: &Dataset, opts: &EvalOptions) -> Result<MetricsReport> {
    let g = center_gaussian(ds.side);
    evaluate_maps(ds, opts, |_| g.clone())
}
