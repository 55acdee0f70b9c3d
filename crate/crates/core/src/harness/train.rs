use std::path::Path;

use candle_core::DType;

use super::checkpoint::save_checkpoint;
use super::eval::{evaluate_model, EvalOptions};
use super::optim::Adam;
use crate::config::{validate_config, RunConfig};
use crate::data::{batch_iter, make_batch, Batch, Dataset};
use crate::error::{Error, Result};
use crate::loss::batch_loss;
use crate::metrics::{FrameMetrics, LossWeights};
use crate::model::{FblNet, ForwardOutput};

/// Model, optimizer and progress of one run.
#[derive(Debug)]
pub struct TrainState {
    pub model: FblNet,
    pub optim: Adam,
    pub step: u64,
    pub run: RunConfig,
}

impl TrainState {
    pub fn new(run: &RunConfig, dtype: DType) -> Result<Self> {
        let model_cfg = validate_config(run.model.clone())?;
        Ok(TrainState {
            model: FblNet::new(&model_cfg, dtype)?,
            optim: Adam::new(&run.train),
            step: 0,
            run: run.clone(),
        })
    }

    pub fn loss_weights(&self) -> LossWeights {
        let m = &self.run.model;
        LossWeights {
            mu: m.mu,
            eta: m.eta,
            xi: m.xi,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions::from_run(&self.run)
    }
}

/// Loss value and its unweighted terms for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub kldiv: f64,
    pub nss: f64,
    pub cc: f64,
}

fn diagnostics(state: &TrainState, out: &ForwardOutput, terms: (f64, f64, f64)) -> String {
    let mut lines = vec![format!(
        "kldiv={} nss={} cc={}",
        terms.0, terms.1, terms.2
    )];
    let feats = out
        .cnn
        .iter()
        .chain(&out.trans)
        .chain(std::iter::once(&out.fused))
        .chain(&out.decoder)
        .chain(std::iter::once(&out.attention));
    for f in feats {
        if !f.is_finite().unwrap_or(false) {
            lines.push(format!("non-finite activations at {:?}", f.stage));
        }
    }
    let k = &state.model.knowledge.k;
    let stat = |t: candle_core::Result<candle_core::Tensor>| {
        t.and_then(|t| t.to_dtype(DType::F64)?.to_scalar::<f64>()).unwrap_or(f64::NAN)
    };
    lines.push(format!(
        "knowledge iteration={} min={} max={}",
        state.model.knowledge.iteration,
        stat(k.flatten_all().and_then(|t| t.min(0))),
        stat(k.flatten_all().and_then(|t| t.max(0))),
    ));
    lines.join("\n")
}

/// One optimizer step followed by one knowledge update from the same
/// forward pass. The forward pass reads the knowledge left by the
/// previous step.
pub fn train_step(state: &mut TrainState, batch: &Batch) -> Result<StepOutput> {
    state.model.train();
    let out = state.model.forward(&batch.images)?;
    let w = state.loss_weights();
    let l = batch_loss(&out.attention.data, &batch.gt, &batch.fix_mask, &w, state.run.model.epsilon_kl)?;
    let value = l.value()?;
    if !value.is_finite() {
        return Err(Error::NanLoss {
            step: state.step,
            diagnostics: diagnostics(state, &out, (l.kldiv, l.nss, l.cc)),
        });
    }
    let grads = l.total.backward()?;
    state.optim.step(&state.model.store, &grads)?;
    state.model.feed_back(&out)?;
    state.step += 1;
    Ok(StepOutput {
        loss: value,
        kldiv: l.kldiv,
        nss: l.nss,
        cc: l.cc,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub steps: Vec<StepOutput>,
    /// `(step, validation means)`.
    pub validations: Vec<(u64, FrameMetrics)>,
    pub best: Option<(u64, FrameMetrics)>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Runs until `run.train.steps` total steps, resuming from `state.step`.
///
/// With a validation set, validates every `validate_every` steps and at the
/// end. With `out_dir`, writes `out_dir/last` at the end and `out_dir/best`
/// whenever validation CC improves.
pub fn train(state: &mut TrainState, train_ds: &Dataset, val: Option<&Dataset>, out_dir: Option<&Path>) -> Result<TrainReport> {
    let cfg = state.run.train.clone();
    let mut batches = batch_iter(train_ds, cfg.batch_size, state.run.model.seed, cfg.shuffle)?;
    batches.skip_batches(state.step);
    let opts = state.eval_options();
    let mut report = TrainReport::default();
    let mut last_validated = None;

    let validate = |state: &mut TrainState, report: &mut TrainReport| -> Result<Option<FrameMetrics>> {
        let Some(val) = val else { return Ok(None) };
        let mean = evaluate_model(&mut state.model, val, &opts)?.mean()?;
        log::info!(
            "step {}: val CC {:.4} SIM {:.4} NSS {:.4} Kldiv {:.4}",
            state.step,
            mean.cc,
            mean.sim,
            mean.nss,
            mean.kldiv
        );
        report.validations.push((state.step, mean.clone()));
        let improved = report.best.as_ref().is_none_or(|(_, b)| mean.cc > b.cc);
        if improved {
            report.best = Some((state.step, mean.clone()));
            if let Some(dir) = out_dir {
                save_checkpoint(state, &dir.join("best"), Some(&mean))?;
            }
        }
        Ok(Some(mean))
    };

    while state.step < cfg.steps {
        let idx = batches.next().expect("batch stream is endless");
        let batch = make_batch(train_ds, &idx, state.model.dtype())?;
        let out = train_step(state, &batch)?;
        if state.step % 50 == 0 || state.step == 1 {
            log::info!("step {} loss {:.5}", state.step, out.loss);
        }
        report.steps.push(out);
        if cfg.validate_every > 0 && state.step % cfg.validate_every == 0 {
            last_validated = Some((state.step, validate(state, &mut report)?));
        }
    }
    let final_metrics = match last_validated {
        Some((step, m)) if step == state.step => m,
        _ => validate(state, &mut report)?,
    };
    if let Some(dir) = out_dir {
        save_checkpoint(state, &dir.join("last"), final_metrics.as_ref())?;
    }
    Ok(report)
}
