use std::path::{Path, PathBuf};
use std::process::ExitCode;

use candle_core::DType;
use clap::{Parser, Subcommand};

use fblnet::config::{EncoderMode, FeedbackNode, FusionMode, RunConfig};
use fblnet::data::Split;
use fblnet::harness::{
    evaluate_checkpoint, load_checkpoint, EvalOptions, parse_grid_spec, predict_checkpoint, read_manifest, resolve_eval,
    resolve_split, run_ablation, train, TrainState, SYNTHETIC,
};
use fblnet::{Error, Result};

#[derive(Parser)]
#[command(name = "fblnet", version, about = "Feedback-loop driver attention network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write `best/` and `last/` checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory, or `synthetic`.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fusion: Option<FusionMode>,
        #[arg(long = "feedback-node")]
        feedback_node: Option<FeedbackNode>,
        #[arg(long)]
        encoder: Option<EncoderMode>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long = "no-shuffle")]
        no_shuffle: bool,
        /// Continue from this checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint and write the per-frame report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the predicted attention map of one image as a PNG.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resize the heatmap back to the source image size.
        #[arg(long = "native-size")]
        native_size: bool,
    },
    /// Train and score every row of one or more ablation grids.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `fusion`, `node`, `encoder`, `all`, or a comma list.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory, or `synthetic`.
        #[arg(long, default_value = SYNTHETIC)]
        data: String,
        #[arg(long)]
        steps: Option<u64>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
            fusion,
            feedback_node,
            encoder,
            steps,
            no_shuffle,
            resume,
        } => {
            let mut state = match &resume {
                Some(dir) => load_checkpoint(dir)?,
                None => {
                    let mut r = load_config(config.as_deref())?;
                    r.model.seed = seed.unwrap_or(r.model.seed);
                    r.model.fusion_mode = fusion.unwrap_or(r.model.fusion_mode);
                    r.model.feedback_node = feedback_node.unwrap_or(r.model.feedback_node);
                    r.model.encoder_mode = encoder.unwrap_or(r.model.encoder_mode);
                    TrainState::new(&r, DType::F32)?
                }
            };
            if let Some(n) = steps {
                state.run.train.steps = n;
            }
            if no_shuffle {
                state.run.train.shuffle = false;
            }
            let train_ds = resolve_split(&data, &state.run, Split::Train)?.expect("train split");
            let val_ds = resolve_split(&data, &state.run, Split::Val)?;
            let report = train(&mut state, &train_ds, val_ds.as_ref(), Some(&out))?;
            let echo = out.join("config.toml");
            std::fs::write(&echo, state.run.to_toml_string()).map_err(|e| Error::io(&echo, e))?;
            println!("trained to step {} (knowledge iteration {})", state.step, state.model.knowledge.iteration);
            if let Some((step, m)) = &report.best {
                println!("best validation CC {:.4} at step {step}", m.cc);
            }
            println!("checkpoints in {}", out.display());
        }
        Command::Eval { ckpt, data, report } => {
            let manifest = read_manifest(&ckpt)?;
            let ds = resolve_eval(&data, &manifest.config)?;
            let opts = EvalOptions::from_run(&manifest.config);
            let r = evaluate_checkpoint(&ckpt, &ds, &opts)?;
            r.write(&report)?;
            let m = r.mean()?;
            println!("AUC_J\tAUC_B\tSIM\tCC\tKldiv\tNSS");
            println!(
                "{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                m.auc_j, m.auc_b, m.sim, m.cc, m.kldiv, m.nss
            );
        }
        Command::Predict {
            ckpt,
            image,
            out,
            native_size,
        } => {
            predict_checkpoint(&ckpt, &image, &out, native_size)?;
            println!("wrote {}", out.display());
        }
        Command::Ablate {
            config,
            grid,
            out,
            data,
            steps,
        } => {
            let mut run = load_config(config.as_deref())?;
            if let Some(n) = steps {
                run.train.steps = n;
            }
            let grids = parse_grid_spec(&grid)?;
            let train_ds = resolve_split(&data, &run, Split::Train)?.expect("train split");
            let mut evals = Vec::new();
            for (name, split) in [("val", Split::Val), ("test", Split::Test)] {
                if let Some(ds) = resolve_split(&data, &run, split)? {
                    evals.push((name.to_string(), ds));
                }
            }
            if evals.is_empty() {
                evals.push(("train".to_string(), train_ds.clone()));
            }
            for g in grids {
                let table = run_ablation(&run, g, &train_ds, &evals, DType::F32)?;
                table.write(&out)?;
                print!("{}", table.to_tsv());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
