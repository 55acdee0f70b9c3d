use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use candle_core::DType;
use serde::Serialize;

use super::eval::evaluate_model;
use super::train::{train, TrainState};
use crate::config::{EncoderMode, FeedbackNode, FusionMode, RunConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::FrameMetrics;

/// One ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    /// Cat. / Add. / w/o FBL / w/ FBL.
    Fusion,
    /// Feedback node d0..d4.
    Node,
    /// CNN / Trans. / CNN + Trans.
    Encoder,
}

impl Grid {
    pub const ALL: [Grid; 3] = [Grid::Fusion, Grid::Node, Grid::Encoder];

    pub fn name(self) -> &'static str {
        match self {
            Grid::Fusion => "fusion",
            Grid::Node => "node",
            Grid::Encoder => "encoder",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Grid::Fusion => "Ablation on the type of feedback fusion",
            Grid::Node => "Ablation on the feedback node",
            Grid::Encoder => "Ablation on the encoder",
        }
    }

    /// Row labels paired with the config each row trains.
    pub fn cells(self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut r = base.clone();
            f(&mut r);
            r
        };
        match self {
            Grid::Fusion => FusionMode::ALL
                .iter()
                .map(|&m| {
                    let label = match m {
                        FusionMode::Cat => "Cat.",
                        FusionMode::Add => "Add.",
                        FusionMode::NoFbl => "w/o FBL",
                        FusionMode::Fbl => "w/ FBL",
                    };
                    (label.to_string(), with(&|r| r.model.fusion_mode = m))
                })
                .collect(),
            Grid::Node => FeedbackNode::ALL
                .iter()
                .map(|&n| (format!("B = d_{}", n.index()), with(&|r| r.model.feedback_node = n)))
                .collect(),
            Grid::Encoder => [
                (EncoderMode::Cnn, "CNN"),
                (EncoderMode::Trans, "Trans."),
                (EncoderMode::Both, "CNN + Trans."),
            ]
            .iter()
            .map(|&(e, label)| (label.to_string(), with(&|r| r.model.encoder_mode = e)))
            .collect(),
        }
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fusion" | "fbl" | "table2" => Ok(Grid::Fusion),
            "node" | "feedback_node" | "feedback-node" | "table3" => Ok(Grid::Node),
            "encoder" | "table4" => Ok(Grid::Encoder),
            other => Err(Error::Config(format!("unknown ablation grid {other:?}"))),
        }
    }
}

/// Parses `fusion`, `node`, `encoder`, `all`, or a comma list of them.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<Grid>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Grid::ALL.to_vec());
    }
    let mut out: Vec<Grid> = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let g: Grid = part.parse()?;
        if !out.contains(&g) {
            out.push(g);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub label: String,
    /// Validation means per eval set, in `AblationTable::sets` order.
    pub metrics: Vec<FrameMetrics>,
    /// Mean of the SIM, CC and NSS cells across all eval sets.
    pub avg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub grid: Grid,
    pub steps: u64,
    pub sets: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Tab-separated: a title comment, a header, one row per variant.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {} ({} steps per row)\nvariant", self.grid.title(), self.steps);
        for s in &self.sets {
            for m in ["SIM", "CC", "NSS"] {
                write!(out, "\t{s}:{m}").expect("string write");
            }
        }
        out.push_str("\tavg\n");
        for row in &self.rows {
            out.push_str(&row.label);
            for m in &row.metrics {
                write!(out, "\t{:.4}\t{:.4}\t{:.4}", m.sim, m.cc, m.nss).expect("string write");
            }
            writeln!(out, "\t{:.4}", row.avg).expect("string write");
        }
        out
    }

    /// Writes `<grid>.tsv` and `<grid>.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tsv = dir.join(format!("{}.tsv", self.grid.name()));
        std::fs::write(&tsv, self.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
        let json = dir.join(format!("{}.json", self.grid.name()));
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))
    }
}

/// Mean of SIM, CC and NSS over every eval set.
pub fn row_average(metrics: &[FrameMetrics]) -> f64 {
    let cells: Vec<f64> = metrics.iter().flat_map(|m| [m.sim, m.cc, m.nss]).collect();
    cells.iter().sum::<f64>() / cells.len() as f64
}

/// Trains every cell of `grid` with the same seed, data order and step
/// budget, then evaluates each on every set in `evals`.
pub fn run_ablation(
    base: &RunConfig,
    grid: Grid,
    train_ds: &Dataset,
    evals: &[(String, Dataset)],
    dtype: DType,
) -> Result<AblationTable> {
    if evals.is_empty() {
        return Err(Error::EmptyDataset("ablation needs at least one eval set".into()));
    }
    let mut rows = Vec::new();
    for (label, run) in grid.cells(base) {
        log::info!("ablation {}: training {label}", grid.name());
        let mut state = TrainState::new(&run, dtype)?;
        train(&mut state, train_ds, None, None)?;
        let opts = state.eval_options();
        let metrics = evals
            .iter()
            .map(|(_, ds)| evaluate_model(&mut state.model, ds, &opts)?.mean())
            .collect::<Result<Vec<_>>>()?;
        rows.push(AblationRow {
            avg: row_average(&metrics),
            label,
            metrics,
        });
    }
    Ok(AblationTable {
        grid,
        steps: base.train.steps,
        sets: evals.iter().map(|(n, _)| n.clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(sim: f64, cc: f64, nss: f64) -> FrameMetrics {
        FrameMetrics {
            id: "mean".into(),
            auc_j: 0.0,
            auc_b: 0.0,
            sim,
            cc,
            kldiv: 0.0,
            nss,
        }
    }

    #[test]
    fn avg_reproduces_published_row() {
        let avg = row_average(&[fm(0.3087, 0.4721, 3.6621), fm(0.4358, 0.6134, 4.5741)]);
        assert!((avg - 1.6777).abs() < 1e-4);
    }

    #[test]
    fn grid_rows_have_table_shapes() {
        let base = RunConfig::default();
        let labels = |g: Grid| g.cells(&base).into_iter().map(|(l, _)| l).collect::<Vec<_>>();
        assert_eq!(labels(Grid::Fusion), ["Cat.", "Add.", "w/o FBL", "w/ FBL"]);
        assert_eq!(labels(Grid::Node).len(), 5);
        assert_eq!(labels(Grid::Node)[2], "B = d_2");
        assert_eq!(labels(Grid::Encoder), ["CNN", "Trans.", "CNN + Trans."]);
    }

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(parse_grid_spec("all").unwrap(), Grid::ALL.to_vec());
        assert_eq!(parse_grid_spec("node,fusion,node").unwrap(), vec![Grid::Node, Grid::Fusion]);
        assert!(parse_grid_spec("decoder").is_err());
    }
}
