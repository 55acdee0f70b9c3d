use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of every report file after the leading `frame_id`.
pub const REPORT_COLUMNS: [&str; 6] = ["AUC_J", "AUC_B", "SIM", "CC", "Kldiv", "NSS"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub id: String,
    pub auc_j: f64,
    pub auc_b: f64,
    pub sim: f64,
    pub cc: f64,
    pub kldiv: f64,
    pub nss: f64,
}

impl FrameMetrics {
    pub fn values(&self) -> [f64; 6] {
        [self.auc_j, self.auc_b, self.sim, self.cc, self.kldiv, self.nss]
    }

    fn from_values(id: String, v: [f64; 6]) -> Self {
        FrameMetrics {
            id,
            auc_j: v[0],
            auc_b: v[1],
            sim: v[2],
            cc: v[3],
            kldiv: v[4],
            nss: v[5],
        }
    }
}

/// Per-frame metrics in evaluation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Column means, labelled `mean`.
    pub fn mean(&self) -> Result<FrameMetrics> {
        if self.frames.is_empty() {
            return Err(Error::EmptyDataset("report has no frames".into()));
        }
        let mut acc = [0.0; 6];
        for f in &self.frames {
            for (a, v) in acc.iter_mut().zip(f.values()) {
                *a += v;
            }
        }
        let n = self.frames.len() as f64;
        Ok(FrameMetrics::from_values("mean".into(), acc.map(|a| a / n)))
    }

    /// Tab-separated text: a `frame_id AUC_J AUC_B SIM CC Kldiv NSS` header,
    /// one row per frame, then the `mean` row.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::from("frame_id");
        for c in REPORT_COLUMNS {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        let mean = self.mean()?;
        for f in self.frames.iter().chain(std::iter::once(&mean)) {
            out.push_str(&f.id);
            for v in f.values() {
                write!(out, "\t{v:.6}").expect("string write");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_tsv()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a report written by [`MetricsReport::to_tsv`], dropping the mean row.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
        if header.first() != Some(&"frame_id") || header[1..] != REPORT_COLUMNS {
            return Err(Error::Domain(format!("unexpected report header {header:?}")));
        }
        let mut frames = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(Error::Domain(format!("report row has {} columns", cols.len())));
            }
            if cols[0] == "mean" {
                continue;
            }
            let mut v = [0.0; 6];
            for (slot, c) in v.iter_mut().zip(&cols[1..]) {
                *slot = c
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad number {c:?} in report")))?;
            }
            frames.push(FrameMetrics::from_values(cols[0].to_string(), v));
        }
        Ok(MetricsReport { frames })
    }
}
