use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 10] = [
    "iteration",
    "corr_loss",
    "rms_loss",
    "sparsity",
    "breadth_tuning",
    "theta",
    "w_max",
    "w_min",
    "w_mean",
    "m_z_mean",
];

/// One evaluation of a frozen snapshot during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub iteration: usize,
    pub corr_loss: f64,
    pub rms_loss: f64,
    pub sparsity: f64,
    pub breadth_tuning: f64,
    pub theta: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub w_mean: f64,
    /// Mean number of active neurons over evaluation patches that drove
    /// the input layer.
    pub m_z_mean: f64,
}

/// Training curve. Iterations are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn push(&mut self, row: RecordRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iteration < row.iteration));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = RECORD_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.corr_loss,
                r.rms_loss,
                r.sparsity,
                r.breadth_tuning,
                r.theta,
                r.w_max,
                r.w_min,
                r.w_mean,
                r.m_z_mean
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(RECORD_COLUMNS.join(",").as_str()) {
            return Err(Error::input("record CSV header mismatch"));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != RECORD_COLUMNS.len() {
                return Err(Error::input(format!("bad record line `{line}`")));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse()
                    .map_err(|_| Error::input(format!("bad number `{}`", f[k])))
            };
            rows.push(RecordRow {
                iteration: f[0]
                    .parse()
                    .map_err(|_| Error::input(format!("bad iteration `{}`", f[0])))?,
                corr_loss: num(1)?,
                rms_loss: num(2)?,
                sparsity: num(3)?,
                breadth_tuning: num(4)?,
                theta: num(5)?,
                w_max: num(6)?,
                w_min: num(7)?,
                w_mean: num(8)?,
                m_z_mean: num(9)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
