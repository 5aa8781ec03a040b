//! metrics.csv: one row per training episode, fixed columns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub const METRICS_COLUMNS: &str =
    "episode,env_steps,epsilon,train_return,td_loss,sg_loss,eval_win_rate,eval_return,wall_clock_s";

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub episode: u64,
    pub env_steps: u64,
    pub epsilon: f32,
    pub train_return: f32,
    pub td_loss: Option<f32>,
    pub sg_loss: Option<f32>,
    pub eval_win_rate: Option<f32>,
    pub eval_return: Option<f32>,
    pub wall_clock_s: f64,
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    rows: u64,
}

fn opt(v: Option<f32>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_COLUMNS}")?;
        Ok(MetricsWriter { out, rows: 0 })
    }

    pub fn append(&mut self, row: &MetricsRow) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{:.6},{:.6},{},{},{},{},{:.3}",
            row.episode,
            row.env_steps,
            row.epsilon,
            row.train_return,
            opt(row.td_loss),
            opt(row.sg_loss),
            opt(row.eval_win_rate),
            opt(row.eval_return),
            row.wall_clock_s
        )?;
        self.rows += 1;
        self.out.flush()
    }

    pub fn rows_written(&self) -> u64 {
        self.rows
    }
}

/// Strips the wall-clock column (the only timing-dependent field) so two
/// runs of the same seeded config compare byte-equal on everything else.
pub fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(idx) => &line[..idx],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
