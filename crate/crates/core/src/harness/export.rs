//! State-pair export: per timestep, the true state next to every agent's
//! reconstruction, as JSON-lines. Embedding/visualization is external.

use super::rollout::EvalEpisode;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::path::Path;

#[derive(Serialize, Deserialize, Debug)]
pub struct StatePairRow {
    pub t: usize,
    pub true_state: Vec<f32>,
    /// One entry per agent; None where that agent did not reconstruct
    /// (dead, or a non-reconstructing ablation).
    pub reconstructions: Vec<Option<Vec<f32>>>,
}

/// Writes one row per timestep of the episode; returns the row count.
pub fn write_state_pairs(path: &Path, episode: &EvalEpisode) -> io::Result<usize> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    let rows = episode.reconstructions.len();
    for t in 0..rows {
        let row = StatePairRow {
            t,
            true_state: episode.record.states[t].clone(),
            reconstructions: episode.reconstructions[t].clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&row).expect("row serializes"))?;
    }
    out.flush()?;
    Ok(rows)
}

pub fn read_state_pairs(path: &Path) -> io::Result<Vec<StatePairRow>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// Fidelity summary over exported pairs: for how many timesteps is the
/// reconstruction closer to its own true state than to the median other
/// timestep's true state.
pub fn fidelity_fraction(rows: &[StatePairRow]) -> f32 {
    let l2 = |a: &[f32], b: &[f32]| -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
    };
    let mut hits = 0usize;
    let mut total = 0usize;
    for (t, row) in rows.iter().enumerate() {
        for recon in rows[t].reconstructions.iter().flatten() {
            let own = l2(recon, &row.true_state);
            let mut others: Vec<f32> = rows
                .iter()
                .enumerate()
                .filter(|(u, _)| *u != t)
                .map(|(_, other)| l2(recon, &other.true_state))
                .collect();
            if others.is_empty() {
                continue;
            }
            others.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = others[others.len() / 2];
            total += 1;
            if own < median {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f32 / total as f32
    }
}
