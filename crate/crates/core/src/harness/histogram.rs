//! Score histograms by hidden membership over one shared bin grid.

use std::path::Path;

use serde::Serialize;

use super::report::csv_bytes;
use super::write_atomic;
use crate::error::{Error, Result};
use crate::wildgen::WildPool;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    /// Counts per bin for `[id, covariate, semantic]`.
    pub counts: [Vec<usize>; 3],
}

pub fn emit_histograms(pool: &WildPool, bins: usize) -> Result<Histogram> {
    if bins < 10 {
        return Err(Error::config("histogram_bins", "must be >= 10"));
    }
    let scores = (0..pool.len()).map(|i| pool.score_of(i)).collect::<Result<Vec<_>>>()?;
    let (mut lo, mut hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if scores.is_empty() {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let mut counts = [vec![0; bins], vec![0; bins], vec![0; bins]];
    for (e, s) in pool.examples.iter().zip(&scores) {
        let b = (edges.partition_point(|&x| x <= *s).max(1) - 1).min(bins - 1);
        counts[e.membership as usize][b] += 1;
    }
    Ok(Histogram { edges, counts })
}

impl Histogram {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            low: f64,
            high: f64,
            id: usize,
            covariate: usize,
            semantic: usize,
        }
        let rows = (0..self.edges.len() - 1).map(|b| Row {
            low: self.edges[b],
            high: self.edges[b + 1],
            id: self.counts[0][b],
            covariate: self.counts[1][b],
            semantic: self.counts[2][b],
        });
        write_atomic(path, &csv_bytes(rows, &["low", "high", "id", "covariate", "semantic"])?)
    }
}
