use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// Uniform bins over `[-1, 1]`.
pub const COSINE_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosineStats {
    pub pairs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts per bin; bin `b` covers `[-1 + 2b/50, -1 + 2(b+1)/50)`, the last bin is closed.
    pub counts: Vec<usize>,
}

impl CosineStats {
    pub fn bin_edges(b: usize) -> (f64, f64) {
        let w = 2.0 / COSINE_BINS as f64;
        (-1.0 + w * b as f64, -1.0 + w * (b + 1) as f64)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (b, c) in self.counts.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(b);
            writeln!(out, "{lo},{hi},{c}")?;
        }
        Ok(())
    }
}

/// Histogram of cosine similarity over every pair of rows of `p`.
pub fn position_cosine_stats(p: &Matrix) -> Result<CosineStats> {
    if p.rows() < 2 {
        return Err(Error::Shape(
            "cosine statistics need at least two rows".into(),
        ));
    }
    let norms: Vec<f64> = (0..p.rows())
        .map(|r| dot(p.row(r), p.row(r)).sqrt())
        .collect();
    if let Some(r) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Value(format!(
            "row {r} is zero; its cosine similarity is undefined"
        )));
    }
    let mut counts = vec![0usize; COSINE_BINS];
    let mut values = Vec::with_capacity(p.rows() * (p.rows() - 1) / 2);
    for i in 0..p.rows() {
        for j in i + 1..p.rows() {
            let c = (dot(p.row(i), p.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let b = (((c + 1.0) / 2.0 * COSINE_BINS as f64) as usize).min(COSINE_BINS - 1);
            counts[b] += 1;
            values.push(c);
        }
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k).sqrt();
    Ok(CosineStats {
        pairs: values.len(),
        mean,
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        counts,
    })
}
