use serde::{Deserialize, Serialize};

use super::trajectory::TrajectoryBuffer;
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::matrix::Matrix;

/// Which per-muscle signal is segmented and compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// First differences of length (length changes).
    #[default]
    Differences,
    /// Raw lengths.
    Lengths,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    /// Segment-averaged cosine similarities, `N_m x N_m`.
    pub r: Matrix,
    pub segments: usize,
    /// Muscles whose signal is identically zero.
    pub degenerate: Vec<usize>,
}

impl CorrelationMatrix {
    /// `clamp(1 - R, 0, 2)`.
    pub fn distance(&self) -> Matrix {
        distance_from_correlation(&self.r)
    }
}

pub fn distance_from_correlation(r: &Matrix) -> Matrix {
    r.map(|v| (1.0 - v).clamp(0.0, 2.0))
}

/// Per-muscle signal laid out muscle-major for contiguous segment access.
fn signal_columns(buffer: &TrajectoryBuffer, signal: Signal) -> (Vec<Vec<f64>>, usize) {
    let rows = buffer.n_steps();
    let cols = buffer.n_muscles();
    let len = match signal {
        Signal::Differences => rows.saturating_sub(1),
        Signal::Lengths => rows,
    };
    let data = buffer.lengths.as_slice();
    let columns = (0..cols)
        .map(|i| match signal {
            Signal::Differences => (0..len)
                .map(|t| data[(t + 1) * cols + i] - data[t * cols + i])
                .collect(),
            Signal::Lengths => (0..len).map(|t| data[t * cols + i]).collect(),
        })
        .collect();
    (columns, len)
}

/// Splits each muscle's signal into `segments` equal contiguous pieces
/// (dropping any remainder) and averages the cosine similarity of every
/// muscle pair over the pieces. A piece with zero norm contributes 0.
pub fn correlation_matrix(
    buffer: &TrajectoryBuffer,
    segments: usize,
    signal: Signal,
    mode: Parallelism,
) -> Result<CorrelationMatrix> {
    if segments == 0 {
        return Err(Error::param("segment count must be >= 1"));
    }
    let (columns, len) = signal_columns(buffer, signal);
    let seg_len = len / segments;
    if seg_len == 0 {
        return Err(Error::param(format!(
            "{len} signal samples cannot form {segments} segments"
        )));
    }
    let nm = columns.len();
    let norms: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            (0..segments)
                .map(|k| dot(&c[k * seg_len..(k + 1) * seg_len], &c[k * seg_len..(k + 1) * seg_len]).sqrt())
                .collect()
        })
        .collect();

    let rows: Vec<Vec<f64>> = mode.map(nm, |i| {
        (0..i)
            .map(|j| {
                let mut total = 0.0;
                for k in 0..segments {
                    let (ni, nj) = (norms[i][k], norms[j][k]);
                    if ni > 0.0 && nj > 0.0 {
                        let span = k * seg_len..(k + 1) * seg_len;
                        total += dot(&columns[i][span.clone()], &columns[j][span]) / (ni * nj);
                    }
                }
                (total / segments as f64).clamp(-1.0, 1.0)
            })
            .collect()
    });

    let mut r = Matrix::identity(nm);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    let degenerate = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|v| *v == 0.0))
        .map(|(i, _)| i)
        .collect();
    Ok(CorrelationMatrix {
        r,
        segments,
        degenerate,
    })
}

/// Element-wise mean of several correlation matrices of equal shape.
pub fn mean_correlation(items: &[CorrelationMatrix]) -> Result<Matrix> {
    let first = items
        .first()
        .ok_or_else(|| Error::param("need at least one correlation matrix"))?;
    let (n, m) = first.r.shape();
    let mut out = Matrix::zeros(n, m);
    for c in items {
        if c.r.shape() != (n, m) {
            return Err(Error::param("correlation matrices differ in shape"));
        }
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] += c.r[(i, j)] / items.len() as f64;
            }
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
