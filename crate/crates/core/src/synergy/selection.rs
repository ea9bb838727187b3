use serde::{Deserialize, Serialize};

use super::kmedoids::{kmedoids, GroupingResult};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Distances among the medoids found for one candidate group count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n_groups: usize,
    pub d_max: f64,
    pub d_min: f64,
}

impl SelectionRow {
    pub fn gap(&self) -> f64 {
        self.d_max - self.d_min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: usize,
    /// Every candidate produced coincident medoids.
    pub degenerate: bool,
    pub table: Vec<SelectionRow>,
}

/// Picks the number of groups from the spread of distances among medoids.
///
/// For each candidate the closest and farthest medoid pairs are recorded.
/// The chosen count is the largest candidate whose closest pair of medoids
/// is still at least `separation` times the largest medoid distance seen
/// over all candidates; past that point extra groups split existing ones.
pub fn select_group_count(
    distance: &Matrix,
    candidates: &[usize],
    seed: u64,
    separation: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::param("no candidate group counts"));
    }
    if !(0.0..=1.0).contains(&separation) {
        return Err(Error::param("separation must lie in [0, 1]"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] < 2 {
        return Err(Error::param("candidate group counts must be >= 2"));
    }
    let mut table = Vec::with_capacity(sorted.len());
    for &k in &sorted {
        let g = kmedoids(distance, k, seed)?;
        table.push(medoid_spread(distance, &g));
    }
    let overall = table.iter().map(|r| r.d_max).fold(0.0, f64::max);
    if overall <= 1e-12 {
        return Ok(Selection {
            chosen: sorted[0],
            degenerate: true,
            table,
        });
    }
    let chosen = table
        .iter()
        .rev()
        .find(|r| r.d_min >= separation * overall)
        .map_or(sorted[0], |r| r.n_groups);
    Ok(Selection {
        chosen,
        degenerate: false,
        table,
    })
}

fn medoid_spread(distance: &Matrix, g: &GroupingResult) -> SelectionRow {
    let mut d_max = f64::NEG_INFINITY;
    let mut d_min = f64::INFINITY;
    for (a, &i) in g.medoids.iter().enumerate() {
        for &j in &g.medoids[a + 1..] {
            d_max = d_max.max(distance[(i, j)]);
            d_min = d_min.min(distance[(i, j)]);
        }
    }
    SelectionRow {
        n_groups: g.n_groups(),
        d_max,
        d_min,
    }
}
