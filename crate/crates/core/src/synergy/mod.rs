//! Synergy extraction: drive the plant with random joint-velocity
//! perturbations, correlate the resulting muscle length changes, and cluster
//! muscles on `1 - R` with K-Medoids.

mod correlation;
pub mod io;
mod kmedoids;
mod selection;
mod stability;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use correlation::{
    correlation_matrix, distance_from_correlation, mean_correlation, CorrelationMatrix, Signal,
};
pub use kmedoids::{kmedoids, medoid_cost, GroupingResult};
pub use selection::{select_group_count, Selection, SelectionRow};
pub use stability::{
    convergence_study, grouping_distance, grouping_probability, ConvergenceRow, ProbabilityMatrix,
};
pub use trajectory::{generate_trajectories, generate_trajectory, PerturbationConfig, TrajectoryBuffer};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::matrix::Matrix;
use crate::plant::Model;

/// How trajectories are turned into groupings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingSettings {
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub signal: Signal,
    /// Candidate group counts; empty means every count from 2 to `N_m - 1`.
    #[serde(default)]
    pub candidates: Vec<usize>,
    /// Minimum medoid separation, relative to the largest, for a candidate
    /// group count to be accepted.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Skips selection and uses this group count.
    #[serde(default)]
    pub n_groups: Option<usize>,
}

fn default_segments() -> usize {
    100
}

fn default_separation() -> f64 {
    0.15
}

impl Default for GroupingSettings {
    fn default() -> Self {
        GroupingSettings {
            segments: default_segments(),
            signal: Signal::default(),
            candidates: Vec::new(),
            separation: default_separation(),
            n_groups: None,
        }
    }
}

impl GroupingSettings {
    pub fn correlation(&self, buffer: &TrajectoryBuffer, mode: Parallelism) -> Result<CorrelationMatrix> {
        correlation_matrix(buffer, self.segments, self.signal, mode)
    }

    pub fn candidates_for(&self, n_muscles: usize) -> Vec<usize> {
        if self.candidates.is_empty() {
            (2..n_muscles.max(3)).collect()
        } else {
            self.candidates.clone()
        }
    }
}

/// Everything produced by one multi-seed extraction.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub buffers: Vec<TrajectoryBuffer>,
    pub correlations: Vec<CorrelationMatrix>,
    /// Correlation averaged over seeds; the group count is chosen on it.
    pub mean_r: Matrix,
    pub selection: Option<Selection>,
    pub n_groups: usize,
    /// One grouping per seed, in seed order.
    pub groupings: Vec<GroupingResult>,
    pub probability: ProbabilityMatrix,
}

/// Runs the full pipeline over `seeds`: one trajectory, correlation matrix and
/// grouping per seed, a group count shared by all seeds, and the co-grouping
/// probability across seeds.
pub fn extract(
    model: &Model,
    config: &PerturbationConfig,
    seeds: &[u64],
    settings: &GroupingSettings,
    mode: Parallelism,
) -> Result<Extraction> {
    if seeds.is_empty() {
        return Err(Error::param("no seeds given"));
    }
    let buffers = generate_trajectories(model, config, seeds, mode)?;
    let correlations: Vec<CorrelationMatrix> = mode
        .map(buffers.len(), |k| settings.correlation(&buffers[k], Parallelism::Sequential))
        .into_iter()
        .collect::<Result<_>>()?;
    let mean_r = mean_correlation(&correlations)?;

    let (selection, n_groups) = match settings.n_groups {
        Some(k) => (None, k),
        None => {
            let candidates = settings.candidates_for(model.n_muscles());
            let s = select_group_count(
                &distance_from_correlation(&mean_r),
                &candidates,
                seeds[0],
                settings.separation,
            )?;
            let k = s.chosen;
            (Some(s), k)
        }
    };
    let groupings: Vec<GroupingResult> = mode
        .map(seeds.len(), |k| kmedoids(&correlations[k].distance(), n_groups, seeds[k]))
        .into_iter()
        .collect::<Result<_>>()?;
    let probability = grouping_probability(&groupings)?;
    Ok(Extraction {
        buffers,
        correlations,
        mean_r,
        selection,
        n_groups,
        groupings,
        probability,
    })
}
