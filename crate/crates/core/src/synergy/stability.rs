use serde::{Deserialize, Serialize};

use super::kmedoids::{kmedoids, GroupingResult};
use super::trajectory::{generate_trajectories, PerturbationConfig};
use super::GroupingSettings;
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::matrix::Matrix;
use crate::plant::Model;

/// Fraction of seeds in which each pair of muscles shares a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub p: Matrix,
    pub n_seeds: usize,
}

pub fn grouping_probability(results: &[GroupingResult]) -> Result<ProbabilityMatrix> {
    let first = results
        .first()
        .ok_or_else(|| Error::param("need at least one grouping"))?;
    let n = first.n_items();
    let mut counts = Matrix::zeros(n, n);
    for g in results {
        if g.n_items() != n {
            return Err(Error::param("groupings cover different muscle counts"));
        }
        for members in &g.groups {
            for &i in members {
                for &j in members {
                    counts[(i, j)] += 1.0;
                }
            }
        }
    }
    let total = results.len() as f64;
    Ok(ProbabilityMatrix {
        p: counts.map(|c| c / total),
        n_seeds: results.len(),
    })
}

/// Frobenius norm of the difference of two grouping matrices.
pub fn grouping_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::param(format!(
            "grouping matrices differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.frobenius_distance(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub samples: usize,
    pub distance: f64,
}

/// Regroups truncated prefixes of one trajectory per seed and measures how far
/// each prefix's grouping matrix lies from the one obtained with the largest
/// sample size. The group count is taken from `n_groups`.
pub fn convergence_study(
    model: &Model,
    config: &PerturbationConfig,
    sample_sizes: &[usize],
    seeds: &[u64],
    settings: &GroupingSettings,
    n_groups: usize,
    mode: Parallelism,
) -> Result<Vec<ConvergenceRow>> {
    if sample_sizes.is_empty() {
        return Err(Error::param("no sample sizes given"));
    }
    if seeds.is_empty() {
        return Err(Error::param("no seeds given"));
    }
    if sample_sizes.windows(2).any(|w| w[0] >= w[1]) || sample_sizes[0] == 0 {
        return Err(Error::param("sample sizes must be positive and strictly increasing"));
    }
    let reference = *sample_sizes.last().unwrap();
    let full = PerturbationConfig {
        total_steps: reference,
        ..config.clone()
    };
    let buffers = generate_trajectories(model, &full, seeds, mode)?;

    let probability_at = |samples: usize| -> Result<Matrix> {
        let groupings: Vec<Result<GroupingResult>> = mode.map(seeds.len(), |k| {
            let buf = buffers[k].truncated(samples)?;
            let corr = settings.correlation(&buf, Parallelism::Sequential)?;
            kmedoids(&corr.distance(), n_groups, seeds[k])
        });
        let groupings: Vec<GroupingResult> = groupings.into_iter().collect::<Result<_>>()?;
        Ok(grouping_probability(&groupings)?.p)
    };

    let target = probability_at(reference)?;
    let mut rows = Vec::with_capacity(sample_sizes.len());
    for &samples in sample_sizes {
        let p = if samples == reference {
            target.clone()
        } else {
            probability_at(samples)?
        };
        rows.push(ConvergenceRow {
            samples,
            distance: grouping_distance(&p, &target)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouping(groups: Vec<Vec<usize>>) -> GroupingResult {
        let medoids = groups.iter().map(|g| g[0]).collect();
        GroupingResult::new(groups, medoids, 0.0, 0).unwrap()
    }

    #[test]
    fn single_result_is_binary() {
        let p = grouping_probability(&[grouping(vec![vec![0, 2], vec![1]])]).unwrap();
        assert_eq!(p.p.as_slice(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(p.n_seeds, 1);
    }

    #[test]
    fn counts_moved_point() {
        // Point 3 joins group {0, 1} in seven of ten seeds.
        let mut results = Vec::new();
        for s in 0..10 {
            if s < 7 {
                results.push(grouping(vec![vec![0, 1, 3], vec![2]]));
            } else {
                results.push(grouping(vec![vec![0, 1], vec![2, 3]]));
            }
        }
        let p = grouping_probability(&results).unwrap().p;
        assert!((p[(0, 3)] - 0.7).abs() < 1e-15);
        assert!((p[(2, 3)] - 0.3).abs() < 1e-15);
        assert_eq!(p[(0, 1)], 1.0);
        assert!(p.is_symmetric());
        assert!((0..4).all(|i| p[(i, i)] == 1.0));
    }

    #[test]
    fn identical_results_stay_binary() {
        let results = vec![grouping(vec![vec![0], vec![1, 2]]); 10];
        let p = grouping_probability(&results).unwrap().p;
        assert!(p.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn distance_examples() {
        let ones = Matrix::from_vec(2, 2, vec![1.0; 4]);
        let eye = Matrix::identity(2);
        assert!((grouping_distance(&ones, &eye).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(grouping_distance(&ones, &eye).unwrap(), grouping_distance(&eye, &ones).unwrap());
        assert_eq!(grouping_distance(&eye, &eye).unwrap(), 0.0);
        assert!(grouping_distance(&eye, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn rejects_mixed_sizes() {
        let a = grouping(vec![vec![0, 1]]);
        let b = grouping(vec![vec![0, 1, 2]]);
        assert!(grouping_probability(&[a, b]).is_err());
        assert!(grouping_probability(&[]).is_err());
    }
}
