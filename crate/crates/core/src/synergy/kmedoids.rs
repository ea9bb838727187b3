//! Partitioning Around Medoids: greedy BUILD followed by best-improvement
//! SWAP, restarted from random medoid sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_SWAPS: usize = 10_000;
const RESTARTS: usize = 10;

/// A partition of actuator indices into groups, each with a medoid.
///
/// Stored canonically: members ascending within a group, groups ordered by
/// their smallest member. The first member of each group is its
/// representative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingResult {
    pub groups: Vec<Vec<usize>>,
    pub medoids: Vec<usize>,
    /// Total distance of every point to its group's medoid.
    pub cost: f64,
    pub seed: u64,
}

impl GroupingResult {
    /// Builds a canonical grouping from explicit groups and medoids.
    pub fn new(groups: Vec<Vec<usize>>, medoids: Vec<usize>, cost: f64, seed: u64) -> Result<Self> {
        if groups.len() != medoids.len() {
            return Err(Error::param("one medoid per group required"));
        }
        let mut pairs: Vec<(Vec<usize>, usize)> = groups
            .into_iter()
            .zip(medoids)
            .map(|(mut g, m)| {
                g.sort_unstable();
                (g, m)
            })
            .collect();
        for (g, m) in &pairs {
            if g.is_empty() {
                return Err(Error::param("groups must be non-empty"));
            }
            if !g.contains(m) {
                return Err(Error::param(format!("medoid {m} is not in its group")));
            }
        }
        pairs.sort_by_key(|(g, _)| g[0]);
        let (groups, medoids): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let result = GroupingResult {
            groups,
            medoids,
            cost,
            seed,
        };
        result.check_partition()?;
        Ok(result)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_items(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group id of every item.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n_items()];
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                labels[i] = g;
            }
        }
        labels
    }

    pub fn same_group(&self, i: usize, j: usize) -> bool {
        let labels = self.labels();
        labels[i] == labels[j]
    }

    fn check_partition(&self) -> Result<()> {
        let n = self.n_items();
        let mut seen = vec![false; n];
        for &i in self.groups.iter().flatten() {
            if i >= n || seen[i] {
                return Err(Error::param("groups must partition 0..N"));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

fn check_distance(distance: &Matrix, n_groups: usize) -> Result<usize> {
    let (n, m) = distance.shape();
    if n != m || n == 0 {
        return Err(Error::param("distance matrix must be square and non-empty"));
    }
    if distance.as_slice().iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::param("distances must be finite and non-negative"));
    }
    if n_groups == 0 || n_groups > n {
        return Err(Error::param(format!(
            "number of groups must lie in [1, {n}], got {n_groups}"
        )));
    }
    Ok(n)
}

/// Sum over points of the distance to the nearest medoid.
pub fn medoid_cost(distance: &Matrix, medoids: &[usize]) -> f64 {
    (0..distance.rows())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| distance[(i, m)])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Clusters the items of a distance matrix into `n_groups` groups.
///
/// SWAP runs from the BUILD medoids and from `RESTARTS` seeded random
/// medoid sets; the cheapest result wins, BUILD on ties.
pub fn kmedoids(distance: &Matrix, n_groups: usize, seed: u64) -> Result<GroupingResult> {
    let n = check_distance(distance, n_groups)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = distance.as_slice().iter().fold(0.0f64, |a, &b| a.max(b)).max(1.0);
    let (mut medoids, mut cost) = swap(distance, build(distance, n_groups), scale, &mut rng);
    for _ in 0..RESTARTS {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(n_groups);
        let (m, c) = swap(distance, all, scale, &mut rng);
        if c < cost - 1e-12 * scale {
            medoids = m;
            cost = c;
        }
    }

    let mut groups = vec![Vec::new(); n_groups];
    for i in 0..n {
        let g = match medoids.iter().position(|&m| m == i) {
            Some(own) => own,
            None => nearest(distance, &medoids, i),
        };
        groups[g].push(i);
    }
    GroupingResult::new(groups, medoids, cost, seed)
}

/// Best-improvement SWAP until no exchange of a medoid with a non-medoid
/// lowers the cost.
fn swap(distance: &Matrix, mut medoids: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = distance.rows();
    let mut cost = medoid_cost(distance, &medoids);
    for _ in 0..MAX_SWAPS {
        let mut slots: Vec<usize> = (0..medoids.len()).collect();
        let mut others: Vec<usize> = (0..n).filter(|i| !medoids.contains(i)).collect();
        slots.shuffle(rng);
        others.shuffle(rng);

        let mut best: Option<(usize, usize, f64)> = None;
        let mut trial = medoids.clone();
        for &slot in &slots {
            for &o in &others {
                trial[slot] = o;
                let c = medoid_cost(distance, &trial);
                let improves = c < cost - 1e-12 * scale;
                if improves && best.is_none_or(|(_, _, b)| c < b) {
                    best = Some((slot, o, c));
                }
            }
            trial[slot] = medoids[slot];
        }
        match best {
            Some((slot, o, c)) => {
                medoids[slot] = o;
                cost = c;
            }
            None => break,
        }
    }
    (medoids, cost)
}

fn nearest(distance: &Matrix, medoids: &[usize], i: usize) -> usize {
    let mut best = 0;
    for (g, &m) in medoids.iter().enumerate() {
        if distance[(i, m)] < distance[(i, medoids[best])] {
            best = g;
        }
    }
    best
}

/// Greedy initialization: the most central point, then repeatedly the point
/// whose addition lowers the total cost the most. Ties go to the lower index.
fn build(distance: &Matrix, k: usize) -> Vec<usize> {
    let n = distance.rows();
    let first = (0..n)
        .map(|c| (c, (0..n).map(|i| distance[(i, c)]).sum::<f64>()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    let mut medoids = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| distance[(i, first)]).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let gain: f64 = (0..n).map(|i| (nearest[i] - distance[(i, c)]).max(0.0)).sum();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        medoids.push(best.0);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(distance[(i, best.0)]);
        }
    }
    medoids
}
