use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Stored action `[a_e; w]`, each entry in `[-1, 1]`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True only for terminal states; time-limit truncation is stored as false.
    pub done: bool,
    /// Environment step at which the transition was collected.
    pub t: u64,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let finite = self.obs.iter().chain(&self.next_obs).chain(&self.action).all(|v| v.is_finite())
            && self.reward.is_finite();
        if !finite {
            return Err(Error::domain("non-finite transition"));
        }
        if self.action.iter().any(|a| a.abs() > 1.0) {
            return Err(Error::domain("stored action outside [-1, 1]"));
        }
        Ok(())
    }
}

/// Column-per-sample view of a set of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: DMatrix<f64>,
    pub action: DMatrix<f64>,
    pub reward: Vec<f64>,
    pub next_obs: DMatrix<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Batch {
        let col = |f: &dyn Fn(&Transition) -> &[f64]| {
            let rows = items.first().map_or(0, |t| f(t).len());
            DMatrix::from_fn(rows, items.len(), |i, b| f(items[b])[i])
        };
        Batch {
            obs: col(&|t| &t.obs),
            action: col(&|t| &t.action),
            reward: items.iter().map(|t| t.reward).collect(),
            next_obs: col(&|t| &t.next_obs),
            done: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Fixed-capacity FIFO replay memory.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<ReplayBuffer> {
        if capacity == 0 {
            return Err(Error::param("buffer_size must be >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::domain("sampling from an empty replay buffer"));
        }
        let idx = self.sample_indices(n, rng);
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Ok(Batch::from_transitions(&items))
    }
}
