//! Dense ReLU networks with hand-written reverse-mode gradients, Adam, and a
//! checksummed checkpoint format.
//!
//! Batches are `features x batch` matrices: one sample per column.

mod adam;
pub mod checkpoint;

use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use adam::{Adam, LrSchedule};

use crate::error::{Error, Result};

/// Multilayer perceptron: affine layers with ReLU between them and a linear
/// output. Parameters live in one flat vector, layer by layer, each layer's
/// weights (column-major `out x in`) followed by its biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Intermediates kept by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    /// Input of every layer.
    inputs: Vec<DMatrix<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Weights and biases uniform in `±sqrt(1 / fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes)?;
        let mut at = 0;
        for w in sizes.windows(2) {
            let bound = (1.0 / w[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[at..at + n] {
                *p = dist.sample(rng);
            }
            at += n;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) || params.len() != param_count(sizes) {
            return Err(Error::param(format!(
                "{} parameters do not fit layer sizes {sizes:?}",
                params.len()
            )));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer(&self, k: usize) -> (DMatrixView<'_, f64>, DVectorView<'_, f64>, usize) {
        let offset: usize = param_count(&self.sizes[..=k]);
        let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
        let w = DMatrixView::from_slice(&self.params[offset..offset + n_in * n_out], n_out, n_in);
        let b = DVectorView::from_slice(&self.params[offset + n_in * n_out..offset + n_in * n_out + n_out], n_out);
        (w, b, offset)
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n_inputs() {
            return Err(Error::param(format!(
                "network expects {} inputs, got {}",
                self.n_inputs(),
                x.nrows()
            )));
        }
        Ok(())
    }

    /// Forward pass over a batch, keeping what [`Mlp::backward`] needs.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Cache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut h = x.clone();
        for k in 0..self.n_layers() {
            let (w, b, _) = self.layer(k);
            let mut z = w * &h;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if k + 1 < self.n_layers() {
                z.apply(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Ok((h, Cache { inputs }))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_batch(x)?.0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.predict(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    /// Gradients of `sum(dy ⊙ y)` with respect to the parameters and inputs.
    pub fn backward(&self, cache: &Cache, dy: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let mut grads = vec![0.0; self.n_params()];
        let mut delta = dy.clone();
        for k in (0..self.n_layers()).rev() {
            let (w, _, offset) = self.layer(k);
            let input = &cache.inputs[k];
            let n_w = w.nrows() * w.ncols();
            let dw = &delta * input.transpose();
            grads[offset..offset + n_w].copy_from_slice(dw.as_slice());
            for (g, row) in grads[offset + n_w..offset + n_w + w.nrows()]
                .iter_mut()
                .zip(delta.row_iter())
            {
                *g = row.sum();
            }
            let mut dx = w.tr_mul(&delta);
            if k > 0 {
                // `input` is the ReLU output of the previous layer.
                dx.zip_apply(input, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = dx;
        }
        (grads, delta)
    }

    /// Polyak averaging: `self <- (1 - tau) self + tau other`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

/// Packs samples as the columns of a batch matrix.
pub fn batch_from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut out = DMatrix::zeros(d, rows.len());
    for (j, r) in rows.iter().enumerate() {
        out.column_mut(j).copy_from_slice(r);
    }
    out
}
