//! Adam, dense for encoder and classifier tensors and lazy (row-sparse) for
//! the embedding table.

use crate::embed::{EmbeddingTable, RowGrads};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[inline]
    fn update(&self, t: u64, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / (1.0 - self.beta1.powi(t as i32));
        let v_hat = *v / (1.0 - self.beta2.powi(t as i32));
        *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Adam {
            config,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One step on a single flat tensor.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer state sized for another tensor");
        self.t += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.config.update(self.t, p, *g, &mut self.m[i], &mut self.v[i]);
        }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.t += 1;
        let mut offset = 0;
        for (dst, (_, src)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            for (k, (p, g)) in dst.iter_mut().zip(src).enumerate() {
                let i = offset + k;
                self.config.update(self.t, p, *g, &mut self.m[i], &mut self.v[i]);
            }
            offset += dst.len();
        }
        assert_eq!(offset, self.m.len(), "optimizer state sized for another parameter set");
    }
}

/// Adam whose moments only move for rows present in the gradient, so a step
/// leaves every untouched row bit-identical. Bias correction uses the global
/// step count.
#[derive(Debug, Clone, PartialEq)]
pub struct LazyAdam {
    pub config: AdamConfig,
    pub t: u64,
    pub dim: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl LazyAdam {
    pub fn new(config: AdamConfig, rows: usize, dim: usize) -> Self {
        LazyAdam {
            config,
            t: 0,
            dim,
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
        }
    }

    pub fn step(&mut self, table: &mut EmbeddingTable, grads: &RowGrads) {
        self.t += 1;
        for (r, g) in grads.iter() {
            let row = table.row_mut(r);
            let base = r * self.dim;
            for (c, (p, gv)) in row.iter_mut().zip(g).enumerate() {
                self.config.update(self.t, p, *gv, &mut self.m[base + c], &mut self.v[base + c]);
            }
        }
    }
}
