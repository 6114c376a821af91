use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// The parameter vector of one function approximator: an ordered list of named tensors.
///
/// The `uid` only identifies the set on a [`super::Tape`]; it is regenerated on clone and
/// deserialisation so a target copy can share a tape with its source.
#[derive(Debug, Serialize, Deserialize)]
pub struct Params {
    #[serde(skip, default = "fresh_uid")]
    uid: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Clone for Params {
    fn clone(&self) -> Self {
        Self { uid: fresh_uid(), names: self.names.clone(), tensors: self.tensors.clone() }
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::new()
    }
}

impl Params {
    pub fn new() -> Self {
        Self { uid: fresh_uid(), names: Vec::new(), tensors: Vec::new() }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Glorot-uniform matrix.
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_normal(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> usize {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_const(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> usize {
        self.add(name, Tensor::filled(rows, cols, v))
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.count(), "flat parameter length mismatch");
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn copy_from(&mut self, other: &Params) {
        assert_eq!(self.count(), other.count());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.copy_from_slice(&b.data);
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Tensor::shape).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Adaptive-moment optimiser with optional global-norm gradient clipping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.tensors.len());
        if self.m.is_empty() {
            self.m = params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
            self.v = self.m.clone();
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.tensors.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i] * scale;
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
