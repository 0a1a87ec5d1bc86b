//! Named parameter tensors with Adam optimizer state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One named tensor plus its Adam moment buffers.
///
/// Non-trainable entries (batch-norm running statistics) are carried along so
/// checkpoints capture them, but they are skipped by the optimizer and by
/// [`ParamStore::parameter_count`].
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub value: Matrix,
    pub m: Matrix,
    pub v: Matrix,
    pub trainable: bool,
}

/// Named parameter tensors, per-parameter Adam accumulators, and a step counter.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) {
        let (r, c) = value.shape();
        self.entries.insert(
            name.into(),
            ParamEntry {
                value,
                m: Matrix::zeros(r, c),
                v: Matrix::zeros(r, c),
                trainable,
            },
        );
    }

    pub fn get(&self, name: &str) -> &Matrix {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .value
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Entries in deterministic (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }
}

/// Gradients keyed like a [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        let map = store
            .iter()
            .map(|(name, e)| {
                let (r, c) = e.value.shape();
                (name.clone(), Matrix::zeros(r, c))
            })
            .collect();
        Gradients { map }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.map.get_mut(name)
    }

    pub fn accumulate(&mut self, name: &str, grad: &Matrix) {
        match self.map.get_mut(name) {
            Some(g) => g.add_assign(grad),
            None => {
                self.map.insert(name.to_string(), grad.clone());
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.map.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.map.values().fold(0.0, |m, g| m.max(g.max_abs()))
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// One Adam update with bias correction over all trainable entries.
///
/// Gradients missing from `grads` are treated as zero. A non-finite gradient
/// aborts with [`Error::NanGradient`] before any entry is touched.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(Error::NanGradient { param: name.clone() });
        }
    }
    let t = store.step + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let names: Vec<String> = store
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let entry = store.entries.get_mut(&name).expect("known name");
        let zero;
        let g = match grads.get(&name) {
            Some(g) => {
                assert_eq!(
                    g.shape(),
                    entry.value.shape(),
                    "gradient shape for '{name}'"
                );
                g
            }
            None => {
                zero = Matrix::zeros(entry.value.rows(), entry.value.cols());
                &zero
            }
        };
        let gv = g.as_slice();
        let m = entry.m.as_mut_slice();
        let v = entry.v.as_mut_slice();
        let w = entry.value.as_mut_slice();
        for i in 0..w.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    store.step = t;
    Ok(())
}
