use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tape::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Parameters whose gradient is absent are left
/// untouched, moments included.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = store.ids().map(|id| Array2::zeros(store.get(id).dim())).collect();
        Self {
            config,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        assert_eq!(grads.len(), store.len(), "gradient/store mismatch");
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for id in store.ids() {
            let Some(g) = grads.get(id) else { continue };
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }

    /// Moment arrays named after the parameters they track.
    pub fn export(&self, store: &ParamStore, prefix: &str) -> Vec<(String, Matrix)> {
        let mut out = Vec::with_capacity(2 * store.len());
        for id in store.ids() {
            let name = store.name(id);
            out.push((format!("{prefix}.m/{name}"), self.m[id.index()].clone()));
            out.push((format!("{prefix}.v/{name}"), self.v[id.index()].clone()));
        }
        out
    }

    pub fn import(
        &mut self,
        store: &ParamStore,
        prefix: &str,
        steps: u64,
        lookup: impl Fn(&str) -> Option<Matrix>,
    ) -> Result<()> {
        for id in store.ids() {
            let name = store.name(id);
            for (kind, slot) in [("m", &mut self.m), ("v", &mut self.v)] {
                let key = format!("{prefix}.{kind}/{name}");
                let value = lookup(&key).ok_or_else(|| Error::Checkpoint(format!("missing optimizer array {key}")))?;
                if value.dim() != store.get(id).dim() {
                    return Err(Error::Checkpoint(format!("optimizer array {key} has wrong shape")));
                }
                slot[id.index()] = value;
            }
        }
        self.steps = steps;
        Ok(())
    }
}
