//! Named parameter storage, initialisation and the Adam optimiser.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::Gradients;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters keyed by hierarchical name (`encoder_c/stage0/weight`, ...).
/// Iteration order is lexicographic, which keeps checkpoints and optimiser
/// updates deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// He-normal convolution kernel `[cout, cin, k, k]` plus zero bias.
    pub fn init_conv(
        &mut self,
        rng: &mut impl Rng,
        prefix: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
        let w = Tensor::from_fn(&[cout, cin, k, k], |_| normal.sample(rng));
        self.insert(format!("{prefix}/weight"), w);
        self.insert(format!("{prefix}/bias"), Tensor::zeros(&[cout]));
    }

    /// He-normal dense weight `[din, dout]` plus zero bias.
    pub fn init_linear(&mut self, rng: &mut impl Rng, prefix: &str, din: usize, dout: usize) {
        let normal = Normal::new(0.0, (2.0 / din as f64).sqrt()).expect("finite std");
        let w = Tensor::from_fn(&[din, dout], |_| normal.sample(rng));
        self.insert(format!("{prefix}/weight"), w);
        self.insert(format!("{prefix}/bias"), Tensor::zeros(&[dout]));
    }
}

/// Learning-rate group a parameter belongs to, decided by its name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Encoders and the shared detection head.
    Base,
    Qfc,
    Gff,
    /// Domain discriminators.
    Adversary,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if name.starts_with("qfc/") {
            Self::Qfc
        } else if name.starts_with("gff/") {
            Self::Gff
        } else if name.starts_with("adv/") {
            Self::Adversary
        } else {
            Self::Base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub base: f64,
    pub qfc: f64,
    pub gff: f64,
    pub adversary: f64,
}

impl GroupRates {
    pub fn rate(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Base => self.base,
            ParamGroup::Qfc => self.qfc,
            ParamGroup::Gff => self.gff,
            ParamGroup::Adversary => self.adversary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that received a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, rates: &GroupRates) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads.params() {
            let lr = rates.rate(ParamGroup::of(name));
            if lr == 0.0 {
                continue;
            }
            let p = store
                .get_mut(name)
                .ok_or_else(|| Error::InvalidParameter(format!("gradient for unknown {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
            }
            let mom = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            for ((w, &gi), (m, v)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
