//! Named parameter tensors with Adam state and the warm-up/decay learning
//! rate schedule.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tape::{cast, Scalar, Tape, Var};
use crate::ClickseqError;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Linear warm-up followed by exponential decay:
/// `lr(step) = base_lr · min(step/warmup, decay^((step-warmup)/decay_steps))`.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup: u64,
    pub decay: f64,
    pub decay_steps: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base_lr: 1e-3, warmup: 1000, decay: 0.98, decay_steps: 1000 }
    }
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        let ramp = step as f64 / self.warmup as f64;
        let decayed = self
            .decay
            .powf((step as f64 - self.warmup as f64) / self.decay_steps as f64);
        self.base_lr * ramp.min(decayed)
    }
}

#[derive(Debug, Clone)]
struct Slot<F: Scalar> {
    value: Array2<F>,
    m: Array2<F>,
    v: Array2<F>,
}

/// Named parameters plus Adam moment buffers. Insertion order is stable and
/// defines the checkpoint layout.
#[derive(Debug, Clone)]
pub struct ParameterStore<F: Scalar> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    slots: Vec<Slot<F>>,
    step: u64,
}

impl<F: Scalar> Default for ParameterStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParameterStore<F> {
    pub fn new() -> Self {
        ParameterStore { names: Vec::new(), index: HashMap::new(), slots: Vec::new(), step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn def(&mut self, name: &str, value: Array2<F>) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let dim = value.dim();
        self.index.insert(name.to_string(), self.slots.len());
        self.names.push(name.to_string());
        self.slots.push(Slot { value, m: Array2::zeros(dim), v: Array2::zeros(dim) });
    }

    /// Truncated normal init (resample outside 2 std), the default for
    /// embeddings and linear weights.
    pub fn def_trunc_normal(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) {
        let arr = Array2::from_shape_fn((rows, cols), |_| {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= 2.0 {
                    return cast::<F>(z * std);
                }
            }
        });
        self.def(name, arr);
    }

    pub fn def_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.def(name, Array2::zeros((rows, cols)));
    }

    pub fn def_ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.def(name, Array2::from_elem((rows, cols), F::one()));
    }

    pub fn get(&self, name: &str) -> &Array2<F> {
        let idx = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.slots[idx].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<F> {
        let idx = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &mut self.slots[idx].value
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub(crate) fn moments(&self, name: &str) -> (&Array2<F>, &Array2<F>) {
        let idx = self.index[name];
        (&self.slots[idx].m, &self.slots[idx].v)
    }

    pub(crate) fn set_entry(&mut self, name: &str, value: Array2<F>, m: Array2<F>, v: Array2<F>) {
        match self.index.get(name) {
            Some(&idx) => {
                self.slots[idx] = Slot { value, m, v };
            }
            None => {
                self.index.insert(name.to_string(), self.slots.len());
                self.names.push(name.to_string());
                self.slots.push(Slot { value, m, v });
            }
        }
    }

    /// Snapshot of all parameter values (moments excluded).
    pub fn values_snapshot(&self) -> Vec<(String, Array2<F>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.slots.iter().map(|s| s.value.clone()))
            .collect()
    }

    pub fn restore_values(&mut self, snapshot: &[(String, Array2<F>)]) {
        for (name, value) in snapshot {
            let idx = self.index[name];
            self.slots[idx].value = value.clone();
        }
    }

    /// One Adam update from per-name gradients. Missing names are treated as
    /// zero gradients (their moments still decay).
    pub fn adam_step(
        &mut self,
        grads: &HashMap<String, Array2<F>>,
        schedule: &LrSchedule,
        adam: &AdamConfig,
    ) {
        self.step += 1;
        let lr = cast::<F>(schedule.lr(self.step));
        let b1 = cast::<F>(adam.beta1);
        let b2 = cast::<F>(adam.beta2);
        let eps = cast::<F>(adam.eps);
        let one = F::one();
        let bc1 = one - cast::<F>(adam.beta1.powi(self.step as i32));
        let bc2 = one - cast::<F>(adam.beta2.powi(self.step as i32));
        for (name, slot) in self.names.iter().zip(self.slots.iter_mut()) {
            let zero;
            let g = match grads.get(name) {
                Some(g) => g,
                None => {
                    zero = Array2::zeros(slot.value.dim());
                    &zero
                }
            };
            slot.m.zip_mut_with(g, |m, &g| *m = b1 * *m + (one - b1) * g);
            slot.v.zip_mut_with(g, |v, &g| *v = b2 * *v + (one - b2) * g * g);
            for ((p, &m), &v) in slot.value.iter_mut().zip(slot.m.iter()).zip(slot.v.iter()) {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Binds a read-only parameter store to a tape: parameters are leased onto
/// the tape once per name, and gradients can be collected back by name after
/// the backward pass.
pub struct Session<'a, F: Scalar> {
    pub tape: &'a Tape<F>,
    pub store: &'a ParameterStore<F>,
    leased: std::cell::RefCell<HashMap<String, Var>>,
}

impl<'a, F: Scalar> Session<'a, F> {
    pub fn new(tape: &'a Tape<F>, store: &'a ParameterStore<F>) -> Self {
        Session { tape, store, leased: std::cell::RefCell::new(HashMap::new()) }
    }

    /// Leases the named parameter onto the tape (once per name).
    pub fn p(&self, name: &str) -> Var {
        if let Some(v) = self.leased.borrow().get(name) {
            return *v;
        }
        let v = self.tape.leaf(self.store.get(name).clone());
        self.leased.borrow_mut().insert(name.to_string(), v);
        v
    }

    /// Gradients of the loss w.r.t. every leased parameter.
    pub fn collect_grads(&self, grads: &mut super::tape::Grads<F>) -> HashMap<String, Array2<F>> {
        let mut out = HashMap::new();
        for (name, var) in self.leased.borrow().iter() {
            if let Some(g) = grads.take(*var) {
                out.insert(name.clone(), g);
            }
        }
        out
    }
}

/// Validates that a gradient map only names known parameters.
pub fn check_grad_names<F: Scalar>(
    store: &ParameterStore<F>,
    grads: &HashMap<String, Array2<F>>,
) -> Result<(), ClickseqError> {
    for name in grads.keys() {
        if !store.contains(name) {
            return Err(ClickseqError::Config(format!("gradient for unknown parameter {name}")));
        }
    }
    Ok(())
}
