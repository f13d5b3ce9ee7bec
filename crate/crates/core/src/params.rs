//! Named parameter tensors, initialization, and the per-pass graph context.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, Tensor, Var};

/// Optimizer grouping. Encoder and coreference parameters share one AdamW
/// optimizer; auxiliary heads get their own Adam.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Coreference,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter `{name}`"
        );
        self.entries.push(ParamEntry {
            name: name.clone(),
            group,
            value,
        });
        self.index.insert(name, self.entries.len() - 1);
        self.entries.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.entries[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(|i| &mut self.entries[i].value)
    }

    pub fn entry(&self, id: usize) -> &ParamEntry {
        &self.entries[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.entries[id].value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn ids_in(&self, group: ParamGroup) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].group == group)
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.data().len()).sum()
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&mut self) {
        for e in &mut self.entries {
            e.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Deterministic initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, rows: usize, cols: usize, bound: f64) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    /// Glorot/Xavier uniform for a `fan_in × fan_out` weight.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize) -> Tensor {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(fan_in, fan_out, bound)
    }

    /// Rows with unit expected squared norm.
    pub fn embedding(&mut self, rows: usize, dim: usize) -> Tensor {
        self.uniform(rows, dim, (3.0 / dim as f64).sqrt())
    }
}

/// A tape plus lazily bound parameters for one forward pass.
pub struct Graph<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: HashMap<usize, Var>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    /// The tape leaf for parameter `name`, bound once per pass.
    pub fn param(&mut self, name: &str) -> Var {
        let id = self
            .store
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        if let Some(v) = self.bound.get(&id) {
            return *v;
        }
        let v = self.tape.param(id, self.store.entry(id).value.clone());
        self.bound.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }
}

/// Feed-forward network: `layers` hidden ReLU layers of width `width`, then a
/// linear map to `out` units (bias optional).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ffnn {
    pub prefix: String,
    pub input: usize,
    pub layers: usize,
    pub width: usize,
    pub out: usize,
    pub out_bias: bool,
}

impl Ffnn {
    pub fn register(&self, store: &mut ParamStore, group: ParamGroup, init: &mut Initializer) {
        let mut fan_in = self.input;
        for k in 0..self.layers {
            store.add(
                format!("{}.h{k}.w", self.prefix),
                group,
                init.glorot(fan_in, self.width),
            );
            store.add(
                format!("{}.h{k}.b", self.prefix),
                group,
                Tensor::zeros(1, self.width),
            );
            fan_in = self.width;
        }
        store.add(
            format!("{}.out.w", self.prefix),
            group,
            init.glorot(fan_in, self.out),
        );
        if self.out_bias {
            store.add(
                format!("{}.out.b", self.prefix),
                group,
                Tensor::zeros(1, self.out),
            );
        }
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let mut h = x;
        for k in 0..self.layers {
            let w = g.param(&format!("{}.h{k}.w", self.prefix));
            let b = g.param(&format!("{}.h{k}.b", self.prefix));
            let z = g.tape.matmul(h, w);
            let z = g.tape.add_row(z, b);
            h = g.tape.relu(z);
        }
        let w = g.param(&format!("{}.out.w", self.prefix));
        let mut y = g.tape.matmul(h, w);
        if self.out_bias {
            let b = g.param(&format!("{}.out.b", self.prefix));
            y = g.tape.add_row(y, b);
        }
        y
    }
}
