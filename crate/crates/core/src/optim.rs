//! Adam / AdamW over parameter groups with global-norm clipping.

use serde::{Deserialize, Serialize};

use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// One adaptive optimizer owning moment estimates for a fixed set of
/// parameters. Weight decay, when positive, is decoupled (AdamW).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub ids: Vec<usize>,
    pub weight_decay: f64,
    pub t: u64,
    #[serde(skip)]
    pub m: Vec<Tensor>,
    #[serde(skip)]
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(ids: Vec<usize>, store: &ParamStore, weight_decay: f64) -> Self {
        let zeros = |&id: &usize| {
            let (r, c) = store.entry(id).value.shape();
            Tensor::zeros(r, c)
        };
        Adam {
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
            ids,
            weight_decay,
            t: 0,
        }
    }

    /// One update; `lr_of` gives the learning rate per parameter id.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Tensor>],
        lr_of: impl Fn(usize) -> f64,
    ) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (k, &id) in self.ids.iter().enumerate() {
            let lr = lr_of(id);
            let value = store.value_mut(id);
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let g = grads[id].as_ref();
            for (idx, p) in value.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g.data()[idx]);
                m[idx] = BETA1 * m[idx] + (1.0 - BETA1) * gi;
                v[idx] = BETA2 * v[idx] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                if self.weight_decay > 0.0 {
                    *p -= lr * self.weight_decay * *p;
                }
                *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

/// The two optimizers used in training: AdamW for encoder and coreference
/// parameters, Adam for the auxiliary heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub coreference: Adam,
    pub auxiliary: Adam,
}

impl Optimizer {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let mut main = store.ids_in(ParamGroup::Encoder);
        main.extend(store.ids_in(ParamGroup::Coreference));
        main.sort_unstable();
        Optimizer {
            coreference: Adam::new(main, store, weight_decay),
            auxiliary: Adam::new(store.ids_in(ParamGroup::Auxiliary), store, 0.0),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Tensor>],
        encoder_lr: f64,
        task_lr: f64,
    ) {
        let groups: Vec<ParamGroup> = store.iter().map(|e| e.group).collect();
        let lr_of = |id: usize| {
            if groups[id] == ParamGroup::Encoder {
                encoder_lr
            } else {
                task_lr
            }
        };
        self.coreference.step(store, grads, lr_of);
        self.auxiliary.step(store, grads, lr_of);
    }
}

/// Rescales gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(Tensor::squared_norm)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamGroup;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.add(
            "w",
            ParamGroup::Auxiliary,
            Tensor::from_vec(1, 2, vec![1.0, -1.0]),
        );
        let mut opt = Adam::new(vec![0], &store, 0.0);
        let grads = vec![Some(Tensor::from_vec(1, 2, vec![3.0, -0.5]))];
        opt.step(&mut store, &grads, |_| 0.1);
        let w = store.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_only_in_first_group() {
        let mut store = ParamStore::new();
        store.add("a", ParamGroup::Coreference, Tensor::scalar(2.0));
        store.add("b", ParamGroup::Auxiliary, Tensor::scalar(2.0));
        let mut opt = Optimizer::new(&store, 0.5);
        opt.step(&mut store, &[None, None], 0.1, 0.1);
        assert!((store.get("a").unwrap().item() - 1.9).abs() < 1e-12);
        assert_eq!(store.get("b").unwrap().item(), 2.0);
    }

    #[test]
    fn clipping() {
        let mut grads = vec![Some(Tensor::from_vec(1, 2, vec![3.0, 4.0])), None];
        assert_eq!(clip_global_norm(&mut grads, 1.0), 5.0);
        let g = grads[0].as_ref().unwrap().data();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        let mut small = vec![Some(Tensor::scalar(0.5))];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].as_ref().unwrap().item(), 0.5);
    }
}
