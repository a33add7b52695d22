use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

/// Momentum SGD with global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(store: &ParamStore, lr: f64, momentum: f64, clip: f64) -> Self {
        Self {
            lr,
            momentum,
            clip,
            velocity: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// One update from the accumulated gradients, which are zeroed afterwards. Returns the
    /// factor the gradients were scaled by (1 unless clipping kicked in).
    pub fn step(&mut self, store: &mut ParamStore) -> Result<f64> {
        for p in store.iter() {
            if p.grad.data().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { name: p.name.clone() });
            }
        }
        let norm = store.grad_norm();
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };
        for (p, v) in store.iter_mut().zip(&mut self.velocity) {
            for ((w, g), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(v.data_mut())
            {
                *v = self.momentum * *v + scale * g;
                *w -= self.lr * *v;
            }
        }
        store.zero_grads();
        Ok(scale)
    }
}
