use ndarray::{Array2, Zip};

use super::params::ParamStore;
use super::tape::Gradients;
use super::AutodiffError;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every array of one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Result<Self, AutodiffError> {
        if !(config.lr > 0.0) {
            return Err(AutodiffError::BadLayout(format!("learning rate {} must be > 0", config.lr)));
        }
        let zeros = |(_, _, p): (_, _, &Array2<T>)| Array2::zeros(p.raw_dim());
        Ok(Adam {
            config,
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        })
    }

    /// One bias-corrected Adam update. Non-finite gradients leave both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<(), AutodiffError> {
        if self.m.len() != store.len() {
            return Err(AutodiffError::ShapeMismatch {
                what: "adam state".into(),
                expected: (self.m.len(), 1),
                got: (store.len(), 1),
            });
        }
        for id in store.ids() {
            let p = store.get(id);
            if self.m[id.index()].raw_dim() != p.raw_dim() {
                return Err(AutodiffError::ShapeMismatch {
                    what: store.name(id).to_string(),
                    expected: self.m[id.index()].dim(),
                    got: p.dim(),
                });
            }
            if let Some(g) = grads.get(id) {
                if g.raw_dim() != p.raw_dim() {
                    return Err(AutodiffError::ShapeMismatch {
                        what: store.name(id).to_string(),
                        expected: p.dim(),
                        got: g.dim(),
                    });
                }
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(AutodiffError::NonFiniteGradient(store.name(id).to_string()));
                }
            }
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

        for id in store.ids() {
            let i = id.index();
            let p = store.get_mut(id);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            match grads.get(id) {
                Some(g) => {
                    Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                        *m = b1 * *m + one_b1 * g;
                        *v = b2 * *v + one_b2 * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    });
                }
                None => {
                    Zip::from(p).and(m).and(v).for_each(|p, m, v| {
                        *m = b1 * *m;
                        *v = b2 * *v;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    });
                }
            }
        }
        Ok(())
    }
}
