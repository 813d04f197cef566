//! Dense layers, MLPs and the Fourier embedding of quantile levels.

use ndarray::Array2;
use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::AutodiffError;
use crate::Scalar;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu(0.01)
    }
}

impl Activation {
    fn slope<T: Scalar>(self) -> T {
        match self {
            Activation::LeakyRelu(s) => T::of(s),
            Activation::Relu => T::zero(),
        }
    }

    pub fn apply<T: Scalar>(self, x: &mut Array2<T>) {
        let slope = self.slope::<T>();
        x.mapv_inplace(|v| if v >= T::zero() { v } else { v * slope });
    }

    pub fn apply_tape<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        tape.leaky_relu(x, self.slope())
    }
}

/// `y = x·W + b` with `W` stored as `fan_in × fan_out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights and biases uniform on `±sqrt(1/fan_in)`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            T::of(rng.gen_range(-bound..=bound))
        });
        let b = Array2::from_shape_simple_fn((1, fan_out), || T::of(rng.gen_range(-bound..=bound)));
        Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        x.dot(store.get(self.weight)) + store.get(self.bias)
    }

    pub fn forward_tape<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Var {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w);
        tape.add_row(h, b)
    }
}

/// Stack of [`Linear`] layers with an activation between consecutive layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`; needs at least two entries.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(AutodiffError::BadLayout(format!("mlp dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        let mut h = self.layers[0].forward(store, x);
        for layer in &self.layers[1..] {
            self.activation.apply(&mut h);
            h = layer.forward(store, &h);
        }
        h
    }

    pub fn forward_tape<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let mut h = self.layers[0].forward_tape(tape, store, x);
        for layer in &self.layers[1..] {
            h = self.activation.apply_tape(tape, h);
            h = layer.forward_tape(tape, store, h);
        }
        h
    }
}

/// `Σ_{i=0}^{dim} cos(π·i·β)`: the level-dependent part shared by every
/// Fourier feature.
pub fn cosine_sum<T: Scalar>(beta: T, dim: usize) -> T {
    let pb = T::of(std::f64::consts::PI) * beta;
    (0..=dim).map(|i| (pb * T::of(i as f64)).cos()).sum()
}

/// Fourier features of a quantile level: entry `j` is
/// `ReLU(Σ_{i=0}^{D_F} cos(π·i·β) + b_j)` with `D_F = biases.len()`.
pub fn fourier_features<T: Scalar>(beta: T, biases: &[T]) -> Result<Vec<T>, AutodiffError> {
    if !(beta >= T::zero() && beta <= T::one()) {
        return Err(AutodiffError::LevelOutOfRange(beta.to_f64_lossy()));
    }
    if biases.is_empty() {
        return Err(AutodiffError::BadLayout("fourier dimension must be ≥ 1".into()));
    }
    let c = cosine_sum(beta, biases.len());
    Ok(biases.iter().map(|&b| (c + b).max(T::zero())).collect())
}

/// How [`FourierEmbedding`] turns a level into features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FourierMode {
    /// `ReLU(Σ_{i=0}^{D_F} cos(π·i·β) + b_j)`, as [`fourier_features`].
    Literal,
    /// The same with the cosine sum divided by `D_F + 1`, keeping it in
    /// `[-1, 1]` instead of letting it reach `D_F + 1` near `β = 0`.
    Normalized,
    /// `ReLU(Σ_{i<n} cos(π·i·β)·w_ij + b_j)` with learned weights over `n`
    /// cosines, so each feature responds to the level differently.
    Learned { cosines: usize },
}

/// Learnable Fourier embedding of quantile levels; biases start uniform on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct FourierEmbedding {
    pub bias: ParamId,
    /// `cosines × dim` weights in [`FourierMode::Learned`].
    pub weight: Option<ParamId>,
    pub dim: usize,
    pub mode: FourierMode,
}

impl FourierEmbedding {
    /// [`FourierMode::Literal`].
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        Self::with_mode(store, name, dim, FourierMode::Literal, rng)
    }

    /// [`FourierMode::Normalized`].
    pub fn normalized<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        Self::with_mode(store, name, dim, FourierMode::Normalized, rng)
    }

    /// Learned weights start uniform on `±sqrt(1/cosines)`.
    pub fn with_mode<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        mode: FourierMode,
        rng: &mut R,
    ) -> Self {
        let weight = match mode {
            FourierMode::Learned { cosines } => {
                let bound = (1.0 / cosines.max(1) as f64).sqrt();
                let w = Array2::from_shape_simple_fn((cosines, dim), || T::of(rng.gen_range(-bound..=bound)));
                Some(store.add(format!("{name}.weight"), w))
            }
            _ => None,
        };
        let b = Array2::from_shape_simple_fn((1, dim), || T::of(rng.gen_range(0.0..=1.0)));
        FourierEmbedding { bias: store.add(format!("{name}.bias"), b), weight, dim, mode }
    }

    /// Pre-activation level term: one column per feature, or one per cosine
    /// in learned mode.
    fn cosines<T: Scalar>(&self, betas: &[T]) -> Array2<T> {
        let pi = T::of(std::f64::consts::PI);
        match self.mode {
            FourierMode::Learned { cosines } => {
                Array2::from_shape_fn((betas.len(), cosines), |(r, i)| (pi * betas[r] * T::of(i as f64)).cos())
            }
            FourierMode::Literal | FourierMode::Normalized => {
                let scale = if self.mode == FourierMode::Normalized { 1.0 / (self.dim as f64 + 1.0) } else { 1.0 };
                let mut c = Array2::zeros((betas.len(), self.dim));
                for (mut row, &b) in c.rows_mut().into_iter().zip(betas) {
                    row.fill(cosine_sum(b, self.dim) * T::of(scale));
                }
                c
            }
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, betas: &[T]) -> Array2<T> {
        let c = self.cosines(betas);
        let pre = match self.weight {
            Some(w) => c.dot(store.get(w)),
            None => c,
        };
        let mut phi = pre + store.get(self.bias);
        Activation::Relu.apply(&mut phi);
        phi
    }

    pub fn forward_tape<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, betas: &[T]) -> Var {
        let mut pre = tape.constant(self.cosines(betas));
        if let Some(w) = self.weight {
            let w = tape.param(store, w);
            pre = tape.matmul(pre, w);
        }
        let b = tape.param(store, self.bias);
        let pre = tape.add_row(pre, b);
        tape.relu(pre)
    }
}
