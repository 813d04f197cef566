use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Activation, FourierEmbedding, FourierMode, Linear, Mlp, ParamId, ParamStore, Tape, Var};
use crate::env::Environment;
use crate::Scalar;

use super::LossError;

/// Stacks the features of `states` into a `len × feature_dim` matrix.
pub fn encode_states<E: Environment, T: Scalar>(env: &E, states: &[&E::State]) -> Array2<T> {
    let dim = env.feature_dim();
    let mut buf = vec![0.0; dim];
    let mut out = Array2::zeros((states.len(), dim));
    for (mut row, s) in out.rows_mut().into_iter().zip(states) {
        env.write_features(s, &mut buf);
        for (o, &b) in row.iter_mut().zip(&buf) {
            *o = T::of(b);
        }
    }
    out
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// MLP from state features to one log edge flow per action id.
#[derive(Clone, Debug)]
pub struct EdgeFlowModel {
    pub mlp: Mlp,
    pub num_actions: usize,
}

impl EdgeFlowModel {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        input: usize,
        hidden: &[usize],
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self, LossError> {
        let mlp = Mlp::new(store, "flow", &dims(input, hidden, num_actions), Activation::default(), rng)?;
        Ok(EdgeFlowModel { mlp, num_actions })
    }

    /// Unmasked log edge flows, `rows × num_actions`.
    pub fn log_flows<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        self.mlp.forward(store, x)
    }

    pub fn log_flows_tape<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        self.mlp.forward_tape(tape, store, x)
    }
}

/// Forward and backward logits from one MLP plus a learnable `log Z`.
#[derive(Clone, Debug)]
pub struct TbModel {
    pub mlp: Mlp,
    pub log_z: ParamId,
    pub num_actions: usize,
}

impl TbModel {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        input: usize,
        hidden: &[usize],
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self, LossError> {
        let mlp = Mlp::new(store, "policy", &dims(input, hidden, 2 * num_actions), Activation::default(), rng)?;
        let log_z = store.add("log_z", Array2::zeros((1, 1)));
        Ok(TbModel { mlp, log_z, num_actions })
    }

    /// `rows × 2A`: forward logits then backward logits.
    pub fn logits<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        self.mlp.forward(store, x)
    }
}

/// How the quantile network represents the level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Level fed through a Fourier embedding of the given width.
    Implicit { fourier_dim: usize, mode: FourierMode },
    /// `M` quantiles per action at levels `(k + ½)/M`.
    Explicit { m: usize },
}

impl Default for HeadKind {
    fn default() -> Self {
        HeadKind::Implicit { fourier_dim: 256, mode: FourierMode::Learned { cosines: 64 } }
    }
}

#[derive(Clone, Debug)]
enum Head {
    Implicit { state: Linear, fourier: FourierEmbedding, rest: Mlp },
    Explicit { mlp: Mlp, m: usize },
}

/// Log edge-flow quantiles `Z^log_β(s → s')` for every action.
#[derive(Clone, Debug)]
pub struct QuantileFlowModel {
    head: Head,
    pub num_actions: usize,
    activation: Activation,
}

/// One evaluation row: a state index into the feature matrix and a level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelRow<T> {
    pub state: usize,
    pub level: T,
}

/// Tape output of [`QuantileFlowModel::forward_tape`] with the mapping from
/// `(row, action)` to a flat index usable with [`Tape::take`].
pub struct QuantileOutput {
    pub var: Var,
    layout: Layout,
}

enum Layout {
    PerRow { actions: usize },
    PerState { actions: usize, m: usize, rows: Vec<(usize, usize)> },
}

impl QuantileOutput {
    pub fn flat_index(&self, row: usize, action: usize) -> usize {
        match &self.layout {
            Layout::PerRow { actions } => row * actions + action,
            Layout::PerState { actions, m, rows } => {
                let (s, k) = rows[row];
                s * actions * m + action * m + k
            }
        }
    }
}

/// Grid index of a level on an explicit head of `m` quantiles.
pub fn explicit_index<T: Scalar>(level: T, m: usize) -> usize {
    let k = (level.to_f64_lossy() * m as f64).floor();
    (k.max(0.0) as usize).min(m - 1)
}

impl QuantileFlowModel {
    /// Implicit: `Linear(input, D_F) → act → ⊙ φ(β) → hidden.. → A`.
    /// Explicit: `input → hidden.. → M·A`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        input: usize,
        hidden: &[usize],
        num_actions: usize,
        kind: HeadKind,
        rng: &mut R,
    ) -> Result<Self, LossError> {
        let activation = Activation::default();
        let head = match kind {
            HeadKind::Implicit { fourier_dim, mode } => {
                if fourier_dim == 0 {
                    return Err(LossError::Config("fourier_dim must be at least 1".into()));
                }
                if mode == (FourierMode::Learned { cosines: 0 }) {
                    return Err(LossError::Config("cosine count must be at least 1".into()));
                }
                let state = Linear::new(store, "quantile.state", input, fourier_dim, rng);
                let fourier = FourierEmbedding::with_mode(store, "quantile.fourier", fourier_dim, mode, rng);
                let rest = Mlp::new(store, "quantile.head", &dims(fourier_dim, hidden, num_actions), activation, rng)?;
                Head::Implicit { state, fourier, rest }
            }
            HeadKind::Explicit { m } => {
                if m == 0 {
                    return Err(LossError::Config("explicit head needs M ≥ 1".into()));
                }
                let mlp = Mlp::new(store, "quantile.head", &dims(input, hidden, m * num_actions), activation, rng)?;
                Head::Explicit { mlp, m }
            }
        };
        Ok(QuantileFlowModel { head, num_actions, activation })
    }

    /// Final linear layer producing the quantile outputs.
    pub fn output_layer(&self) -> &Linear {
        match &self.head {
            Head::Implicit { rest, .. } => rest.layers.last().expect("nonempty mlp"),
            Head::Explicit { mlp, .. } => mlp.layers.last().expect("nonempty mlp"),
        }
    }

    pub fn kind(&self) -> HeadKind {
        match &self.head {
            Head::Implicit { fourier, .. } => {
                HeadKind::Implicit { fourier_dim: fourier.dim, mode: fourier.mode }
            }
            Head::Explicit { m, .. } => HeadKind::Explicit { m: *m },
        }
    }

    /// Draws a training level: uniform on `[0, 1)` for the implicit head,
    /// a uniformly chosen grid level for the explicit head.
    pub fn sample_level<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match &self.head {
            Head::Implicit { .. } => T::of(rng.gen::<f64>()),
            Head::Explicit { m, .. } => T::of((rng.gen_range(0..*m) as f64 + 0.5) / *m as f64),
        }
    }

    /// Log quantiles for each row, `rows.len() × A`.
    pub fn log_quantiles<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
        rows: &[LevelRow<T>],
    ) -> Array2<T> {
        let a = self.num_actions;
        match &self.head {
            Head::Implicit { state, fourier, rest } => {
                let mut h = state.forward(store, x);
                self.activation.apply(&mut h);
                let idx: Vec<usize> = rows.iter().map(|r| r.state).collect();
                let levels: Vec<T> = rows.iter().map(|r| r.level).collect();
                let h = h.select(ndarray::Axis(0), &idx) * fourier.forward(store, &levels);
                rest.forward(store, &h)
            }
            Head::Explicit { mlp, m } => {
                let full = mlp.forward(store, x);
                let mut out = Array2::zeros((rows.len(), a));
                for (mut o, r) in out.rows_mut().into_iter().zip(rows) {
                    let k = explicit_index(r.level, *m);
                    for (act, v) in o.iter_mut().enumerate() {
                        *v = full[[r.state, act * m + k]];
                    }
                }
                out
            }
        }
    }

    pub fn forward_tape<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        rows: &[LevelRow<T>],
    ) -> QuantileOutput {
        let actions = self.num_actions;
        match &self.head {
            Head::Implicit { state, fourier, rest } => {
                let h = state.forward_tape(tape, store, x);
                let h = self.activation.apply_tape(tape, h);
                let h = tape.gather_rows(h, rows.iter().map(|r| r.state).collect());
                let levels: Vec<T> = rows.iter().map(|r| r.level).collect();
                let phi = fourier.forward_tape(tape, store, &levels);
                let h = tape.mul(h, phi);
                let var = rest.forward_tape(tape, store, h);
                QuantileOutput { var, layout: Layout::PerRow { actions } }
            }
            Head::Explicit { mlp, m } => {
                let var = mlp.forward_tape(tape, store, x);
                let rows = rows.iter().map(|r| (r.state, explicit_index(r.level, *m))).collect();
                QuantileOutput { var, layout: Layout::PerState { actions, m: *m, rows } }
            }
        }
    }
}
