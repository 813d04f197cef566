use ndarray::Array2;
use rand::Rng;

use crate::autodiff::ParamStore;
use crate::env::Environment;
use crate::quantile::Distortion;
use crate::Scalar;

use super::{encode_states, EdgeFlowModel, LevelRow, LossError, QuantileFlowModel, TbModel};

/// Softmax over the entries where `mask` is set; masked entries get 0.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<f64>, LossError> {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|p| *p.1)
        .map(|p| p.0.to_f64_lossy())
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(LossError::NoValidAction("all actions masked".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &ok)| if ok { (l.to_f64_lossy() - m).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

fn policies_from_rows<E: Environment, T: Scalar>(
    env: &E,
    states: &[&E::State],
    values: &Array2<T>,
) -> Result<Vec<Vec<f64>>, LossError> {
    states
        .iter()
        .zip(values.rows())
        .map(|(s, row)| {
            let mask = env.action_mask(s);
            let logits: Vec<T> = row.iter().copied().take(mask.len()).collect();
            masked_softmax(&logits, &mask).map_err(|_| LossError::NoValidAction(env.display(s)))
        })
        .collect()
}

/// `P_F(s'|s) ∝ F(s→s')` for each state.
pub fn edge_flow_policies<E: Environment, T: Scalar>(
    model: &EdgeFlowModel,
    store: &ParamStore<T>,
    env: &E,
    states: &[&E::State],
) -> Result<Vec<Vec<f64>>, LossError> {
    let x = encode_states(env, states);
    policies_from_rows(env, states, &model.log_flows(store, &x))
}

/// Softmax of the forward half of the TB logits.
pub fn tb_policies<E: Environment, T: Scalar>(
    model: &TbModel,
    store: &ParamStore<T>,
    env: &E,
    states: &[&E::State],
) -> Result<Vec<Vec<f64>>, LossError> {
    let x = encode_states(env, states);
    policies_from_rows(env, states, &model.logits(store, &x))
}

/// Softmax over actions of `(1/N) Σ_i Z^log_{g(β_i)}(s→·)`, with one batch of
/// `β_i ~ U[0, 1)` per state shared by all its actions.
pub fn qm_policies<E: Environment, T: Scalar, R: Rng + ?Sized>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    states: &[&E::State],
    n: usize,
    distortion: &Distortion,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, LossError> {
    if n == 0 {
        return Err(LossError::Config("policy needs N ≥ 1".into()));
    }
    let x = encode_states(env, states);
    let mut rows = Vec::with_capacity(states.len() * n);
    for s in 0..states.len() {
        for _ in 0..n {
            let beta: f64 = rng.gen();
            let level = distortion.apply(beta).map_err(|e| LossError::Config(e.to_string()))?;
            rows.push(LevelRow { state: s, level: T::of(level) });
        }
    }
    let q = model.log_quantiles(store, &x, &rows);
    // Mean shifted by each state's first sample, so identical samples
    // reproduce their value exactly.
    let a = model.num_actions;
    let mut mean = Array2::<T>::zeros((states.len(), a));
    for (k, row) in q.rows().into_iter().enumerate() {
        let base = q.row(k - k % n);
        for ((m, &v), &b) in mean.row_mut(rows[k].state).iter_mut().zip(row).zip(base) {
            *m += v - b;
        }
    }
    for (s, mut m) in mean.rows_mut().into_iter().enumerate() {
        let base = q.row(s * n);
        for (v, &b) in m.iter_mut().zip(base) {
            *v = b + *v / T::of(n as f64);
        }
    }
    policies_from_rows(env, states, &mean)
}
