use ndarray::Array2;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::env::{Environment, Trajectory};
use crate::Scalar;

use super::{out_side, parent_edges, trajectory_loss_states, EdgeFlowModel, LossError, LossState, StateTable};

/// `scale · Σ_s [log Σ_parents F(p→s) − log Σ_children F(s→c)]²`, with the
/// children side replaced by `log R` at terminal states.
pub fn fm_loss_states<E: Environment, T: Scalar>(
    model: &EdgeFlowModel,
    store: &ParamStore<T>,
    env: &E,
    items: &[LossState<E::State>],
    scale: T,
) -> Result<(Tape<T>, Var), LossError> {
    if items.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let a = model.num_actions;
    let mut table = StateTable::new();
    let mut in_idx = Vec::new();
    let mut in_off = vec![0];
    let mut out_idx = Vec::new();
    let mut out_off = vec![0];
    let mut log_rewards = Vec::new();
    // Position of each item's out-flow: Ok(k) is the k-th segment, Err(k) the k-th reward.
    let mut out_pos: Vec<Result<usize, usize>> = Vec::with_capacity(items.len());
    for item in items {
        for (p, act) in parent_edges(env, &item.state)? {
            in_idx.push(table.intern(&p) * a + act);
        }
        in_off.push(in_idx.len());
        match out_side(env, item)? {
            Err(lr) => {
                out_pos.push(Err(log_rewards.len()));
                log_rewards.push(T::of(lr));
            }
            Ok(acts) => {
                let row = table.intern(&item.state);
                out_idx.extend(acts.iter().map(|&act| row * a + act));
                out_off.push(out_idx.len());
                out_pos.push(Ok(out_off.len() - 2));
            }
        }
    }

    let mut tape = Tape::new();
    let x = tape.constant(table.features(env));
    let flows = model.log_flows_tape(&mut tape, store, x);
    let picked_in = tape.take(flows, in_idx);
    let inflow = tape.segment_logsumexp(picked_in, in_off);

    let segments = out_off.len() - 1;
    let mut parts = Vec::new();
    if segments > 0 {
        let picked_out = tape.take(flows, out_idx);
        parts.push(tape.segment_logsumexp(picked_out, out_off));
    }
    if !log_rewards.is_empty() {
        let n = log_rewards.len();
        parts.push(tape.constant(Array2::from_shape_vec((n, 1), log_rewards).expect("column")));
    }
    let out_all = tape.concat_rows(&parts);
    let sel = out_pos.iter().map(|p| match *p {
        Ok(k) => k,
        Err(k) => segments + k,
    });
    let outflow = tape.take(out_all, sel.collect());
    let diff = tape.sub(inflow, outflow);
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    let loss = tape.scale(total, scale);
    tape.check_finite()?;
    Ok((tape, loss))
}

/// Flow-matching loss at a single non-initial state.
pub fn fm_loss<E: Environment, T: Scalar>(
    model: &EdgeFlowModel,
    store: &ParamStore<T>,
    env: &E,
    state: &E::State,
    log_reward: Option<f64>,
) -> Result<T, LossError> {
    let item = LossState { state: state.clone(), log_reward };
    let (tape, loss) = fm_loss_states(model, store, env, &[item], T::one())?;
    Ok(tape.scalar(loss))
}

/// Per-state losses summed along each trajectory and averaged over the batch.
pub fn fm_loss_trajectories<E: Environment, T: Scalar>(
    model: &EdgeFlowModel,
    store: &ParamStore<T>,
    env: &E,
    trajs: &[Trajectory<E::State>],
) -> Result<(Tape<T>, Var), LossError> {
    if trajs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let items = trajectory_loss_states(trajs)?;
    fm_loss_states(model, store, env, &items, T::of(1.0 / trajs.len() as f64))
}
