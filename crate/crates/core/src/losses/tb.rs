use ndarray::Array2;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::env::{Environment, Trajectory};
use crate::Scalar;

use super::{LossError, StateTable, TbModel};

/// Log-probabilities below this are clamped.
pub const LOG_PROB_FLOOR: f64 = -80.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BackwardPolicy {
    #[default]
    Learned,
    Uniform,
}

/// Per-state lookup of `log Σ exp(logit)` over a set of actions in one half
/// (forward or backward) of the TB logits.
struct LseGroups {
    entries: Vec<usize>,
    offsets: Vec<usize>,
    slot: std::collections::HashMap<usize, usize>,
}

impl LseGroups {
    fn new() -> Self {
        LseGroups { entries: Vec::new(), offsets: vec![0], slot: Default::default() }
    }

    fn slot(&mut self, row: usize, width: usize, shift: usize, acts: impl FnOnce() -> Vec<usize>) -> usize {
        if let Some(&k) = self.slot.get(&row) {
            return k;
        }
        self.entries.extend(acts().into_iter().map(|a| row * width + shift + a));
        self.offsets.push(self.entries.len());
        let k = self.offsets.len() - 2;
        self.slot.insert(row, k);
        k
    }
}

/// Mean over the batch of `[log Z + Σ log P_F − log R − Σ log P_B]²`.
pub fn tb_loss_trajectories<E: Environment, T: Scalar>(
    model: &TbModel,
    store: &ParamStore<T>,
    env: &E,
    trajs: &[Trajectory<E::State>],
    backward: BackwardPolicy,
) -> Result<(Tape<T>, Var), LossError> {
    if trajs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let a = model.num_actions;
    let width = 2 * a;
    let b = trajs.len();
    let mut table = StateTable::new();
    let mut fwd = LseGroups::new();
    let mut bwd = LseGroups::new();
    // (trajectory, flat logit index, lse slot)
    let mut f_terms: Vec<(usize, usize, usize)> = Vec::new();
    let mut b_terms: Vec<(usize, usize, usize)> = Vec::new();
    let mut log_r = Vec::with_capacity(b);
    let mut fixed_pb = vec![T::zero(); b];
    for (t, traj) in trajs.iter().enumerate() {
        if !(traj.reward > 0.0) {
            return Err(LossError::BadReward(traj.reward));
        }
        log_r.push(T::of(traj.reward.ln()));
        for (k, &act) in traj.actions.iter().enumerate() {
            let s = &traj.states[k];
            let row = table.intern(s);
            let slot = fwd.slot(row, width, 0, || env.children(s).into_iter().map(|c| c.0).collect());
            f_terms.push((t, row * width + act, slot));

            let next = &traj.states[k + 1];
            let parents = env.parents(next);
            if parents.len() > 1 {
                match backward {
                    BackwardPolicy::Uniform => fixed_pb[t] += T::of(-(parents.len() as f64).ln()),
                    BackwardPolicy::Learned => {
                        let r = table.intern(next);
                        let slot = bwd.slot(r, width, a, || parents.iter().map(|p| p.1).collect());
                        b_terms.push((t, r * width + a + act, slot));
                    }
                }
            }
        }
    }

    let mut tape = Tape::new();
    let x = tape.constant(table.features(env));
    let logits = model.mlp.forward_tape(&mut tape, store, x);
    let membership = |terms: &[(usize, usize, usize)], sign: f64| {
        let mut m = Array2::zeros((b, terms.len()));
        for (k, &(t, _, _)) in terms.iter().enumerate() {
            m[[t, k]] = T::of(sign);
        }
        m
    };
    let log_prob_sum = |tape: &mut Tape<T>, groups: LseGroups, terms: &[(usize, usize, usize)], sign: f64| {
        let picked = tape.take(logits, groups.entries);
        let lse = tape.segment_logsumexp(picked, groups.offsets);
        let num = tape.take(logits, terms.iter().map(|e| e.1).collect());
        let den = tape.take(lse, terms.iter().map(|e| e.2).collect());
        let lp = tape.sub(num, den);
        let lp = tape.clamp_min(lp, T::of(LOG_PROB_FLOOR));
        let m = tape.constant(membership(terms, sign));
        tape.matmul(m, lp)
    };

    let mut total = log_prob_sum(&mut tape, fwd, &f_terms, 1.0);
    if !b_terms.is_empty() {
        let pb = log_prob_sum(&mut tape, bwd, &b_terms, -1.0);
        total = tape.add(total, pb);
    }
    let log_z = tape.param(store, model.log_z);
    let total = tape.add_row(total, log_z);
    let rhs: Vec<T> = log_r.iter().zip(&fixed_pb).map(|(&r, &pb)| r + pb).collect();
    let rhs = tape.constant(Array2::from_shape_vec((b, 1), rhs).expect("column"));
    let diff = tape.sub(total, rhs);
    let sq = tape.square(diff);
    let sum = tape.sum(sq);
    let loss = tape.scale(sum, T::of(1.0 / b as f64));
    tape.check_finite()?;
    Ok((tape, loss))
}

/// Trajectory-balance loss of one complete trajectory.
pub fn tb_loss<E: Environment, T: Scalar>(
    model: &TbModel,
    store: &ParamStore<T>,
    env: &E,
    traj: &Trajectory<E::State>,
    backward: BackwardPolicy,
) -> Result<T, LossError> {
    let (tape, loss) = tb_loss_trajectories(model, store, env, std::slice::from_ref(traj), backward)?;
    Ok(tape.scalar(loss))
}
