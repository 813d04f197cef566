//! Training objectives (flow matching, trajectory balance, quantile matching)
//! and the forward policies derived from each model.
//!
//! Every loss is built for a batch in one forward pass: the distinct states
//! involved are encoded once, the needed edge entries are picked out with
//! [`Tape::take`](crate::autodiff::Tape::take) and grouped sums of flows use
//! segment log-sum-exp.

mod fm;
mod models;
mod policy;
mod qm;
mod tb;

pub use fm::{fm_loss, fm_loss_states, fm_loss_trajectories};
pub use models::{encode_states, explicit_index, EdgeFlowModel, HeadKind, LevelRow, QuantileFlowModel, QuantileOutput, TbModel};
pub use policy::{edge_flow_policies, masked_softmax, qm_policies, tb_policies};
pub use qm::{qm_delta, qm_loss, qm_loss_states, qm_loss_trajectories, qm_loss_with_levels, qm_loss_with_levels_fixed_target, LevelSet,
    QmSettings,
};
pub use tb::LOG_PROB_FLOOR;
pub use tb::{tb_loss, tb_loss_trajectories, BackwardPolicy};

use std::collections::HashMap;
use std::hash::Hash;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::env::{EnvError, Environment, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("state {0} has no parents; losses apply to non-initial states")]
    NoParents(String),
    #[error("terminal state {0} needs a reward")]
    MissingReward(String),
    #[error("reward {0} is not positive")]
    BadReward(f64),
    #[error("state {0} has no valid action")]
    NoValidAction(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// A state entering a loss, with `log R` when it is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct LossState<S> {
    pub state: S,
    pub log_reward: Option<f64>,
}

/// Loss states of complete trajectories: every state after `s0`, with the
/// sampled reward attached to the terminal one.
pub fn trajectory_loss_states<S: Clone>(trajs: &[Trajectory<S>]) -> Result<Vec<LossState<S>>, LossError> {
    let mut out = Vec::new();
    for t in trajs {
        if !(t.reward > 0.0) {
            return Err(LossError::BadReward(t.reward));
        }
        let n = t.states.len();
        for (k, s) in t.states.iter().enumerate().skip(1) {
            let log_reward = (k + 1 == n).then(|| t.reward.ln());
            out.push(LossState { state: s.clone(), log_reward });
        }
    }
    Ok(out)
}

/// Distinct states in first-seen order.
pub(crate) struct StateTable<S> {
    pub states: Vec<S>,
    index: HashMap<S, usize>,
}

impl<S: Clone + Eq + Hash> StateTable<S> {
    pub fn new() -> Self {
        StateTable { states: Vec::new(), index: HashMap::new() }
    }

    pub fn intern(&mut self, s: &S) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.states.len();
        self.states.push(s.clone());
        self.index.insert(s.clone(), i);
        i
    }

    pub fn features<E: Environment<State = S>, T: crate::Scalar>(&self, env: &E) -> ndarray::Array2<T> {
        let refs: Vec<&S> = self.states.iter().collect();
        encode_states(env, &refs)
    }
}

/// Parent edges of a loss state, rejecting the initial state.
pub(crate) fn parent_edges<E: Environment>(env: &E, s: &E::State) -> Result<Vec<(E::State, usize)>, LossError> {
    let ps = env.parents(s);
    if ps.is_empty() {
        return Err(LossError::NoParents(env.display(s)));
    }
    Ok(ps)
}

/// Out-flow side of a loss state: `Err(log R)` for terminals, else the valid
/// child actions.
pub(crate) fn out_side<E: Environment>(env: &E, item: &LossState<E::State>) -> Result<Result<Vec<usize>, f64>, LossError> {
    if env.is_terminal(&item.state) {
        let lr = item.log_reward.ok_or_else(|| LossError::MissingReward(env.display(&item.state)))?;
        return Ok(Err(lr));
    }
    let acts: Vec<usize> = env.children(&item.state).into_iter().map(|c| c.0).collect();
    if acts.is_empty() {
        return Err(LossError::NoValidAction(env.display(&item.state)));
    }
    Ok(Ok(acts))
}
