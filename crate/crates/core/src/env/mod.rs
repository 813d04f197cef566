//! Environment contract for GFlowNet sampling on a DAG, plus exact oracles
//! for enumerable environments.
//!
//! Termination is an explicit "stop" action: a terminal object is the pair
//! (state, stopped), so every object is itself a vertex of the DAG.

mod dag;
mod two_arm;

pub use dag::{
    geometric_mean_target, partition_function, reward_target, terminating_probabilities,
    terminating_probabilities_table, uniform_policy, Dag, MAX_ENUMERATED_STATES,
};
pub use two_arm::{Arm, TwoArm, TwoArmState};

use std::fmt::Debug;
use std::hash::Hash;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("environment has {0} states, above the enumeration limit of {MAX_ENUMERATED_STATES}")]
    TooLarge(u128),
    #[error("environment graph has a cycle")]
    Cyclic,
    #[error("children/parents disagree at {0}")]
    Inconsistent(String),
    #[error("state {0} has no children but is not terminal")]
    DeadEnd(String),
    #[error("state {0} is not terminal")]
    NotTerminal(String),
    #[error("state {0} is terminal and accepts no actions")]
    AlreadyTerminal(String),
    #[error("coordinate {value} outside [0, {max}]")]
    OutOfRange { value: usize, max: usize },
    #[error("policy at {state} is not a distribution over its actions: {reason}")]
    BadPolicy { state: String, reason: String },
    #[error("reward at {0} is stochastic; a deterministic reward is required")]
    StochasticReward(String),
    #[error("invalid reward: {0}")]
    BadReward(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("cannot decode state from {0:?}")]
    Decode(Vec<u8>),
}

/// Reward attached to a terminal object.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardDistribution {
    Deterministic(f64),
    /// Finite support `{(value, probability)}`; draws invert the cumulative
    /// probabilities in the listed order.
    Finite(Vec<(f64, f64)>),
}

impl RewardDistribution {
    pub fn finite(atoms: Vec<(f64, f64)>) -> Result<Self, EnvError> {
        if atoms.is_empty() {
            return Err(EnvError::BadReward("empty support".into()));
        }
        if let Some(&(v, p)) = atoms.iter().find(|&&(v, p)| !(v > 0.0 && v.is_finite()) || !(0.0..=1.0).contains(&p)) {
            return Err(EnvError::BadReward(format!("atom ({v}, {p}) needs value > 0 and p in [0, 1]")));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EnvError::BadReward(format!("probabilities sum to {total}")));
        }
        Ok(RewardDistribution::Finite(atoms))
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            RewardDistribution::Deterministic(_) => false,
            RewardDistribution::Finite(atoms) => atoms.iter().filter(|a| a.1 > 0.0).count() > 1,
        }
    }

    /// Draws using a single uniform `u ∈ [0, 1)`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match self {
            RewardDistribution::Deterministic(r) => *r,
            RewardDistribution::Finite(atoms) => {
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.iter().rev().find(|a| a.1 > 0.0).map_or(atoms[0].0, |a| a.0)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardDistribution::Deterministic(r) => *r,
            RewardDistribution::Finite(_) => self.from_uniform(rng.gen()),
        }
    }

    pub fn expectation(&self) -> f64 {
        match self {
            RewardDistribution::Deterministic(r) => *r,
            RewardDistribution::Finite(atoms) => atoms.iter().map(|(v, p)| v * p).sum(),
        }
    }

    /// `E[log R]`.
    pub fn expected_log(&self) -> f64 {
        match self {
            RewardDistribution::Deterministic(r) => r.ln(),
            RewardDistribution::Finite(atoms) => atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .map(|(v, p)| p * v.ln())
                .sum(),
        }
    }
}

/// A DAG environment. Implementations are stateless; randomness is passed in.
pub trait Environment: Send + Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn initial_state(&self) -> Self::State;

    /// Size of the action space, including the stop action.
    fn num_actions(&self) -> usize;

    /// `(action, child)` pairs; empty exactly for terminal states.
    fn children(&self, s: &Self::State) -> Vec<(usize, Self::State)>;

    /// `(parent, action)` pairs such that `action` leads from `parent` to `s`.
    fn parents(&self, s: &Self::State) -> Vec<(Self::State, usize)>;

    fn is_terminal(&self, s: &Self::State) -> bool;

    /// Injective byte encoding (includes the stopped flag).
    fn encode(&self, s: &Self::State) -> Vec<u8>;

    /// Inverse of [`encode`](Environment::encode).
    fn decode(&self, bytes: &[u8]) -> Result<Self::State, EnvError> {
        Err(EnvError::Decode(bytes.to_vec()))
    }

    /// Human-readable, CSV-safe rendering.
    fn display(&self, s: &Self::State) -> String;

    fn feature_dim(&self) -> usize;

    /// Model input for a non-terminal state; `out.len() == feature_dim()`.
    fn write_features(&self, s: &Self::State, out: &mut [f64]);

    /// Reward distribution of a terminal object.
    fn reward(&self, x: &Self::State) -> Result<RewardDistribution, EnvError>;

    /// Mode index of a terminal object, if it counts as a mode.
    fn mode(&self, _x: &Self::State) -> Option<usize> {
        None
    }

    /// Upper bound on distinct mode indices.
    fn num_modes(&self) -> Option<usize> {
        None
    }

    /// Whether the object lies in a designated risky region.
    fn is_risky(&self, _x: &Self::State) -> bool {
        false
    }

    /// Exact number of states if known without enumerating.
    fn state_count(&self) -> Option<u128> {
        None
    }

    /// Whether some terminal reward is stochastic.
    fn has_stochastic_reward(&self) -> bool {
        false
    }

    /// Action mask of a state: `true` where the action leads to a child.
    fn action_mask(&self, s: &Self::State) -> Vec<bool> {
        let mut mask = vec![false; self.num_actions()];
        for (a, _) in self.children(s) {
            mask[a] = true;
        }
        mask
    }

    fn draw_reward<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Result<f64, EnvError> {
        Ok(self.reward(x)?.sample(rng))
    }
}

/// Complete path `s0 → … → x` with the sampled terminal reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<usize>,
    pub reward: f64,
    /// `log P_F` of each chosen action under the unmixed policy.
    pub log_pf: Vec<f64>,
}

impl<S: Clone + Eq + Debug> Trajectory<S> {
    pub fn terminal(&self) -> &S {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Number of transitions (states visited after `s0`).
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Checks the path starts at `s0`, follows declared edges and ends at a
    /// terminal state.
    pub fn validate<E: Environment<State = S>>(&self, env: &E) -> Result<(), EnvError> {
        let first = self.states.first().ok_or_else(|| EnvError::Inconsistent("empty trajectory".into()))?;
        if *first != env.initial_state() {
            return Err(EnvError::Inconsistent(format!("starts at {first:?}")));
        }
        if self.actions.len() + 1 != self.states.len() {
            return Err(EnvError::Inconsistent("action count".into()));
        }
        for (k, w) in self.states.windows(2).enumerate() {
            let ok = env.children(&w[0]).iter().any(|(a, c)| *a == self.actions[k] && *c == w[1]);
            if !ok {
                return Err(EnvError::Inconsistent(format!("no edge {:?} -> {:?}", w[0], w[1])));
            }
        }
        let last = self.terminal();
        if !env.is_terminal(last) {
            return Err(EnvError::NotTerminal(env.display(last)));
        }
        Ok(())
    }
}
