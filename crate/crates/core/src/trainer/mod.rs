//! Training loop: batched trajectory sampling, one Adam step per batch,
//! visit statistics and periodic metrics.

mod buffer;
mod checkpoint;
mod metrics;
mod sampler;
#[cfg(test)]
mod tests;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AdamConfig, AutodiffError, Var};
use crate::config::{Algo, AlgoConfig, ConfigError, TrainConfig};
use crate::env::{reward_target, terminating_probabilities_table, Dag, EnvError, Environment, Trajectory};
use crate::losses::{
    edge_flow_policies, fm_loss_trajectories, qm_loss_trajectories, qm_policies, tb_loss_trajectories, tb_policies,
    BackwardPolicy, EdgeFlowModel, LossError, QmSettings, QuantileFlowModel, TbModel,
};
use crate::quantile::Distortion;
use crate::{Adam, ParamStore, Tape};

pub use buffer::VisitBuffer;
pub use checkpoint::{checkpoint_meta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{MetricsRecord, CSV_HEADER};
pub use sampler::{sample_categorical, sample_trajectories};

/// Environments with at most this many states get an enumerated DAG for the
/// exact metrics.
pub const MAX_DAG_STATES: u128 = 2_000_000;
/// Default terminal-visit window.
pub const DEFAULT_WINDOW: usize = 200_000;
/// Number of best distinct objects kept for the top-k rewards.
pub const TOP_CAPACITY: usize = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("dead end at {0}")]
    DeadEnd(String),
    #[error("non-finite loss at step {step}\n{dump}")]
    NonFinite { step: u64, dump: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parameterized objective together with its sampling policy.
#[derive(Clone, Debug)]
pub enum Model {
    Fm(EdgeFlowModel),
    Tb { model: TbModel, backward: BackwardPolicy },
    Qm { model: QuantileFlowModel, settings: QmSettings<f64>, policy_n: usize, distortion: Distortion },
}

impl Model {
    pub fn build<E: Environment, R: Rng + ?Sized>(
        env: &E,
        algo: &AlgoConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let (input, actions) = (env.feature_dim(), env.num_actions());
        Ok(match algo.algo {
            Algo::Fm => Model::Fm(EdgeFlowModel::new(store, input, &algo.hidden, actions, rng)?),
            Algo::Tb => Model::Tb {
                model: TbModel::new(store, input, &algo.hidden, actions, rng)?,
                backward: algo.backward_policy(),
            },
            Algo::Qm => Model::Qm {
                model: QuantileFlowModel::new(store, input, &algo.hidden, actions, algo.head_kind(), rng)?,
                settings: algo.qm_settings()?,
                policy_n: algo.policy_n,
                distortion: algo.distortion()?,
            },
        })
    }

    /// Forward policy at each state. Quantile models draw their levels from `rng`.
    pub fn policies<E: Environment, R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        env: &E,
        states: &[&E::State],
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>, LossError> {
        match self {
            Model::Fm(m) => edge_flow_policies(m, store, env, states),
            Model::Tb { model, .. } => tb_policies(model, store, env, states),
            Model::Qm { model, policy_n, distortion, .. } => {
                qm_policies(model, store, env, states, *policy_n, distortion, rng)
            }
        }
    }

    /// Batch loss on a tape ready for backpropagation.
    pub fn loss<E: Environment, R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        env: &E,
        trajs: &[Trajectory<E::State>],
        rng: &mut R,
    ) -> Result<(Tape, Var), LossError> {
        match self {
            Model::Fm(m) => fm_loss_trajectories(m, store, env, trajs),
            Model::Tb { model, backward } => tb_loss_trajectories(model, store, env, trajs, *backward),
            Model::Qm { model, settings, .. } => qm_loss_trajectories(model, store, env, trajs, settings, rng),
        }
    }
}

struct Exact<S> {
    dag: Dag<S>,
    /// `R/Z` over the DAG's terminals; absent for stochastic rewards.
    target: Option<Vec<f64>>,
}

/// One training run over an environment.
pub struct Trainer<E: Environment> {
    env: E,
    algo: AlgoConfig,
    config: TrainConfig,
    model: Model,
    store: ParamStore,
    adam: Adam,
    rng: ChaCha8Rng,
    step: u64,
    states_visited: u64,
    buffer: VisitBuffer<E::State>,
    exact: Option<Exact<E::State>>,
    loss_sum: f64,
    loss_count: u64,
    meta: String,
}

impl<E: Environment> Trainer<E> {
    pub fn new(env: E, algo: AlgoConfig, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let model = Model::build(&env, &algo, &mut store, &mut rng)?;
        let adam = Adam::new(AdamConfig::with_lr(config.lr), &store)?;
        let exact = Self::enumerate(&env)?;
        let window = config.window.unwrap_or_else(|| match &exact {
            Some(x) => DEFAULT_WINDOW.min(50 * x.dag.terminals().len()),
            None => DEFAULT_WINDOW,
        });
        let buffer = VisitBuffer::new(window, config.risky_window, TOP_CAPACITY);
        Ok(Trainer {
            env,
            algo,
            config,
            model,
            store,
            adam,
            rng,
            step: 0,
            states_visited: 0,
            buffer,
            exact,
            loss_sum: 0.0,
            loss_count: 0,
            meta: String::new(),
        })
    }

    fn enumerate(env: &E) -> Result<Option<Exact<E::State>>, TrainError> {
        match env.state_count() {
            Some(n) if n <= MAX_DAG_STATES => {}
            _ => return Ok(None),
        }
        let dag = Dag::build(env)?;
        let target = if env.has_stochastic_reward() { None } else { Some(reward_target(env, &dag)?) };
        Ok(Some(Exact { dag, target }))
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn algo(&self) -> &AlgoConfig {
        &self.algo
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn states_visited(&self) -> u64 {
        self.states_visited
    }

    pub fn buffer(&self) -> &VisitBuffer<E::State> {
        &self.buffer
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps as u64
    }

    /// Free-form text stored alongside checkpoints (e.g. the run config).
    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: impl Into<String>) {
        self.meta = meta.into();
    }

    /// Lets a finished run continue for more steps.
    pub fn extend_steps(&mut self, steps: usize) {
        self.config.steps = steps;
    }

    /// Stream used for evaluation-time randomness at the current step, so
    /// evaluation never perturbs the training stream.
    fn eval_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1 + self.step);
        rng
    }

    /// Samples `count` trajectories from the current policy without exploration
    /// and without touching the training state.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Trajectory<E::State>>, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, store, env) = (&self.model, &self.store, &self.env);
        sample_trajectories(env, count, 0.0, &mut rng, |states, rng| Ok(model.policies(store, env, states, rng)?))
    }

    /// One gradient step on a fresh batch; returns the batch loss.
    pub fn train_step(&mut self) -> Result<f64, TrainError> {
        let Trainer { env, model, store, rng, config, .. } = self;
        let trajs = sample_trajectories(&*env, config.batch, config.epsilon, rng, |states, rng| {
            Ok(model.policies(store, &*env, states, rng)?)
        })?;
        let (tape, loss_var) = match model.loss(store, &*env, &trajs, rng) {
            Ok(t) => t,
            Err(LossError::Autodiff(AutodiffError::NonFinite { op, .. })) => {
                return Err(self.non_finite(f64::NAN, &trajs, op));
            }
            Err(e) => return Err(e.into()),
        };
        let loss = tape.scalar(loss_var);
        if !loss.is_finite() {
            return Err(self.non_finite(loss, &trajs, "loss"));
        }
        let grads = tape.backward(loss_var)?;
        if !grads.is_finite() {
            return Err(self.non_finite(loss, &trajs, "gradient"));
        }
        self.adam.step(&mut self.store, &grads)?;
        self.step += 1;
        for t in &trajs {
            self.states_visited += t.len() as u64;
            let x = t.terminal();
            let expected = self.env.reward(x)?.expectation();
            self.buffer.push(x.clone(), expected, self.env.mode(x), self.env.is_risky(x));
        }
        self.loss_sum += loss;
        self.loss_count += 1;
        Ok(loss)
    }

    fn non_finite(&self, loss: f64, trajs: &[Trajectory<E::State>], what: &str) -> TrainError {
        let mut dump = format!("non-finite {what}; loss = {loss}\nparameters:\n");
        for (_, name, p) in self.store.iter() {
            let max = p.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::NAN });
            let _ = writeln!(dump, "  {name} {:?} max|w| = {max}", p.dim());
        }
        dump.push_str("batch:\n");
        for t in trajs {
            let path: Vec<String> = t.states.iter().map(|s| self.env.display(s)).collect();
            let _ = writeln!(dump, "  R = {} : {}", t.reward, path.join(" -> "));
        }
        TrainError::NonFinite { step: self.step + 1, dump }
    }

    /// Whether metrics are due after the current step.
    pub fn eval_due(&self) -> bool {
        self.step > 0 && (self.step % self.config.eval_interval as u64 == 0 || self.is_finished())
    }

    /// Runs to `config.steps`, calling `on_metrics` at every evaluation point.
    pub fn run(&mut self, mut on_metrics: impl FnMut(&MetricsRecord)) -> Result<Vec<MetricsRecord>, TrainError> {
        let mut all = Vec::new();
        while !self.is_finished() {
            self.train_step()?;
            if self.eval_due() {
                let m = self.evaluate()?;
                on_metrics(&m);
                all.push(m);
            }
        }
        Ok(all)
    }

    /// Metrics at the current step. Resets the running loss mean.
    pub fn evaluate(&mut self) -> Result<MetricsRecord, TrainError> {
        let loss = if self.loss_count > 0 { self.loss_sum / self.loss_count as f64 } else { f64::NAN };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        let mut l1_error = None;
        if let Some(Exact { dag, target: Some(target) }) = &self.exact {
            if !self.buffer.is_empty() {
                l1_error = Some(self.buffer.l1_to(dag.terminal_states().zip(target.iter().copied())));
            }
        }
        let l1_exact = self.l1_exact()?;
        Ok(MetricsRecord {
            step: self.step,
            states_visited: self.states_visited,
            loss,
            l1_error,
            l1_exact,
            modes_found: self.buffer.modes().len(),
            violation_rate: self.buffer.violation_rate(),
            top10_reward: self.buffer.top_k_mean(10),
            top100_reward: self.buffer.top_k_mean(100),
        })
    }

    /// `Σ_x |P_T(x) − R(x)/Z|` for the current policy, computed exactly.
    pub fn l1_exact(&self) -> Result<Option<f64>, TrainError> {
        let Some(Exact { target: Some(target), .. }) = &self.exact else {
            return Ok(None);
        };
        let Some(p) = self.exact_terminating()? else {
            return Ok(None);
        };
        Ok(Some(p.iter().zip(target).map(|(a, b)| (a - b).abs()).sum()))
    }

    /// Exact terminating probabilities of the current policy over the
    /// enumerated terminals, if the environment is small enough.
    pub fn exact_terminating(&self) -> Result<Option<Vec<f64>>, TrainError> {
        let Some(Exact { dag, .. }) = &self.exact else {
            return Ok(None);
        };
        let interior: Vec<usize> = dag.interior().collect();
        if interior.len() > self.config.exact_limit {
            return Ok(None);
        }
        let mut rng = self.eval_rng();
        let mut table = vec![Vec::new(); dag.len()];
        for chunk in interior.chunks(4096) {
            let states: Vec<&E::State> = chunk.iter().map(|&i| dag.state(i)).collect();
            let probs = self.model.policies(&self.store, &self.env, &states, &mut rng)?;
            for (&i, p) in chunk.iter().zip(probs) {
                table[i] = p;
            }
        }
        Ok(Some(terminating_probabilities_table(&self.env, dag, &table)?))
    }

    /// Enumerated terminal states, in the order of [`Self::exact_terminating`].
    pub fn terminals(&self) -> Option<Vec<&E::State>> {
        self.exact.as_ref().map(|x| x.dag.terminal_states().collect())
    }

    /// `R/Z` over [`Self::terminals`] for deterministic rewards.
    pub fn target(&self) -> Option<&[f64]> {
        self.exact.as_ref().and_then(|x| x.target.as_deref())
    }
}
