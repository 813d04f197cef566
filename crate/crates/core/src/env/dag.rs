use std::collections::{HashMap, VecDeque};

use super::{EnvError, Environment, RewardDistribution};

/// States above this count are never enumerated.
pub const MAX_ENUMERATED_STATES: u128 = 10_000_000;

/// Fully enumerated state graph in topological order.
#[derive(Clone, Debug)]
pub struct Dag<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    children: Vec<Vec<(usize, usize)>>,
    parents: Vec<Vec<(usize, usize)>>,
    order: Vec<usize>,
    terminals: Vec<usize>,
}

impl<S: Clone + Eq + std::hash::Hash + std::fmt::Debug> Dag<S> {
    /// Enumerates every state reachable from `s0` and validates the contract:
    /// children/parents duality, acyclicity and that every non-terminal state
    /// has a child.
    pub fn build<E: Environment<State = S>>(env: &E) -> Result<Self, EnvError> {
        if let Some(n) = env.state_count() {
            if n > MAX_ENUMERATED_STATES {
                return Err(EnvError::TooLarge(n));
            }
        }
        let s0 = env.initial_state();
        if !env.parents(&s0).is_empty() {
            return Err(EnvError::Inconsistent(format!("initial state {} has parents", env.display(&s0))));
        }
        let mut states = vec![s0.clone()];
        let mut index = HashMap::from([(s0, 0usize)]);
        let mut children: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let s = states[i].clone();
            let kids = env.children(&s);
            let terminal = env.is_terminal(&s);
            if terminal && !kids.is_empty() {
                return Err(EnvError::AlreadyTerminal(env.display(&s)));
            }
            if !terminal && kids.is_empty() {
                return Err(EnvError::DeadEnd(env.display(&s)));
            }
            let mut edges = Vec::with_capacity(kids.len());
            for (a, c) in kids {
                let j = match index.get(&c) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j as u128 >= MAX_ENUMERATED_STATES {
                            return Err(EnvError::TooLarge(j as u128 + 1));
                        }
                        states.push(c.clone());
                        index.insert(c, j);
                        queue.push_back(j);
                        j
                    }
                };
                edges.push((a, j));
            }
            if children.len() <= i {
                children.resize(i + 1, Vec::new());
            }
            children[i] = edges;
        }
        children.resize(states.len(), Vec::new());

        let mut parents: Vec<Vec<(usize, usize)>> = vec![Vec::new(); states.len()];
        for (i, edges) in children.iter().enumerate() {
            for &(a, j) in edges {
                parents[j].push((i, a));
            }
        }
        for (j, s) in states.iter().enumerate() {
            let mut declared: Vec<(usize, usize)> = Vec::new();
            for (p, a) in env.parents(s) {
                let i = *index
                    .get(&p)
                    .ok_or_else(|| EnvError::Inconsistent(format!("unreachable parent of {}", env.display(s))))?;
                declared.push((i, a));
            }
            declared.sort_unstable();
            let mut induced = parents[j].clone();
            induced.sort_unstable();
            if declared != induced {
                return Err(EnvError::Inconsistent(env.display(s)));
            }
        }

        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..states.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(states.len());
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for &(_, j) in &children[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        if order.len() != states.len() {
            return Err(EnvError::Cyclic);
        }
        let terminals = order.iter().copied().filter(|&i| children[i].is_empty()).collect();
        Ok(Dag { states, index, children, parents, order, terminals })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &S {
        &self.states[i]
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// `(action, child index)` edges out of state `i`.
    pub fn children_of(&self, i: usize) -> &[(usize, usize)] {
        &self.children[i]
    }

    /// `(parent index, action)` edges into state `i`.
    pub fn parents_of(&self, i: usize) -> &[(usize, usize)] {
        &self.parents[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Indices of terminal states, in topological order.
    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = &S> {
        self.terminals.iter().map(|&i| &self.states[i])
    }

    /// Indices of non-terminal states, in topological order.
    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied().filter(|&i| !self.children[i].is_empty())
    }
}

/// Exact `P_T` over [`Dag::terminals`] for the policy `policy(s)`, a
/// probability vector over all action ids.
pub fn terminating_probabilities<E, F>(env: &E, dag: &Dag<E::State>, mut policy: F) -> Result<Vec<f64>, EnvError>
where
    E: Environment,
    F: FnMut(&E::State) -> Vec<f64>,
{
    let mut table = vec![Vec::new(); dag.len()];
    for i in dag.interior() {
        table[i] = policy(dag.state(i));
    }
    terminating_probabilities_table(env, dag, &table)
}

/// Uniform distribution over the valid actions of `s`.
pub fn uniform_policy<E: Environment>(env: &E, s: &E::State) -> Vec<f64> {
    let mask = env.action_mask(s);
    let n = mask.iter().filter(|&&m| m).count() as f64;
    mask.iter().map(|&m| if m { 1.0 / n } else { 0.0 }).collect()
}

/// As [`terminating_probabilities`] with the policy given per state index;
/// rows of terminal states are ignored.
pub fn terminating_probabilities_table<E: Environment>(
    env: &E,
    dag: &Dag<E::State>,
    table: &[Vec<f64>],
) -> Result<Vec<f64>, EnvError> {
    const TOL: f64 = 1e-9;
    if table.len() != dag.len() {
        return Err(EnvError::BadPolicy { state: "<table>".into(), reason: format!("{} rows for {} states", table.len(), dag.len()) });
    }
    let bad = |i: usize, reason: String| EnvError::BadPolicy { state: env.display(dag.state(i)), reason };
    let mut mass = vec![0.0f64; dag.len()];
    mass[dag.topological_order()[0]] = 1.0;
    for i in dag.interior() {
        let probs = &table[i];
        if probs.len() != env.num_actions() {
            return Err(bad(i, format!("length {} for {} actions", probs.len(), env.num_actions())));
        }
        let edges = dag.children_of(i);
        let mut total = 0.0;
        for (a, &p) in probs.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(bad(i, format!("action {a} has probability {p}")));
            }
            if p > 0.0 && !edges.iter().any(|e| e.0 == a) {
                return Err(bad(i, format!("invalid action {a} has probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > TOL {
            return Err(bad(i, format!("sums to {total}")));
        }
        let m = mass[i];
        if m == 0.0 {
            continue;
        }
        for &(a, j) in edges {
            mass[j] += m * probs[a];
        }
    }
    Ok(dag.terminals().iter().map(|&i| mass[i]).collect())
}

/// `Z = Σ_x R(x)` for a deterministic reward.
pub fn partition_function<E: Environment>(env: &E, dag: &Dag<E::State>) -> Result<f64, EnvError> {
    let mut z = 0.0;
    for x in dag.terminal_states() {
        match env.reward(x)? {
            RewardDistribution::Deterministic(r) => z += r,
            d if !d.is_stochastic() => z += d.expectation(),
            _ => return Err(EnvError::StochasticReward(env.display(x))),
        }
    }
    Ok(z)
}

/// `R(x)/Z` over [`Dag::terminals`].
pub fn reward_target<E: Environment>(env: &E, dag: &Dag<E::State>) -> Result<Vec<f64>, EnvError> {
    let z = partition_function(env, dag)?;
    dag.terminal_states()
        .map(|x| Ok(env.reward(x)?.expectation() / z))
        .collect()
}

/// Distribution `∝ exp(E[log R(x)])` over [`Dag::terminals`].
pub fn geometric_mean_target<E: Environment>(env: &E, dag: &Dag<E::State>) -> Result<Vec<f64>, EnvError> {
    let mut mass = Vec::with_capacity(dag.terminals().len());
    for x in dag.terminal_states() {
        let r = env.reward(x)?;
        let m = r.expected_log().exp();
        if !(m > 0.0 && m.is_finite()) {
            return Err(EnvError::BadReward(format!("geometric mean {m} at {}", env.display(x))));
        }
        mass.push(m);
    }
    let z: f64 = mass.iter().sum();
    Ok(mass.into_iter().map(|m| m / z).collect())
}
