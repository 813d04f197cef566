use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::hash::Hash;

/// Sliding windows over generated terminal objects plus cumulative
/// discovery statistics.
#[derive(Clone, Debug)]
pub struct VisitBuffer<S: Clone + Eq + Hash> {
    window: VecDeque<S>,
    capacity: usize,
    counts: HashMap<S, usize>,
    risky: VecDeque<bool>,
    risky_capacity: usize,
    risky_hits: usize,
    modes: BTreeSet<usize>,
    /// Best distinct objects by expected reward, best first.
    top: Vec<(f64, S)>,
    top_set: HashSet<S>,
    top_capacity: usize,
}

impl<S: Clone + Eq + Hash> VisitBuffer<S> {
    pub fn new(capacity: usize, risky_capacity: usize, top_capacity: usize) -> Self {
        VisitBuffer {
            window: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            counts: HashMap::new(),
            risky: VecDeque::new(),
            risky_capacity: risky_capacity.max(1),
            risky_hits: 0,
            modes: BTreeSet::new(),
            top: Vec::new(),
            top_set: HashSet::new(),
            top_capacity: top_capacity.max(1),
        }
    }

    pub fn push(&mut self, x: S, reward: f64, mode: Option<usize>, risky: bool) {
        self.push_window(x.clone());
        self.push_risky(risky);
        if let Some(m) = mode {
            self.modes.insert(m);
        }
        self.offer_top(x, reward);
    }

    fn offer_top(&mut self, x: S, reward: f64) {
        if self.top_set.contains(&x) {
            return;
        }
        if self.top.len() == self.top_capacity {
            if reward <= self.top.last().expect("nonempty").0 {
                return;
            }
            let (_, gone) = self.top.pop().expect("nonempty");
            self.top_set.remove(&gone);
        }
        let pos = self.top.partition_point(|e| e.0 >= reward);
        self.top.insert(pos, (reward, x.clone()));
        self.top_set.insert(x);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn risky_capacity(&self) -> usize {
        self.risky_capacity
    }

    pub fn window(&self) -> impl Iterator<Item = &S> {
        self.window.iter()
    }

    pub fn risky_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.risky.iter().copied()
    }

    pub fn top(&self) -> &[(f64, S)] {
        &self.top
    }

    /// Visit count of `x` within the window.
    pub fn count(&self, x: &S) -> usize {
        self.counts.get(x).copied().unwrap_or(0)
    }

    pub fn modes(&self) -> &BTreeSet<usize> {
        &self.modes
    }

    /// Fraction of the last risky-window samples that were risky.
    pub fn violation_rate(&self) -> f64 {
        if self.risky.is_empty() {
            0.0
        } else {
            self.risky_hits as f64 / self.risky.len() as f64
        }
    }

    /// Mean reward of the `k` best distinct objects seen (fewer if not enough).
    pub fn top_k_mean(&self, k: usize) -> Option<f64> {
        let n = k.min(self.top.len());
        (n > 0).then(|| self.top[..n].iter().map(|e| e.0).sum::<f64>() / n as f64)
    }

    /// `Σ_x |p̂(x) − p*(x)|` between the window's empirical distribution and
    /// `target`, where `target` lists every object with its probability.
    pub fn l1_to<'a>(&self, target: impl IntoIterator<Item = (&'a S, f64)>) -> f64
    where
        S: 'a,
    {
        let n = self.window.len().max(1) as f64;
        let mut covered = 0.0;
        let mut total = 0.0;
        for (x, p) in target {
            let c = self.count(x) as f64;
            covered += c;
            total += (c / n - p).abs();
        }
        total + (self.window.len() as f64 - covered) / n
    }

    /// Restores modes and the top list directly (used when loading state).
    pub(crate) fn restore_extras(&mut self, modes: BTreeSet<usize>, top: Vec<(f64, S)>) {
        self.modes = modes;
        self.top_set = top.iter().map(|e| e.1.clone()).collect();
        self.top = top;
    }

    /// Pushes a visit without touching modes or the top list.
    pub(crate) fn push_window(&mut self, x: S) {
        if self.window.len() == self.capacity {
            let old = self.window.pop_front().expect("nonempty");
            if let Some(c) = self.counts.get_mut(&old) {
                *c -= 1;
                if *c == 0 {
                    self.counts.remove(&old);
                }
            }
        }
        *self.counts.entry(x.clone()).or_insert(0) += 1;
        self.window.push_back(x);
    }

    pub(crate) fn push_risky(&mut self, flag: bool) {
        if self.risky.len() == self.risky_capacity && self.risky.pop_front() == Some(true) {
            self.risky_hits -= 1;
        }
        self.risky.push_back(flag);
        self.risky_hits += flag as usize;
    }
}
