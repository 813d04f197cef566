//! Hypergrid environment: a `D`-dimensional grid of side `H` where actions
//! increment one coordinate or stop.
//!
//! The reward has a small floor `R0`, a plateau `R1` on the outer band of each
//! corner orthant and a spike `R2` on an inner ring, giving `2^D` modes.
//! A risky variant replaces the reward of some corner orthants with a
//! two-outcome lottery.

use crate::env::{EnvError, Environment, RewardDistribution};

#[derive(Clone, Debug, PartialEq)]
pub struct HypergridConfig {
    pub side: usize,
    pub dims: usize,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for HypergridConfig {
    fn default() -> Self {
        HypergridConfig { side: 8, dims: 2, r0: 1e-3, r1: 0.5, r2: 2.0 }
    }
}

impl HypergridConfig {
    pub fn new(side: usize, dims: usize) -> Self {
        HypergridConfig { side, dims, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.side < 2 || self.side > u16::MAX as usize {
            return Err(EnvError::BadConfig(format!("H = {} must be in [2, {}]", self.side, u16::MAX)));
        }
        if self.dims < 1 {
            return Err(EnvError::BadConfig("D must be at least 1".into()));
        }
        for (name, v) in [("R0", self.r0), ("R1", self.r1), ("R2", self.r2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnvError::BadConfig(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if self.r0 <= 0.0 {
            return Err(EnvError::BadConfig(format!("R0 = {} must be positive", self.r0)));
        }
        Ok(())
    }

    fn band(&self, x: usize) -> f64 {
        (x as f64 / (self.side - 1) as f64 - 0.5).abs()
    }

    fn outer(&self, x: usize) -> bool {
        let t = self.band(x);
        t > 0.25 && t <= 0.5
    }

    fn inner(&self, x: usize) -> bool {
        let t = self.band(x);
        t > 0.3 && t < 0.4
    }

    fn check(&self, x: &[u16]) -> Result<(), EnvError> {
        if x.len() != self.dims {
            return Err(EnvError::BadConfig(format!("{} coordinates for D = {}", x.len(), self.dims)));
        }
        match x.iter().find(|&&v| v as usize >= self.side) {
            Some(&v) => Err(EnvError::OutOfRange { value: v as usize, max: self.side - 1 }),
            None => Ok(()),
        }
    }
}

/// `R0 + R1·∏ 1[outer] + R2·∏ 1[inner]`.
pub fn grid_reward(x: &[u16], cfg: &HypergridConfig) -> Result<f64, EnvError> {
    cfg.check(x)?;
    let outer = x.iter().all(|&v| cfg.outer(v as usize));
    let inner = x.iter().all(|&v| cfg.inner(v as usize));
    Ok(cfg.r0 + if outer { cfg.r1 } else { 0.0 } + if inner { cfg.r2 } else { 0.0 })
}

/// Orthant label bits (bit `d` set when `x_d` is in the upper half).
pub fn orthant(x: &[u16], cfg: &HypergridConfig) -> usize {
    let mid = (cfg.side - 1) as f64 / 2.0;
    x.iter()
        .enumerate()
        .fold(0, |acc, (d, &v)| if v as f64 > mid { acc | (1 << d) } else { acc })
}

/// Orthant label of a mode cell, or `None` off the inner ring.
pub fn mode_membership(x: &[u16], cfg: &HypergridConfig) -> Option<usize> {
    if cfg.check(x).is_err() || !x.iter().all(|&v| cfg.inner(v as usize)) {
        return None;
    }
    Some(orthant(x, cfg))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskyConfig {
    /// Probability of the low outcome.
    pub p: f64,
    pub low: f64,
    /// Non-low outcome on a risky mode cell.
    pub mode_reward: f64,
    /// Non-low outcome on the rest of a risky orthant's outer band.
    pub outer_reward: f64,
}

impl Default for RiskyConfig {
    fn default() -> Self {
        RiskyConfig { p: 0.3, low: 0.1, mode_reward: 2.6, outer_reward: 0.6 }
    }
}

impl RiskyConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(EnvError::BadConfig(format!("risky p = {} outside [0, 1]", self.p)));
        }
        for (name, v) in [("low", self.low), ("mode_reward", self.mode_reward), ("outer_reward", self.outer_reward)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::BadConfig(format!("risky {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// An orthant is risky when its label has even parity: the bottom-left and
/// top-right corners in two dimensions.
pub fn is_risky_orthant(label: usize) -> bool {
    label.count_ones() % 2 == 0
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub coords: Vec<u16>,
    pub stopped: bool,
}

impl GridState {
    pub fn new(coords: Vec<u16>) -> Self {
        GridState { coords, stopped: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergrid {
    cfg: HypergridConfig,
    risky: Option<RiskyConfig>,
}

impl Hypergrid {
    pub fn new(cfg: HypergridConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Hypergrid { cfg, risky: None })
    }

    pub fn risky(cfg: HypergridConfig, risky: RiskyConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        risky.validate()?;
        Ok(Hypergrid { cfg, risky: Some(risky) })
    }

    pub fn config(&self) -> &HypergridConfig {
        &self.cfg
    }

    pub fn risky_config(&self) -> Option<&RiskyConfig> {
        self.risky.as_ref()
    }

    pub fn stop_action(&self) -> usize {
        self.cfg.dims
    }

    /// Whether the cell lies on the outer band of a risky orthant.
    pub fn in_risky_region(&self, x: &[u16]) -> bool {
        self.risky.is_some()
            && x.iter().all(|&v| self.cfg.outer(v as usize))
            && is_risky_orthant(orthant(x, &self.cfg))
    }

    /// Reward of a cell, stochastic inside risky regions.
    pub fn cell_reward(&self, x: &[u16]) -> Result<RewardDistribution, EnvError> {
        let base = grid_reward(x, &self.cfg)?;
        match &self.risky {
            Some(r) if self.in_risky_region(x) => {
                let high = if mode_membership(x, &self.cfg).is_some() { r.mode_reward } else { r.outer_reward };
                RewardDistribution::finite(vec![(r.low, r.p), (high, 1.0 - r.p)])
            }
            _ => Ok(RewardDistribution::Deterministic(base)),
        }
    }
}

impl Environment for Hypergrid {
    type State = GridState;

    fn initial_state(&self) -> GridState {
        GridState::new(vec![0; self.cfg.dims])
    }

    fn num_actions(&self) -> usize {
        self.cfg.dims + 1
    }

    fn children(&self, s: &GridState) -> Vec<(usize, GridState)> {
        if s.stopped {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.cfg.dims + 1);
        for d in 0..self.cfg.dims {
            if (s.coords[d] as usize) + 1 < self.cfg.side {
                let mut c = s.coords.clone();
                c[d] += 1;
                out.push((d, GridState::new(c)));
            }
        }
        out.push((self.cfg.dims, GridState { coords: s.coords.clone(), stopped: true }));
        out
    }

    fn parents(&self, s: &GridState) -> Vec<(GridState, usize)> {
        if s.stopped {
            return vec![(GridState::new(s.coords.clone()), self.cfg.dims)];
        }
        (0..self.cfg.dims)
            .filter(|&d| s.coords[d] > 0)
            .map(|d| {
                let mut c = s.coords.clone();
                c[d] -= 1;
                (GridState::new(c), d)
            })
            .collect()
    }

    fn is_terminal(&self, s: &GridState) -> bool {
        s.stopped
    }

    fn encode(&self, s: &GridState) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * s.coords.len() + 1);
        for &v in &s.coords {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(s.stopped as u8);
        out
    }

    fn decode(&self, bytes: &[u8]) -> Result<GridState, EnvError> {
        let bad = || EnvError::Decode(bytes.to_vec());
        if bytes.len() != 2 * self.cfg.dims + 1 || bytes[bytes.len() - 1] > 1 {
            return Err(bad());
        }
        let coords: Vec<u16> = bytes[..2 * self.cfg.dims].chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        if coords.iter().any(|&v| v as usize >= self.cfg.side) {
            return Err(bad());
        }
        Ok(GridState { coords, stopped: bytes[bytes.len() - 1] == 1 })
    }

    fn display(&self, s: &GridState) -> String {
        let body = s.coords.iter().map(u16::to_string).collect::<Vec<_>>().join(" ");
        if s.stopped {
            format!("({body})")
        } else {
            format!("({body})*")
        }
    }

    fn feature_dim(&self) -> usize {
        self.cfg.side * self.cfg.dims
    }

    fn write_features(&self, s: &GridState, out: &mut [f64]) {
        out.fill(0.0);
        for (d, &v) in s.coords.iter().enumerate() {
            out[d * self.cfg.side + v as usize] = 1.0;
        }
    }

    fn reward(&self, x: &GridState) -> Result<RewardDistribution, EnvError> {
        if !x.stopped {
            return Err(EnvError::NotTerminal(self.display(x)));
        }
        self.cell_reward(&x.coords)
    }

    fn mode(&self, x: &GridState) -> Option<usize> {
        let m = mode_membership(&x.coords, &self.cfg)?;
        if self.risky.is_some() && is_risky_orthant(m) {
            return None;
        }
        Some(m)
    }

    fn num_modes(&self) -> Option<usize> {
        let all = 1usize.checked_shl(self.cfg.dims as u32)?;
        Some(if self.risky.is_some() { (0..all).filter(|&m| !is_risky_orthant(m)).count() } else { all })
    }

    fn is_risky(&self, x: &GridState) -> bool {
        self.in_risky_region(&x.coords)
    }

    fn state_count(&self) -> Option<u128> {
        (self.cfg.side as u128).checked_pow(self.cfg.dims as u32)?.checked_mul(2)
    }

    fn has_stochastic_reward(&self) -> bool {
        self.risky.as_ref().is_some_and(|r| r.p > 0.0 && r.p < 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        geometric_mean_target, partition_function, terminating_probabilities, Dag,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(h: usize, d: usize) -> Hypergrid {
        Hypergrid::new(HypergridConfig::new(h, d)).unwrap()
    }

    fn uniform(env: &Hypergrid) -> impl FnMut(&GridState) -> Vec<f64> + '_ {
        move |s| {
            let mask = env.action_mask(s);
            let n = mask.iter().filter(|&&m| m).count() as f64;
            mask.iter().map(|&m| if m { 1.0 / n } else { 0.0 }).collect()
        }
    }

    #[test]
    fn reward_examples() {
        let cfg = HypergridConfig::new(8, 2);
        assert!((grid_reward(&[6, 6], &cfg).unwrap() - 2.501).abs() < 1e-12);
        assert!((grid_reward(&[0, 0], &cfg).unwrap() - 0.501).abs() < 1e-12);
        assert!((grid_reward(&[3, 3], &cfg).unwrap() - 0.001).abs() < 1e-12);
        assert_eq!(grid_reward(&[8, 0], &cfg), Err(EnvError::OutOfRange { value: 8, max: 7 }));
    }

    #[test]
    fn modes() {
        let cfg = HypergridConfig::new(8, 2);
        assert_eq!(mode_membership(&[6, 6], &cfg), Some(0b11));
        assert_eq!(mode_membership(&[1, 6], &cfg), Some(0b10));
        assert_eq!(mode_membership(&[0, 0], &cfg), None);
        for d in 1..=4 {
            let env = grid(8, d);
            let dag = Dag::build(&env).unwrap();
            let mut seen: Vec<usize> = dag.terminal_states().filter_map(|x| env.mode(x)).collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 1 << d);
        }
    }

    #[test]
    fn mode_cells_have_peak_reward() {
        let cfg = HypergridConfig::new(8, 3);
        let env = Hypergrid::new(cfg.clone()).unwrap();
        let dag = Dag::build(&env).unwrap();
        for x in dag.terminal_states() {
            let r = grid_reward(&x.coords, &cfg).unwrap();
            assert!(r >= cfg.r0);
            assert_eq!(mode_membership(&x.coords, &cfg).is_some(), r == cfg.r0 + cfg.r1 + cfg.r2);
        }
    }

    #[test]
    fn children_and_parents() {
        let env = grid(2, 2);
        let kids = env.children(&GridState::new(vec![0, 0]));
        assert_eq!(
            kids,
            vec![
                (0, GridState::new(vec![1, 0])),
                (1, GridState::new(vec![0, 1])),
                (2, GridState { coords: vec![0, 0], stopped: true }),
            ]
        );
        let corner = env.children(&GridState::new(vec![1, 1]));
        assert_eq!(corner, vec![(2, GridState { coords: vec![1, 1], stopped: true })]);
        let mut ps: Vec<_> = env.parents(&GridState::new(vec![1, 1])).into_iter().map(|p| p.0.coords).collect();
        ps.sort();
        assert_eq!(ps, vec![vec![0, 1], vec![1, 0]]);
        assert!(env.children(&GridState { coords: vec![0, 0], stopped: true }).is_empty());
    }

    #[test]
    fn state_count_matches_enumeration() {
        for (h, d) in [(2, 1), (3, 2), (8, 2), (4, 3), (8, 4)] {
            let env = grid(h, d);
            let dag = Dag::build(&env).unwrap();
            assert_eq!(dag.len() as u128, env.state_count().unwrap());
            assert_eq!(dag.terminals().len(), h.pow(d as u32));
        }
    }

    #[test]
    fn refuses_huge_grids() {
        let env = grid(20, 6);
        assert!(matches!(Dag::build(&env), Err(EnvError::TooLarge(_))));
    }

    #[test]
    fn partition_function_8x8() {
        let env = grid(8, 2);
        let dag = Dag::build(&env).unwrap();
        // Per dimension the outer band is {0,1,6,7} and the inner ring {1,6}.
        let oracle: f64 = (0..8u16)
            .flat_map(|a| (0..8u16).map(move |b| (a, b)))
            .map(|(a, b)| {
                let outer = |v: u16| [0, 1, 6, 7].contains(&v);
                let inner = |v: u16| [1, 6].contains(&v);
                0.001 + if outer(a) && outer(b) { 0.5 } else { 0.0 } + if inner(a) && inner(b) { 2.0 } else { 0.0 }
            })
            .sum();
        assert!((oracle - 16.064).abs() < 1e-12);
        assert!((partition_function(&env, &dag).unwrap() - 16.064).abs() < 1e-10);
    }

    #[test]
    fn uniform_policy_small_grid() {
        let env = grid(2, 2);
        let dag = Dag::build(&env).unwrap();
        let pt = terminating_probabilities(&env, &dag, uniform(&env)).unwrap();
        let expect = [(vec![0, 0], 1.0 / 3.0), (vec![1, 0], 1.0 / 6.0), (vec![0, 1], 1.0 / 6.0), (vec![1, 1], 1.0 / 3.0)];
        for (coords, p) in expect {
            let x = GridState { coords, stopped: true };
            let k = dag.terminals().iter().position(|&i| *dag.state(i) == x).unwrap();
            assert!((pt[k] - p).abs() < 1e-12, "{x:?}: {} vs {p}", pt[k]);
        }
    }

    #[test]
    fn uniform_policy_conserves_mass() {
        for (h, d) in [(3, 3), (8, 2), (5, 4)] {
            let env = grid(h, d);
            let dag = Dag::build(&env).unwrap();
            let pt = terminating_probabilities(&env, &dag, uniform(&env)).unwrap();
            assert!((pt.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn unnormalized_policy_is_rejected() {
        let env = grid(3, 2);
        let dag = Dag::build(&env).unwrap();
        let res = terminating_probabilities(&env, &dag, |_| vec![0.5, 0.5, 0.5]);
        assert!(matches!(res, Err(EnvError::BadPolicy { .. })));
    }

    #[test]
    fn features_are_one_hot() {
        let env = grid(4, 3);
        let mut f = vec![9.0; env.feature_dim()];
        env.write_features(&GridState::new(vec![0, 3, 2]), &mut f);
        let hot: Vec<usize> = f.iter().enumerate().filter(|p| *p.1 == 1.0).map(|p| p.0).collect();
        assert_eq!(hot, vec![0, 7, 10]);
        assert_eq!(f.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn encoding_is_injective() {
        let env = grid(4, 3);
        let dag = Dag::build(&env).unwrap();
        let mut codes: Vec<Vec<u8>> = dag.states().iter().map(|s| env.encode(s)).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), dag.len());
        for s in dag.states() {
            assert_eq!(&env.decode(&env.encode(s)).unwrap(), s);
        }
        assert!(env.decode(&[9, 0, 0, 0, 0, 0, 0]).is_err());
    }

    fn risky8(d: usize) -> Hypergrid {
        Hypergrid::risky(HypergridConfig::new(8, d), RiskyConfig::default()).unwrap()
    }

    #[test]
    fn risky_draws() {
        let env = risky8(2);
        let cell = GridState { coords: vec![1, 1], stopped: true };
        assert!(env.is_risky(&cell));
        let r = env.reward(&cell).unwrap();
        assert_eq!(r.from_uniform(0.2), 0.1);
        assert_eq!(r.from_uniform(0.9), 2.6);
        let outer = env.reward(&GridState { coords: vec![0, 1], stopped: true }).unwrap();
        assert_eq!(outer.from_uniform(0.9), 0.6);
        let safe = GridState { coords: vec![1, 6], stopped: true };
        assert!(!env.is_risky(&safe));
        assert_eq!(env.reward(&safe).unwrap(), RewardDistribution::Deterministic(2.501));
    }

    #[test]
    fn risky_low_frequency() {
        let env = risky8(2);
        let cell = GridState { coords: vec![6, 6], stopped: true };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let lows = (0..n).filter(|_| env.draw_reward(&cell, &mut rng).unwrap() == 0.1).count();
        let freq = lows as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((freq - 0.3).abs() < 3.0 * se, "{freq}");
    }

    #[test]
    fn risky_regions_avoid_safe_modes() {
        for d in [2, 4] {
            let env = risky8(d);
            let dag = Dag::build(&env).unwrap();
            let mut safe_modes = std::collections::BTreeSet::new();
            for x in dag.terminal_states() {
                if let Some(m) = env.mode(x) {
                    assert!(!env.is_risky(x));
                    safe_modes.insert(m);
                }
            }
            assert_eq!(safe_modes.len(), env.num_modes().unwrap());
            assert_eq!(safe_modes.len(), 1 << (d - 1));
        }
        assert!(is_risky_orthant(0b00) && is_risky_orthant(0b11));
        assert!(!is_risky_orthant(0b01) && !is_risky_orthant(0b10));
    }

    #[test]
    fn risky_geometric_target() {
        let env = risky8(2);
        let dag = Dag::build(&env).unwrap();
        assert!(matches!(partition_function(&env, &dag), Err(EnvError::StochasticReward(_))));
        let target = geometric_mean_target(&env, &dag).unwrap();
        // exp(0.3 ln 0.1 + 0.7 ln 2.6), evaluated at high precision.
        let mode_mass = 0.978_320_927_175_84;
        let mut z = 0.0;
        let mut risky_mode = None;
        for (k, x) in dag.terminal_states().enumerate() {
            let m = match env.reward(x).unwrap() {
                RewardDistribution::Deterministic(r) => r,
                RewardDistribution::Finite(a) => a.iter().map(|(v, p): &(f64, f64)| v.powf(*p)).product(),
            };
            z += m;
            if x.coords == [6, 6] {
                risky_mode = Some((k, m));
            }
        }
        let (k, m) = risky_mode.unwrap();
        assert!((m - mode_mass).abs() < 1e-12);
        assert!((target[k] - m / z).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn reward_at_least_floor(x in proptest::collection::vec(0u16..16, 3)) {
            let cfg = HypergridConfig::new(16, 3);
            prop_assert!(grid_reward(&x, &cfg).unwrap() >= cfg.r0);
        }
    }
}
