//! Binary sequence generation: tokens are appended one at a time up to a
//! fixed length, and the reward is `max_m exp(-lev(x, m))` over a target set.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{EnvError, Environment, RewardDistribution};

/// Blocks combined into targets.
pub const BLOCKS: [&str; 5] = ["00000000", "11111111", "11110000", "00001111", "00111100"];

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn parse_bits(s: &str) -> Result<Vec<u8>, EnvError> {
    s.bytes()
        .map(|c| match c {
            b'0' => Ok(0),
            b'1' => Ok(1),
            _ => Err(EnvError::BadConfig(format!("target {s:?} has a non-binary symbol"))),
        })
        .collect()
}

pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqConfig {
    pub length: usize,
    pub targets: Vec<Vec<u8>>,
}

impl SeqConfig {
    pub fn new(length: usize, targets: Vec<Vec<u8>>) -> Result<Self, EnvError> {
        let cfg = SeqConfig { length, targets };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `count` distinct targets of random 8-bit blocks, truncated to `length`
    /// when it is not a multiple of 8.
    pub fn from_blocks<R: Rng + ?Sized>(length: usize, count: usize, rng: &mut R) -> Result<Self, EnvError> {
        if length == 0 || count == 0 {
            return Err(EnvError::BadConfig("length and target count must be positive".into()));
        }
        let nblocks = length.div_ceil(8);
        let distinct = (BLOCKS.len() as f64).powi(nblocks.min(64) as i32);
        if (count as f64) > distinct {
            return Err(EnvError::BadConfig(format!("only {distinct} distinct block targets of length {length}")));
        }
        let mut targets: Vec<Vec<u8>> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while targets.len() < count {
            attempts += 1;
            if attempts > 100_000 + 100 * count {
                return Err(EnvError::BadConfig(format!("could not draw {count} distinct targets of length {length}")));
            }
            let mut t = Vec::with_capacity(nblocks * 8);
            for _ in 0..nblocks {
                t.extend(parse_bits(BLOCKS.choose(rng).expect("nonempty"))?);
            }
            t.truncate(length);
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        SeqConfig::new(length, targets)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.length == 0 || self.length > 255 {
            return Err(EnvError::BadConfig(format!("length {} must be in [1, 255]", self.length)));
        }
        if self.targets.is_empty() {
            return Err(EnvError::BadConfig("empty target set".into()));
        }
        for t in &self.targets {
            if t.len() != self.length {
                return Err(EnvError::BadConfig(format!("target {} has length {}, expected {}", bits_to_string(t), t.len(), self.length)));
            }
            if t.iter().any(|&b| b > 1) {
                return Err(EnvError::BadConfig("target has a non-binary symbol".into()));
            }
        }
        Ok(())
    }

    /// Minimum distance to the target set and the first target attaining it.
    pub fn nearest(&self, x: &[u8]) -> (usize, usize) {
        self.targets
            .iter()
            .enumerate()
            .map(|(k, t)| (levenshtein(x, t), k))
            .min()
            .expect("target set is nonempty")
    }
}

/// `max_m exp(-lev(x, m))` for a full-length `x`.
pub fn seq_reward(x: &[u8], cfg: &SeqConfig) -> Result<f64, EnvError> {
    if x.len() != cfg.length {
        return Err(EnvError::NotTerminal(bits_to_string(x)));
    }
    Ok((-(cfg.nearest(x).0 as f64)).exp())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeqState {
    pub tokens: Vec<u8>,
    pub stopped: bool,
}

impl SeqState {
    pub fn open(tokens: Vec<u8>) -> Self {
        SeqState { tokens, stopped: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqGen {
    cfg: SeqConfig,
}

pub const STOP: usize = 2;

impl SeqGen {
    pub fn new(cfg: SeqConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(SeqGen { cfg })
    }

    pub fn config(&self) -> &SeqConfig {
        &self.cfg
    }
}

impl Environment for SeqGen {
    type State = SeqState;

    fn initial_state(&self) -> SeqState {
        SeqState::open(Vec::new())
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn children(&self, s: &SeqState) -> Vec<(usize, SeqState)> {
        if s.stopped {
            Vec::new()
        } else if s.tokens.len() == self.cfg.length {
            vec![(STOP, SeqState { tokens: s.tokens.clone(), stopped: true })]
        } else {
            (0..2u8)
                .map(|b| {
                    let mut t = s.tokens.clone();
                    t.push(b);
                    (b as usize, SeqState::open(t))
                })
                .collect()
        }
    }

    fn parents(&self, s: &SeqState) -> Vec<(SeqState, usize)> {
        if s.stopped {
            return vec![(SeqState::open(s.tokens.clone()), STOP)];
        }
        match s.tokens.split_last() {
            Some((&last, prefix)) => vec![(SeqState::open(prefix.to_vec()), last as usize)],
            None => Vec::new(),
        }
    }

    fn is_terminal(&self, s: &SeqState) -> bool {
        s.stopped
    }

    fn encode(&self, s: &SeqState) -> Vec<u8> {
        let mut out = Vec::with_capacity(s.tokens.len() + 2);
        out.push(s.tokens.len() as u8);
        out.extend_from_slice(&s.tokens);
        out.push(s.stopped as u8);
        out
    }

    fn decode(&self, bytes: &[u8]) -> Result<SeqState, EnvError> {
        let bad = || EnvError::Decode(bytes.to_vec());
        let (&n, rest) = bytes.split_first().ok_or_else(bad)?;
        let n = n as usize;
        if rest.len() != n + 1 || n > self.cfg.length || rest[..n].iter().any(|&b| b > 1) || rest[n] > 1 {
            return Err(bad());
        }
        let stopped = rest[n] == 1;
        if stopped && n != self.cfg.length {
            return Err(bad());
        }
        Ok(SeqState { tokens: rest[..n].to_vec(), stopped })
    }

    fn display(&self, s: &SeqState) -> String {
        let body = bits_to_string(&s.tokens);
        if s.stopped {
            body
        } else {
            format!("{body}*")
        }
    }

    fn feature_dim(&self) -> usize {
        2 * self.cfg.length + 1
    }

    fn write_features(&self, s: &SeqState, out: &mut [f64]) {
        out.fill(0.0);
        for (i, &b) in s.tokens.iter().enumerate() {
            out[2 * i + b as usize] = 1.0;
        }
        out[2 * self.cfg.length] = s.tokens.len() as f64 / self.cfg.length as f64;
    }

    fn reward(&self, x: &SeqState) -> Result<RewardDistribution, EnvError> {
        if !x.stopped {
            return Err(EnvError::NotTerminal(self.display(x)));
        }
        Ok(RewardDistribution::Deterministic(seq_reward(&x.tokens, &self.cfg)?))
    }

    /// Terminal objects within distance 1 of a target, labelled by the
    /// nearest target.
    fn mode(&self, x: &SeqState) -> Option<usize> {
        if !x.stopped || x.tokens.len() != self.cfg.length {
            return None;
        }
        let (dist, k) = self.cfg.nearest(&x.tokens);
        (dist <= 1).then_some(k)
    }

    fn num_modes(&self) -> Option<usize> {
        Some(self.cfg.targets.len())
    }

    fn state_count(&self) -> Option<u128> {
        let l = self.cfg.length as u32;
        // Prefixes of every length plus the stopped copies of full sequences.
        2u128.checked_pow(l + 1).map(|n| n - 1 + (1u128 << l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{partition_function, terminating_probabilities, Dag};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(s: &str) -> Vec<u8> {
        parse_bits(s).unwrap()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&bits("0000"), &bits("0000")), 0);
        assert_eq!(levenshtein(&bits("0011"), &bits("0000")), 2);
        assert_eq!(levenshtein(&[], &bits("0101")), 4);
        assert_eq!(levenshtein(&bits("0101"), &bits("1010")), 2);
        assert_eq!(levenshtein(&bits("0110"), &bits("011")), 1);
    }

    fn naive_levenshtein(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = naive_levenshtein(ra, rb) + usize::from(x != y);
                sub.min(naive_levenshtein(ra, b) + 1).min(naive_levenshtein(a, rb) + 1)
            }
        }
    }

    proptest! {
        #[test]
        fn levenshtein_matches_recursion(
            a in proptest::collection::vec(0u8..2, 0..7),
            b in proptest::collection::vec(0u8..2, 0..7),
        ) {
            prop_assert_eq!(levenshtein(&a, &b), naive_levenshtein(&a, &b));
        }

        #[test]
        fn levenshtein_is_a_metric(
            a in proptest::collection::vec(0u8..2, 0..16),
            b in proptest::collection::vec(0u8..2, 0..16),
            c in proptest::collection::vec(0u8..2, 0..16),
        ) {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn reward_in_unit_interval(x in proptest::collection::vec(0u8..2, 12), seed in 0u64..1000) {
            let cfg = SeqConfig::from_blocks(12, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let r = seq_reward(&x, &cfg).unwrap();
            prop_assert!(r > 0.0 && r <= 1.0);
            prop_assert_eq!(r == 1.0, cfg.targets.contains(&x));
        }
    }

    #[test]
    fn reward_examples() {
        let cfg = SeqConfig::new(8, vec![bits("00000000"), bits("11111111")]).unwrap();
        assert_eq!(seq_reward(&bits("11111111"), &cfg).unwrap(), 1.0);
        let r = seq_reward(&bits("00001111"), &cfg).unwrap();
        assert!((r - 0.018_315_638_888_734_18).abs() < 1e-15);
        let dup = SeqConfig::new(8, vec![bits("00000000"), bits("11111111"), bits("11111111")]).unwrap();
        for x in ["01010101", "00111100", "11100000"] {
            assert_eq!(seq_reward(&bits(x), &cfg).unwrap(), seq_reward(&bits(x), &dup).unwrap());
        }
        assert!(matches!(seq_reward(&bits("0000"), &cfg), Err(EnvError::NotTerminal(_))));
    }

    #[test]
    fn children_and_parents() {
        let env = SeqGen::new(SeqConfig::new(4, vec![bits("0000")]).unwrap()).unwrap();
        let kids: Vec<_> = env.children(&SeqState::open(bits("01"))).into_iter().map(|c| c.1.tokens).collect();
        assert_eq!(kids, vec![bits("010"), bits("011")]);
        let full = env.children(&SeqState::open(bits("0110")));
        assert_eq!(full, vec![(STOP, SeqState { tokens: bits("0110"), stopped: true })]);
        assert_eq!(env.parents(&SeqState::open(bits("010"))), vec![(SeqState::open(bits("01")), 0)]);
    }

    #[test]
    fn tree_structure() {
        let cfg = SeqConfig::from_blocks(6, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let env = SeqGen::new(cfg).unwrap();
        let dag = Dag::build(&env).unwrap();
        assert_eq!(dag.len() as u128, env.state_count().unwrap());
        for s in dag.states() {
            assert_eq!(&env.decode(&env.encode(s)).unwrap(), s);
        }
        for i in 1..dag.len() {
            assert_eq!(dag.parents_of(i).len(), 1);
        }
        let pt = terminating_probabilities(&env, &dag, |s| {
            if s.tokens.len() == 6 { vec![0.0, 0.0, 1.0] } else { vec![0.5, 0.5, 0.0] }
        })
        .unwrap();
        assert!(pt.iter().all(|&p| (p - 1.0 / 64.0).abs() < 1e-15));
        assert!(partition_function(&env, &dag).unwrap() > 0.0);
    }

    #[test]
    fn block_targets() {
        let a = SeqConfig::from_blocks(12, 4, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = SeqConfig::from_blocks(12, 4, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        let mut t = a.targets.clone();
        t.sort();
        t.dedup();
        assert_eq!(t.len(), 4);
        let long = SeqConfig::from_blocks(16, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for t in &long.targets {
            assert!(BLOCKS.contains(&bits_to_string(&t[..8]).as_str()));
            assert!(BLOCKS.contains(&bits_to_string(&t[8..]).as_str()));
        }
        assert!(SeqConfig::from_blocks(8, 6, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn modes_and_features() {
        let env = SeqGen::new(SeqConfig::new(4, vec![bits("0000"), bits("1111")]).unwrap()).unwrap();
        let stop = |s: &str| SeqState { tokens: bits(s), stopped: true };
        assert_eq!(env.mode(&stop("0000")), Some(0));
        assert_eq!(env.mode(&stop("1110")), Some(1));
        assert_eq!(env.mode(&stop("0011")), None);
        let mut f = vec![0.0; env.feature_dim()];
        env.write_features(&SeqState::open(bits("01")), &mut f);
        assert_eq!(f, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn long_sequences_are_not_enumerated() {
        let cfg = SeqConfig::from_blocks(120, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let env = SeqGen::new(cfg).unwrap();
        assert!(matches!(Dag::build(&env), Err(EnvError::TooLarge(_))));
    }
}
