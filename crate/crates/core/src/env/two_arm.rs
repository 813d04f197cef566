use super::{EnvError, Environment, RewardDistribution};

/// One arm: its finite reward support.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub reward: RewardDistribution,
}

/// Root with two arms, each ending in a single terminal object.
///
/// Action 0 and 1 pick an arm, action 2 stops.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoArm {
    arms: [Arm; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TwoArmState {
    Root,
    Arm(u8),
    Stopped(u8),
}

impl TwoArm {
    pub fn new(arm0: RewardDistribution, arm1: RewardDistribution) -> Self {
        TwoArm { arms: [Arm { reward: arm0 }, Arm { reward: arm1 }] }
    }

    pub fn arm(&self, k: usize) -> &Arm {
        &self.arms[k]
    }
}

impl Environment for TwoArm {
    type State = TwoArmState;

    fn initial_state(&self) -> TwoArmState {
        TwoArmState::Root
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn children(&self, s: &TwoArmState) -> Vec<(usize, TwoArmState)> {
        match *s {
            TwoArmState::Root => vec![(0, TwoArmState::Arm(0)), (1, TwoArmState::Arm(1))],
            TwoArmState::Arm(k) => vec![(2, TwoArmState::Stopped(k))],
            TwoArmState::Stopped(_) => Vec::new(),
        }
    }

    fn parents(&self, s: &TwoArmState) -> Vec<(TwoArmState, usize)> {
        match *s {
            TwoArmState::Root => Vec::new(),
            TwoArmState::Arm(k) => vec![(TwoArmState::Root, k as usize)],
            TwoArmState::Stopped(k) => vec![(TwoArmState::Arm(k), 2)],
        }
    }

    fn is_terminal(&self, s: &TwoArmState) -> bool {
        matches!(s, TwoArmState::Stopped(_))
    }

    fn encode(&self, s: &TwoArmState) -> Vec<u8> {
        match *s {
            TwoArmState::Root => vec![0],
            TwoArmState::Arm(k) => vec![1, k],
            TwoArmState::Stopped(k) => vec![2, k],
        }
    }

    fn decode(&self, bytes: &[u8]) -> Result<TwoArmState, EnvError> {
        match *bytes {
            [0] => Ok(TwoArmState::Root),
            [1, k] if k < 2 => Ok(TwoArmState::Arm(k)),
            [2, k] if k < 2 => Ok(TwoArmState::Stopped(k)),
            _ => Err(EnvError::Decode(bytes.to_vec())),
        }
    }

    fn display(&self, s: &TwoArmState) -> String {
        match *s {
            TwoArmState::Root => "root".into(),
            TwoArmState::Arm(k) => format!("arm{k}"),
            TwoArmState::Stopped(k) => format!("arm{k}|stop"),
        }
    }

    fn feature_dim(&self) -> usize {
        3
    }

    fn write_features(&self, s: &TwoArmState, out: &mut [f64]) {
        out.fill(0.0);
        match *s {
            TwoArmState::Root => out[0] = 1.0,
            TwoArmState::Arm(k) | TwoArmState::Stopped(k) => out[1 + k as usize] = 1.0,
        }
    }

    fn reward(&self, x: &TwoArmState) -> Result<RewardDistribution, EnvError> {
        match *x {
            TwoArmState::Stopped(k) => Ok(self.arms[k as usize].reward.clone()),
            _ => Err(EnvError::NotTerminal(self.display(x))),
        }
    }

    fn mode(&self, x: &TwoArmState) -> Option<usize> {
        match *x {
            TwoArmState::Stopped(k) => Some(k as usize),
            _ => None,
        }
    }

    fn num_modes(&self) -> Option<usize> {
        Some(2)
    }

    fn state_count(&self) -> Option<u128> {
        Some(5)
    }

    fn has_stochastic_reward(&self) -> bool {
        self.arms.iter().any(|a| a.reward.is_stochastic())
    }
}
