//! Run configuration: TOML sections, validation and bundled presets.
//!
//! ```toml
//! algo = "qm"
//! seeds = [0, 1, 2, 3]
//!
//! [env]
//! type = "hypergrid"
//! H = 8
//! D = 2
//!
//! [train]
//! steps = 1250
//! lr = 1e-3
//!
//! [qm]
//! N = 8
//! Ntilde = 8
//! ```

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Environment, RewardDistribution, TwoArm};
use crate::hypergrid::{Hypergrid, HypergridConfig, RiskyConfig};
use crate::autodiff::FourierMode;
use crate::losses::{BackwardPolicy, HeadKind, QmSettings};
use crate::quantile::{Distortion, PinballKind};
use crate::seqgen::{parse_bits, SeqConfig, SeqGen};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Fm,
    Tb,
    Qm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadName {
    #[default]
    Implicit,
    Explicit,
}

/// Level embedding of the implicit head; see [`FourierMode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FourierName {
    #[default]
    Learned,
    Normalized,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinballName {
    #[default]
    Huber,
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackwardName {
    #[default]
    Learned,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureName {
    #[default]
    Identity,
    Cpw,
    Wang,
    Cvar,
}

fn default_r0() -> f64 {
    1e-3
}
fn default_r1() -> f64 {
    0.5
}
fn default_r2() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "H")]
    pub side: usize,
    #[serde(rename = "D")]
    pub dims: usize,
    #[serde(rename = "R0", default = "default_r0")]
    pub r0: f64,
    #[serde(rename = "R1", default = "default_r1")]
    pub r1: f64,
    #[serde(rename = "R2", default = "default_r2")]
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskySection {
    #[serde(default = "RiskySection::default_p")]
    pub p: f64,
    #[serde(default = "RiskySection::default_low")]
    pub low: f64,
    #[serde(default = "RiskySection::default_mode")]
    pub mode_reward: f64,
    #[serde(default = "RiskySection::default_outer")]
    pub outer_reward: f64,
}

impl RiskySection {
    fn default_p() -> f64 {
        RiskyConfig::default().p
    }
    fn default_low() -> f64 {
        RiskyConfig::default().low
    }
    fn default_mode() -> f64 {
        RiskyConfig::default().mode_reward
    }
    fn default_outer() -> f64 {
        RiskyConfig::default().outer_reward
    }
}

impl Default for RiskySection {
    fn default() -> Self {
        let r = RiskyConfig::default();
        RiskySection { p: r.p, low: r.low, mode_reward: r.mode_reward, outer_reward: r.outer_reward }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskyGridSection {
    #[serde(rename = "H")]
    pub side: usize,
    #[serde(rename = "D")]
    pub dims: usize,
    #[serde(rename = "R0", default = "default_r0")]
    pub r0: f64,
    #[serde(rename = "R1", default = "default_r1")]
    pub r1: f64,
    #[serde(rename = "R2", default = "default_r2")]
    pub r2: f64,
    #[serde(default)]
    pub risky: RiskySection,
}

/// Either explicit bit strings or `{ blocks = K }`: K random concatenations
/// of the built-in 8-bit blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    List(Vec<String>),
    Blocks { blocks: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqSection {
    pub length: usize,
    pub targets: Targets,
    /// Seed for drawing block targets; independent of the training seed.
    #[serde(default)]
    pub target_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoArmSection {
    /// `[value, probability]` pairs.
    pub arm0: Vec<[f64; 2]>,
    pub arm1: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvConfig {
    Hypergrid(GridSection),
    RiskyHypergrid(RiskyGridSection),
    Seqgen(SeqSection),
    TwoArm(TwoArmSection),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: Option<f64>,
    pub eval_interval: usize,
    pub window: Option<usize>,
    pub risky_window: usize,
    pub exact_limit: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: 2000,
            batch: 16,
            lr: None,
            eval_interval: 100,
            window: None,
            risky_window: 2000,
            exact_limit: 50_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreSection {
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QmSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "Ntilde")]
    pub n_tilde: Option<usize>,
    pub head: HeadName,
    #[serde(rename = "M")]
    pub m: usize,
    pub fourier_dim: usize,
    pub fourier: FourierName,
    /// Cosine basis size of the learned embedding.
    pub cosines: usize,
    pub pinball: PinballName,
    pub huber_kappa: f64,
    /// Differentiate the out-flow side of the matching error too.
    pub target_gradient: bool,
}

impl Default for QmSection {
    fn default() -> Self {
        QmSection {
            n: None,
            n_tilde: None,
            head: HeadName::Implicit,
            m: 200,
            fourier_dim: 256,
            fourier: FourierName::Learned,
            cosines: 64,
            pinball: PinballName::Huber,
            huber_kappa: 1.0,
            target_gradient: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TbSection {
    #[serde(default)]
    pub backward: BackwardName,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    #[serde(default)]
    pub measure: MeasureName,
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Levels averaged by the sampling policy; defaults to `qm.N`.
    #[serde(rename = "N")]
    pub n: Option<usize>,
}

/// A complete experiment description as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Algo,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub env: EnvConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub explore: ExploreSection,
    #[serde(default)]
    pub qm: QmSection,
    #[serde(default)]
    pub tb: TbSection,
    #[serde(default)]
    pub risk: RiskSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Resolved model and objective settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algo: Algo,
    pub hidden: Vec<usize>,
    pub n: usize,
    pub n_tilde: usize,
    pub head: HeadName,
    pub m: usize,
    pub fourier_dim: usize,
    pub fourier: FourierName,
    pub cosines: usize,
    pub pinball: PinballName,
    pub huber_kappa: f64,
    pub target_gradient: bool,
    pub backward: BackwardName,
    pub measure: MeasureName,
    pub eta: Option<f64>,
    pub policy_n: usize,
}

impl AlgoConfig {
    /// Defaults for `algo` with the hypergrid level counts.
    pub fn new(algo: Algo) -> Self {
        let qm = QmSection::default();
        AlgoConfig {
            algo,
            hidden: default_hidden(algo, HeadName::Implicit),
            n: 8,
            n_tilde: 8,
            head: qm.head,
            m: qm.m,
            fourier_dim: qm.fourier_dim,
            fourier: qm.fourier,
            cosines: qm.cosines,
            pinball: qm.pinball,
            huber_kappa: qm.huber_kappa,
            target_gradient: qm.target_gradient,
            backward: BackwardName::Learned,
            measure: MeasureName::Identity,
            eta: None,
            policy_n: 8,
        }
    }

    pub fn qm_settings(&self) -> Result<QmSettings<f64>, ConfigError> {
        let pinball = match self.pinball {
            PinballName::L1 => PinballKind::L1,
            PinballName::Huber => PinballKind::huber(self.huber_kappa)
                .map_err(|e| ConfigError::invalid("qm.huber_kappa", e.to_string()))?,
        };
        Ok(QmSettings { n: self.n, n_tilde: self.n_tilde, pinball, target_gradient: self.target_gradient })
    }

    pub fn head_kind(&self) -> HeadKind {
        match self.head {
            HeadName::Implicit => {
                let mode = match self.fourier {
                    FourierName::Learned => FourierMode::Learned { cosines: self.cosines },
                    FourierName::Normalized => FourierMode::Normalized,
                    FourierName::Literal => FourierMode::Literal,
                };
                HeadKind::Implicit { fourier_dim: self.fourier_dim, mode }
            }
            HeadName::Explicit => HeadKind::Explicit { m: self.m },
        }
    }

    pub fn distortion(&self) -> Result<Distortion, ConfigError> {
        let name = match self.measure {
            MeasureName::Identity => "identity",
            MeasureName::Cpw => "cpw",
            MeasureName::Wang => "wang",
            MeasureName::Cvar => "cvar",
        };
        Distortion::from_name(name, self.eta).map_err(|e| ConfigError::invalid("risk.eta", e.to_string()))
    }

    pub fn backward_policy(&self) -> BackwardPolicy {
        match self.backward {
            BackwardName::Learned => BackwardPolicy::Learned,
            BackwardName::Uniform => BackwardPolicy::Uniform,
        }
    }
}

fn default_hidden(algo: Algo, head: HeadName) -> Vec<usize> {
    match (algo, head) {
        (Algo::Qm, HeadName::Implicit) => vec![256],
        _ => vec![256, 256],
    }
}

/// Resolved training-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub epsilon: f64,
    pub eval_interval: usize,
    /// Terminal-visit window for the empirical distribution; `None` picks
    /// `min(200000, 50 × terminal count)`.
    pub window: Option<usize>,
    pub risky_window: usize,
    /// Largest number of interior states for which `l1_exact` is computed.
    pub exact_limit: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = TrainSection::default();
        TrainConfig {
            steps: t.steps,
            batch: t.batch,
            lr: 1e-4,
            epsilon: 0.0,
            eval_interval: t.eval_interval,
            window: None,
            risky_window: t.risky_window,
            exact_limit: t.exact_limit,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("train.steps", self.steps)?;
        positive("train.batch", self.batch)?;
        positive("train.eval_interval", self.eval_interval)?;
        positive("train.risky_window", self.risky_window)?;
        if let Some(w) = self.window {
            positive("train.window", w)?;
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::invalid("train.lr", format!("{} must be finite and > 0", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ConfigError::invalid("explore.epsilon", format!("{} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

fn positive(key: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        Err(ConfigError::invalid(key, "must be at least 1"))
    } else {
        Ok(())
    }
}

/// A constructed environment of any supported kind.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Grid(Hypergrid),
    Seq(SeqGen),
    TwoArm(TwoArm),
}

/// Callback generic over the concrete environment type.
pub trait EnvVisitor {
    type Output;
    fn visit<E: Environment + Clone + 'static>(self, env: E) -> Self::Output;
}

impl AnyEnv {
    pub fn visit<V: EnvVisitor>(self, v: V) -> V::Output {
        match self {
            AnyEnv::Grid(e) => v.visit(e),
            AnyEnv::Seq(e) => v.visit(e),
            AnyEnv::TwoArm(e) => v.visit(e),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyEnv::Grid(_) => "hypergrid",
            AnyEnv::Seq(_) => "seqgen",
            AnyEnv::TwoArm(_) => "two_arm",
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file's text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Range checks every value; the error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build_env()?;
        let algo = self.algo_config()?;
        for &h in &algo.hidden {
            positive("model.hidden", h)?;
        }
        positive("qm.N", algo.n)?;
        positive("qm.Ntilde", algo.n_tilde)?;
        positive("qm.M", algo.m)?;
        positive("qm.fourier_dim", algo.fourier_dim)?;
        positive("qm.cosines", algo.cosines)?;
        positive("eval.N", algo.policy_n)?;
        if !(algo.huber_kappa > 0.0 && algo.huber_kappa.is_finite()) {
            return Err(ConfigError::invalid("qm.huber_kappa", format!("{} must be > 0", algo.huber_kappa)));
        }
        if self.risk.measure == MeasureName::Identity && self.risk.eta.is_some() {
            return Err(ConfigError::invalid("risk.eta", "identity measure takes no eta"));
        }
        algo.distortion()?;
        self.train_config(None)?;
        Ok(())
    }

    fn is_seqgen(&self) -> bool {
        matches!(self.env, EnvConfig::Seqgen(_))
    }

    pub fn algo_config(&self) -> Result<AlgoConfig, ConfigError> {
        let default_n = if self.is_seqgen() { 16 } else { 8 };
        let n = self.qm.n.unwrap_or(default_n);
        Ok(AlgoConfig {
            algo: self.algo,
            hidden: self.model.hidden.clone().unwrap_or_else(|| default_hidden(self.algo, self.qm.head)),
            n,
            n_tilde: self.qm.n_tilde.unwrap_or(default_n),
            head: self.qm.head,
            m: self.qm.m,
            fourier_dim: self.qm.fourier_dim,
            fourier: self.qm.fourier,
            cosines: self.qm.cosines,
            pinball: self.qm.pinball,
            huber_kappa: self.qm.huber_kappa,
            target_gradient: self.qm.target_gradient,
            backward: self.tb.backward,
            measure: self.risk.measure,
            eta: self.risk.eta,
            policy_n: self.eval.n.unwrap_or(n),
        })
    }

    /// Training settings; `seed` overrides the config's seed.
    pub fn train_config(&self, seed: Option<u64>) -> Result<TrainConfig, ConfigError> {
        let t = &self.train;
        let (lr, eps) = if self.is_seqgen() { (5e-4, 0.005) } else { (1e-4, 0.0) };
        let cfg = TrainConfig {
            steps: t.steps,
            batch: t.batch,
            lr: t.lr.unwrap_or(lr),
            epsilon: self.explore.epsilon.unwrap_or(eps),
            eval_interval: t.eval_interval,
            window: t.window,
            risky_window: t.risky_window,
            exact_limit: t.exact_limit,
            seed: seed.unwrap_or(self.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seeds for a sweep: the `seeds` list, or the single `seed`.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn build_env(&self) -> Result<AnyEnv, ConfigError> {
        let bad = |e: crate::env::EnvError| ConfigError::invalid("env", e.to_string());
        match &self.env {
            EnvConfig::Hypergrid(g) => {
                let cfg = grid_config(g.side, g.dims, g.r0, g.r1, g.r2)?;
                Ok(AnyEnv::Grid(Hypergrid::new(cfg).map_err(bad)?))
            }
            EnvConfig::RiskyHypergrid(g) => {
                let cfg = grid_config(g.side, g.dims, g.r0, g.r1, g.r2)?;
                let r = &g.risky;
                if !(0.0..=1.0).contains(&r.p) {
                    return Err(ConfigError::invalid("env.risky.p", format!("{} outside [0, 1]", r.p)));
                }
                for (key, v) in [("env.risky.low", r.low), ("env.risky.mode_reward", r.mode_reward), ("env.risky.outer_reward", r.outer_reward)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(ConfigError::invalid(key, format!("{v} must be > 0")));
                    }
                }
                let risky = RiskyConfig { p: r.p, low: r.low, mode_reward: r.mode_reward, outer_reward: r.outer_reward };
                Ok(AnyEnv::Grid(Hypergrid::risky(cfg, risky).map_err(bad)?))
            }
            EnvConfig::Seqgen(s) => {
                positive("env.length", s.length)?;
                let cfg = match &s.targets {
                    Targets::List(list) => {
                        let mut bits = Vec::with_capacity(list.len());
                        for t in list {
                            bits.push(parse_bits(t).map_err(|e| ConfigError::invalid("env.targets", e.to_string()))?);
                        }
                        SeqConfig::new(s.length, bits)
                    }
                    Targets::Blocks { blocks } => {
                        positive("env.targets.blocks", *blocks)?;
                        let mut rng = ChaCha8Rng::seed_from_u64(s.target_seed);
                        SeqConfig::from_blocks(s.length, *blocks, &mut rng)
                    }
                }
                .map_err(|e| ConfigError::invalid("env.targets", e.to_string()))?;
                Ok(AnyEnv::Seq(SeqGen::new(cfg).map_err(bad)?))
            }
            EnvConfig::TwoArm(t) => {
                let arm = |key: &str, atoms: &[[f64; 2]]| {
                    RewardDistribution::finite(atoms.iter().map(|a| (a[0], a[1])).collect())
                        .map_err(|e| ConfigError::invalid(key, e.to_string()))
                };
                Ok(AnyEnv::TwoArm(TwoArm::new(arm("env.arm0", &t.arm0)?, arm("env.arm1", &t.arm1)?)))
            }
        }
    }

    /// Environment, objective and loop settings ready for a trainer.
    pub fn resolve(&self, seed: Option<u64>) -> Result<(AnyEnv, AlgoConfig, TrainConfig), ConfigError> {
        Ok((self.build_env()?, self.algo_config()?, self.train_config(seed)?))
    }
}

fn grid_config(side: usize, dims: usize, r0: f64, r1: f64, r2: f64) -> Result<HypergridConfig, ConfigError> {
    if side < 2 {
        return Err(ConfigError::invalid("env.H", format!("{side} must be at least 2")));
    }
    if side > u16::MAX as usize {
        return Err(ConfigError::invalid("env.H", format!("{side} is too large")));
    }
    positive("env.D", dims)?;
    for (key, v) in [("env.R0", r0), ("env.R1", r1), ("env.R2", r2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::invalid(key, format!("{v} must be finite and ≥ 0")));
        }
    }
    if r0 <= 0.0 {
        return Err(ConfigError::invalid("env.R0", "must be > 0 so every reward is positive"));
    }
    let cfg = HypergridConfig { side, dims, r0, r1, r2 };
    cfg.validate().map_err(|e| ConfigError::invalid("env", e.to_string()))?;
    Ok(cfg)
}

/// Bundled experiment presets as `(name, config text)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("hypergrid-8x8", include_str!("presets/hypergrid-8x8.toml")),
    ("hypergrid-8x8x8", include_str!("presets/hypergrid-8x8x8.toml")),
    ("hypergrid-16x16x16", include_str!("presets/hypergrid-16x16x16.toml")),
    ("hypergrid-20^4", include_str!("presets/hypergrid-20^4.toml")),
    ("risky-small", include_str!("presets/risky-small.toml")),
    ("risky-large", include_str!("presets/risky-large.toml")),
    ("sparse-R0-sweep", include_str!("presets/sparse-R0-sweep.toml")),
    ("seqgen-desk", include_str!("presets/seqgen-desk.toml")),
    ("seqgen-120", include_str!("presets/seqgen-120.toml")),
    ("two-arm", include_str!("presets/two-arm.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let text = PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    RunConfig::from_toml(text)
}

/// Variants of a preset for sweeps, keyed by label (e.g. the `R0` values of
/// `sparse-R0-sweep`). Other presets yield a single unlabeled entry.
pub fn expand_sweep(name: &str, cfg: &RunConfig) -> BTreeMap<String, RunConfig> {
    let mut out = BTreeMap::new();
    if name == "sparse-R0-sweep" {
        for k in 4..=9 {
            let mut c = cfg.clone();
            if let EnvConfig::Hypergrid(g) = &mut c.env {
                g.r0 = 10f64.powi(-k);
            }
            out.insert(format!("R0=1e-{k}"), c);
        }
    } else {
        out.insert(String::new(), cfg.clone());
    }
    out
}
