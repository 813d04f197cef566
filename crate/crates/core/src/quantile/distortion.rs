use super::normal::{normal_cdf, normal_cdf_inv};
use super::QuantileError;
use crate::Scalar;

/// Monotone reweighting `g: [0, 1] → [0, 1]` of quantile levels.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Distortion {
    #[default]
    Identity,
    /// Cumulative probability weighting, `η > 0`.
    Cpw(f64),
    /// `Φ(Φ⁻¹(β) + η)`; `η < 0` is risk-averse.
    Wang(f64),
    /// `η·β`, `η ∈ [0, 1]`: only the lowest `η` fraction is evaluated.
    Cvar(f64),
}

impl Distortion {
    pub fn cpw(eta: f64) -> Result<Self, QuantileError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(QuantileError::BadParameter(format!("CPW eta must be > 0, got {eta}")));
        }
        Ok(Distortion::Cpw(eta))
    }

    pub fn wang(eta: f64) -> Result<Self, QuantileError> {
        if !eta.is_finite() {
            return Err(QuantileError::BadParameter(format!("Wang eta must be finite, got {eta}")));
        }
        Ok(Distortion::Wang(eta))
    }

    pub fn cvar(eta: f64) -> Result<Self, QuantileError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(QuantileError::BadParameter(format!("CVaR eta must lie in [0, 1], got {eta}")));
        }
        Ok(Distortion::Cvar(eta))
    }

    /// Builds a measure from its config name (`identity|cpw|wang|cvar`).
    pub fn from_name(name: &str, eta: Option<f64>) -> Result<Self, QuantileError> {
        let need = || eta.ok_or_else(|| QuantileError::BadParameter(format!("risk measure `{name}` needs eta")));
        match name {
            "identity" => Ok(Distortion::Identity),
            "cpw" => Self::cpw(need()?),
            "wang" => Self::wang(need()?),
            "cvar" => Self::cvar(need()?),
            other => Err(QuantileError::BadParameter(format!("unknown risk measure `{other}`"))),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Distortion::Identity)
    }

    /// `g(β)`; endpoints map without NaN.
    pub fn apply(&self, beta: f64) -> Result<f64, QuantileError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(QuantileError::LevelOutOfRange(beta));
        }
        Ok(match *self {
            Distortion::Identity => beta,
            Distortion::Cpw(eta) => {
                if eta == 1.0 {
                    beta
                } else {
                    let num = beta.powf(eta);
                    num / (num + (1.0 - beta).powf(eta)).powf(1.0 / eta)
                }
            }
            Distortion::Wang(eta) => {
                if beta == 0.0 || beta == 1.0 || eta == 0.0 {
                    beta
                } else {
                    normal_cdf(normal_cdf_inv(beta)? + eta)
                }
            }
            Distortion::Cvar(eta) => eta * beta,
        })
    }

    /// Generic-scalar convenience wrapper around [`Distortion::apply`].
    pub fn apply_to<T: Scalar>(&self, beta: T) -> Result<T, QuantileError> {
        self.apply(beta.to_f64_lossy()).map(T::of)
    }
}

impl std::fmt::Display for Distortion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Distortion::Identity => write!(f, "identity"),
            Distortion::Cpw(e) => write!(f, "cpw({e})"),
            Distortion::Wang(e) => write!(f, "wang({e})"),
            Distortion::Cvar(e) => write!(f, "cvar({e})"),
        }
    }
}
