use super::QuantileError;
use crate::Scalar;

/// Base penalty `ℓ` inside the pinball loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PinballKind<T> {
    L1,
    /// `δ²/(2κ)` for `|δ| ≤ κ`, else `|δ| − κ/2`.
    Huber { kappa: T },
}

impl<T: Scalar> Default for PinballKind<T> {
    fn default() -> Self {
        PinballKind::Huber { kappa: T::one() }
    }
}

impl<T: Scalar> PinballKind<T> {
    pub fn huber(kappa: T) -> Result<Self, QuantileError> {
        if !(kappa > T::zero()) {
            return Err(QuantileError::BadParameter(format!(
                "huber kappa must be > 0, got {kappa}"
            )));
        }
        Ok(PinballKind::Huber { kappa })
    }

    fn base(self, d: T) -> T {
        match self {
            PinballKind::L1 => d.abs(),
            PinballKind::Huber { kappa } => {
                let a = d.abs();
                if a <= kappa {
                    d * d / (kappa + kappa)
                } else {
                    a - kappa / T::of(2.0)
                }
            }
        }
    }

    fn base_derivative(self, d: T) -> T {
        match self {
            PinballKind::L1 => sign(d),
            PinballKind::Huber { kappa } => {
                if d.abs() <= kappa {
                    d / kappa
                } else {
                    sign(d)
                }
            }
        }
    }

    /// `|β − 1{δ<0}|`.
    fn weight(d: T, beta: T) -> T {
        if d < T::zero() {
            T::one() - beta
        } else {
            beta
        }
    }

    pub(crate) fn eval_unchecked(self, d: T, beta: T) -> T {
        Self::weight(d, beta) * self.base(d)
    }

    pub(crate) fn derivative_unchecked(self, d: T, beta: T) -> T {
        Self::weight(d, beta) * self.base_derivative(d)
    }
}

fn sign<T: Scalar>(d: T) -> T {
    if d > T::zero() {
        T::one()
    } else if d < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Quantile-regression loss `ρ_β(δ) = |β − 1{δ<0}|·ℓ(δ)`.
pub fn pinball_loss<T: Scalar>(delta: T, beta: T, kind: PinballKind<T>) -> Result<T, QuantileError> {
    if !(beta >= T::zero() && beta <= T::one()) {
        return Err(QuantileError::LevelOutOfRange(beta.to_f64_lossy()));
    }
    if let PinballKind::Huber { kappa } = kind {
        if !(kappa > T::zero()) {
            return Err(QuantileError::BadParameter(format!("huber kappa must be > 0, got {kappa}")));
        }
    }
    Ok(kind.eval_unchecked(delta, beta))
}
