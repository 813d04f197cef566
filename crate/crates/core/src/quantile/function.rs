//! Quantile-function representations and the integrals built on them.

use rand::Rng;

use super::{Distortion, QuantileError};
use crate::Scalar;

/// `β ↦ Q(β)` on `[0, 1]`.
pub trait QuantileFunction<T: Scalar> {
    fn quantile(&self, beta: T) -> T;
}

impl<T: Scalar, Q: QuantileFunction<T> + ?Sized> QuantileFunction<T> for &Q {
    fn quantile(&self, beta: T) -> T {
        (**self).quantile(beta)
    }
}

/// `M` nondecreasing values at the midpoint levels `(k + ½)/M`, evaluated as a
/// step function.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitGrid<T> {
    values: Vec<T>,
}

impl<T: Scalar> ExplicitGrid<T> {
    pub fn new(values: Vec<T>) -> Result<Self, QuantileError> {
        if values.is_empty() {
            return Err(QuantileError::BadParameter("empty quantile grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QuantileError::BadParameter("non-finite quantile value".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(QuantileError::NotMonotone);
        }
        Ok(ExplicitGrid { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn resolution(&self) -> usize {
        self.values.len()
    }

    /// Level of slot `k`.
    pub fn level(&self, k: usize) -> T {
        T::of((k as f64 + 0.5) / self.values.len() as f64)
    }

    /// `P(Q(U) ≤ z)` for `U` uniform: the fraction of slots at or below `z`.
    pub fn cdf(&self, z: T) -> f64 {
        let below = self.values.partition_point(|&v| v <= z);
        below as f64 / self.values.len() as f64
    }
}

impl<T: Scalar> QuantileFunction<T> for ExplicitGrid<T> {
    fn quantile(&self, beta: T) -> T {
        let m = self.values.len();
        let k = (beta.to_f64_lossy() * m as f64).floor();
        let k = if k.is_nan() || k < 0.0 { 0 } else { (k as usize).min(m - 1) };
        self.values[k]
    }
}

/// Closed-form quantile function used as a test stub.
pub struct AnalyticQuantile<F> {
    f: F,
}

impl<F> AnalyticQuantile<F> {
    /// Rejects functions that decrease anywhere on a 1001-point grid.
    pub fn new<T: Scalar>(f: F) -> Result<Self, QuantileError>
    where
        F: Fn(T) -> T,
    {
        let mut prev = f(T::zero());
        for i in 1..=1000 {
            let cur = f(T::of(i as f64 / 1000.0));
            if cur < prev {
                return Err(QuantileError::NotMonotone);
            }
            prev = cur;
        }
        Ok(AnalyticQuantile { f })
    }
}

impl<T: Scalar, F: Fn(T) -> T> QuantileFunction<T> for AnalyticQuantile<F> {
    fn quantile(&self, beta: T) -> T {
        (self.f)(beta)
    }
}

/// How the levels of a distorted expectation are chosen.
pub enum Levels<'a, R: Rng + ?Sized> {
    /// Midpoints `(i + ½)/N`.
    Midpoint,
    /// i.i.d. uniform draws.
    Sampled(&'a mut R),
}

/// Midpoint levels `(i + ½)/n`.
pub fn midpoint_levels(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// `(1/N) Σ_i Q(g(β_i))`, the estimate of `∫ Q(g(β)) dβ`.
pub fn distorted_expectation<T, Q, R>(
    q: &Q,
    g: Distortion,
    n: usize,
    levels: Levels<'_, R>,
) -> Result<T, QuantileError>
where
    T: Scalar,
    Q: QuantileFunction<T> + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(QuantileError::BadParameter("need at least one level".into()));
    }
    let betas: Vec<f64> = match levels {
        Levels::Midpoint => midpoint_levels(n),
        Levels::Sampled(rng) => (0..n).map(|_| rng.gen::<f64>()).collect(),
    };
    let mut total = T::zero();
    for b in betas {
        total += q.quantile(T::of(g.apply(b)?));
    }
    Ok(total / T::of(n as f64))
}

/// Pointwise sum of quantile grids: the quantile function of the comonotone sum.
pub fn sum_quantiles<T: Scalar>(grids: &[ExplicitGrid<T>]) -> Result<ExplicitGrid<T>, QuantileError> {
    let first = grids
        .first()
        .ok_or_else(|| QuantileError::BadParameter("no grids to sum".into()))?;
    let m = first.resolution();
    if let Some(bad) = grids.iter().find(|g| g.resolution() != m) {
        return Err(QuantileError::GridMismatch(m, bad.resolution()));
    }
    let values = (0..m).map(|k| grids.iter().map(|g| g.values[k]).sum()).collect();
    ExplicitGrid::new(values)
}

/// Finitely supported distribution `{(value, probability)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self, QuantileError> {
        if atoms.is_empty() {
            return Err(QuantileError::BadParameter("empty support".into()));
        }
        if atoms.iter().any(|&(v, p)| !v.is_finite() || !(p >= 0.0)) {
            return Err(QuantileError::BadParameter("support needs finite values and p ≥ 0".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QuantileError::BadParameter(format!("probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        Ok(DiscreteDistribution { atoms, cumulative })
    }

    /// Equal-weight empirical distribution of `samples`.
    pub fn empirical(samples: &[f64]) -> Result<Self, QuantileError> {
        let w = 1.0 / samples.len().max(1) as f64;
        Self::new(samples.iter().map(|&v| (v, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= z);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Generalized inverse `inf{z : F(z) ≥ β}`.
    pub fn inverse_cdf(&self, beta: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < beta - 1e-12);
        self.atoms[k.min(self.atoms.len() - 1)].0
    }

    /// Quantile grid at midpoint levels.
    pub fn to_grid(&self, m: usize) -> ExplicitGrid<f64> {
        ExplicitGrid::new(midpoint_levels(m).into_iter().map(|b| self.inverse_cdf(b)).collect())
            .expect("inverse CDF is nondecreasing")
    }
}

/// Kolmogorov distance between the empirical CDF of comonotone-coupled sums
/// of `dists` and the CDF implied by the summed quantile grid.
///
/// Samples are drawn by inverting each distribution's own CDF at one shared
/// uniform level, independently of the grids.
pub fn comonotone_sum_distance<R: Rng + ?Sized>(
    dists: &[DiscreteDistribution],
    resolution: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64, QuantileError> {
    if samples == 0 {
        return Err(QuantileError::BadParameter("need at least one sample".into()));
    }
    let grids: Vec<_> = dists.iter().map(|d| d.to_grid(resolution)).collect();
    let summed = sum_quantiles(&grids)?;

    let mut draws: Vec<f64> = (0..samples)
        .map(|_| {
            let u: f64 = rng.gen();
            dists.iter().map(|d| d.inverse_cdf(u)).sum()
        })
        .collect();
    draws.sort_by(f64::total_cmp);

    let mut points: Vec<f64> = draws.clone();
    points.extend_from_slice(summed.values());
    points.sort_by(f64::total_cmp);
    points.dedup();

    let n = samples as f64;
    let mut worst: f64 = 0.0;
    for z in points {
        let emp = draws.partition_point(|&v| v <= z) as f64 / n;
        worst = worst.max((emp - summed.cdf(z)).abs());
    }
    Ok(worst)
}

/// Fraction of adjacent level pairs whose values decrease.
pub fn crossing_rate<T: Scalar>(values_by_level: &[T]) -> f64 {
    if values_by_level.len() < 2 {
        return 0.0;
    }
    let crossings = values_by_level.windows(2).filter(|w| w[1] < w[0]).count();
    crossings as f64 / (values_by_level.len() - 1) as f64
}
