use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

// Reference inverse-normal values computed with 30-digit mpmath (sqrt(2)·erfinv(2p−1)).
const INV_NORMAL_REF: [(f64, f64); 11] = [
    (0.975, 1.9599639845400542355),
    (1e-10, -6.3613409024040562047),
    (0.001, -3.0902323061678135415),
    (0.02425, -1.9729610513118848503),
    (0.1, -1.281551565544600467),
    (0.3, -0.52440051270804078404),
    (0.5, 0.0),
    (0.7, 0.52440051270804078404),
    (0.9, 1.281551565544600467),
    (0.99, 2.3263478740408411009),
    (0.999999, 4.7534243088228989482),
];

#[test]
fn inverse_normal_matches_reference() {
    for (p, want) in INV_NORMAL_REF {
        let got = normal_cdf_inv(p).unwrap();
        assert!((got - want).abs() < 1e-8, "p={p}: {got} vs {want}");
    }
    assert_eq!(normal_cdf_inv(0.5).unwrap(), 0.0);
    assert_abs_diff_eq!(normal_cdf_inv(0.975).unwrap(), 1.959964, epsilon = 1e-6);
}

#[test]
fn inverse_normal_round_trip() {
    for k in 1..=99 {
        let p = k as f64 / 100.0;
        let back = normal_cdf(normal_cdf_inv(p).unwrap());
        assert!((back - p).abs() < 1e-8, "p={p}: {back}");
    }
}

#[test]
fn inverse_normal_rejects_endpoints() {
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(normal_cdf_inv(p).is_err(), "p={p}");
    }
}

#[test]
fn distortion_examples() {
    for b in [0.0, 0.1, 0.37, 0.5, 0.999, 1.0] {
        assert_eq!(Distortion::Cpw(1.0).apply(b).unwrap(), b);
        assert_eq!(Distortion::Wang(0.0).apply(b).unwrap(), b);
        assert_eq!(Distortion::Cvar(1.0).apply(b).unwrap(), b);
        assert_eq!(Distortion::Identity.apply(b).unwrap(), b);
    }
    assert_abs_diff_eq!(Distortion::Cvar(0.1).apply(0.5).unwrap(), 0.05, epsilon = 1e-15);
    // mpmath reference values
    assert_abs_diff_eq!(Distortion::Cpw(0.71).apply(0.3).unwrap(), 0.32839534265563031663, epsilon = 1e-12);
    assert_abs_diff_eq!(Distortion::Wang(-0.75).apply(0.3).unwrap(), 0.10126075536007172512, epsilon = 1e-8);
}

#[test]
fn distortion_endpoints_are_finite() {
    let measures = [
        Distortion::Cpw(0.5),
        Distortion::Cpw(2.0),
        Distortion::Wang(-0.75),
        Distortion::Wang(0.75),
        Distortion::Cvar(0.25),
    ];
    for g in measures {
        assert_eq!(g.apply(0.0).unwrap(), 0.0, "{g}");
        let top = g.apply(1.0).unwrap();
        match g {
            Distortion::Cvar(eta) => assert_eq!(top, eta),
            _ => assert_eq!(top, 1.0, "{g}"),
        }
    }
}

#[test]
fn distortion_validation() {
    assert!(Distortion::cpw(0.0).is_err());
    assert!(Distortion::cpw(-1.0).is_err());
    assert!(Distortion::cvar(1.5).is_err());
    assert!(Distortion::wang(f64::NAN).is_err());
    assert!(Distortion::Identity.apply(1.01).is_err());
    assert!(Distortion::Cvar(0.5).apply(-0.01).is_err());
    assert_eq!(Distortion::from_name("cvar", Some(0.1)).unwrap(), Distortion::Cvar(0.1));
    assert_eq!(Distortion::from_name("identity", None).unwrap(), Distortion::Identity);
    assert!(Distortion::from_name("wang", None).is_err());
    assert!(Distortion::from_name("median", Some(1.0)).is_err());
}

fn measure_grid() -> Vec<Distortion> {
    let mut v = vec![Distortion::Identity];
    v.extend([0.5, 0.71, 1.0, 2.0].map(Distortion::Cpw));
    v.extend([-0.75, 0.0, 0.75].map(Distortion::Wang));
    v.extend([0.1, 0.25, 1.0].map(Distortion::Cvar));
    v
}

proptest! {
    #[test]
    fn distortions_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for g in measure_grid() {
            let (glo, ghi) = (g.apply(lo).unwrap(), g.apply(hi).unwrap());
            prop_assert!(glo <= ghi + 1e-15, "{} not monotone at {} {}", g, lo, hi);
            prop_assert!((0.0..=1.0).contains(&glo) && (0.0..=1.0).contains(&ghi));
        }
    }

    #[test]
    fn pinball_asymmetry(t in 1e-6f64..100.0, beta in 0.001f64..0.999) {
        let pos = pinball_loss(t, beta, PinballKind::L1).unwrap();
        let neg = pinball_loss(-t, beta, PinballKind::L1).unwrap();
        let ratio = pos / neg;
        prop_assert!((ratio - beta / (1.0 - beta)).abs() <= 1e-12 * (beta / (1.0 - beta)).max(1.0));
    }
}

#[test]
fn pinball_examples() {
    assert_abs_diff_eq!(pinball_loss(1.0, 0.9, PinballKind::L1).unwrap(), 0.9, epsilon = 1e-15);
    assert_abs_diff_eq!(pinball_loss(-1.0, 0.9, PinballKind::L1).unwrap(), 0.1, epsilon = 1e-15);
    for b in [0.0, 0.3, 1.0] {
        assert_eq!(pinball_loss(0.0, b, PinballKind::L1).unwrap(), 0.0);
        assert_eq!(pinball_loss(0.0, b, PinballKind::Huber { kappa: 1.0 }).unwrap(), 0.0);
    }
    let h = PinballKind::huber(1.0).unwrap();
    assert_abs_diff_eq!(pinball_loss(0.5, 0.5, h).unwrap(), 0.5 * 0.125, epsilon = 1e-15);
    assert_abs_diff_eq!(pinball_loss(-3.0, 0.25, h).unwrap(), 0.75 * 2.5, epsilon = 1e-15);
    assert!(PinballKind::huber(0.0).is_err());
    assert!(pinball_loss(1.0, 0.5, PinballKind::Huber { kappa: -1.0 }).is_err());
    assert!(pinball_loss(1.0, 1.5, PinballKind::L1).is_err());
}

#[test]
fn distorted_expectation_examples() {
    let constant = AnalyticQuantile::new(|_b: f64| 4.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for g in measure_grid() {
        for n in [1, 7, 64] {
            let v: f64 = distorted_expectation(&constant, g, n, Levels::Sampled(&mut rng)).unwrap();
            assert_abs_diff_eq!(v, 4.2, epsilon = 1e-12);
        }
    }

    let uniform = AnalyticQuantile::new(|b: f64| b).unwrap();
    for n in [1, 2, 10, 1000] {
        let mean: f64 = distorted_expectation(&uniform, Distortion::Identity, n, Levels::<ChaCha8Rng>::Midpoint).unwrap();
        assert!((mean - 0.5).abs() <= 1.0 / (2.0 * n as f64));
    }
    // ∫ ηβ dβ = η/2
    let cvar: f64 = distorted_expectation(&uniform, Distortion::Cvar(0.1), 100, Levels::<ChaCha8Rng>::Midpoint).unwrap();
    assert_abs_diff_eq!(cvar, 0.05, epsilon = 1e-12);
    let sampled: f64 = distorted_expectation(&uniform, Distortion::Cvar(0.1), 100_000, Levels::Sampled(&mut rng)).unwrap();
    assert_abs_diff_eq!(sampled, 0.05, epsilon = 1e-3);
    assert!(distorted_expectation(&uniform, Distortion::Identity, 0, Levels::<ChaCha8Rng>::Midpoint).is_err());
}

#[test]
fn analytic_stub_must_be_monotone() {
    assert!(matches!(AnalyticQuantile::new(|b: f64| -b), Err(QuantileError::NotMonotone)));
}

#[test]
fn explicit_grid_rules() {
    assert!(matches!(ExplicitGrid::new(vec![1.0, 0.5]), Err(QuantileError::NotMonotone)));
    assert!(ExplicitGrid::<f64>::new(vec![]).is_err());
    let g = ExplicitGrid::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(g.quantile(0.0), 1.0);
    assert_eq!(g.quantile(0.3), 2.0);
    assert_eq!(g.quantile(1.0), 4.0);
    assert_eq!(g.level(0), 0.125);
    assert_eq!(g.cdf(2.5), 0.5);
}

#[test]
fn sum_of_constants_is_constant() {
    let a = ExplicitGrid::new(vec![2.0; 5]).unwrap();
    let b = ExplicitGrid::new(vec![-0.5; 5]).unwrap();
    let s = sum_quantiles(&[a, b]).unwrap();
    assert!(s.values().iter().all(|&v| v == 1.5));
}

#[test]
fn sum_of_uniform_grids_doubles() {
    let m = 50;
    let u = ExplicitGrid::new(midpoint_levels(m)).unwrap();
    let s = sum_quantiles(&[u.clone(), u]).unwrap();
    for k in 0..m {
        let beta: f64 = s.level(k);
        assert_abs_diff_eq!(s.quantile(beta), 2.0 * beta, epsilon = 1e-12);
    }
}

#[test]
fn sum_rejects_mismatched_grids() {
    let a = ExplicitGrid::new(vec![0.0; 4]).unwrap();
    let b = ExplicitGrid::new(vec![0.0; 5]).unwrap();
    assert_eq!(sum_quantiles(&[a, b]).unwrap_err(), QuantileError::GridMismatch(4, 5));
    assert!(sum_quantiles::<f64>(&[]).is_err());
}

#[test]
fn comonotone_sum_of_three_atom_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = DiscreteDistribution::new(vec![(0.0, 0.2), (1.0, 0.5), (5.0, 0.3)]).unwrap();
    let b = DiscreteDistribution::new(vec![(-2.0, 0.6), (3.0, 0.1), (4.0, 0.3)]).unwrap();
    let d = comonotone_sum_distance(&[a, b], 10_000, 1_000_000, &mut rng).unwrap();
    assert!(d < 0.01, "kolmogorov distance {d}");
}

#[test]
fn discrete_distribution_inverse() {
    let d = DiscreteDistribution::new(vec![(3.0, 0.5), (1.0, 0.25), (2.0, 0.25)]).unwrap();
    assert_eq!(d.inverse_cdf(0.1), 1.0);
    assert_eq!(d.inverse_cdf(0.25), 1.0);
    assert_eq!(d.inverse_cdf(0.26), 2.0);
    assert_eq!(d.inverse_cdf(1.0), 3.0);
    assert_eq!(d.cdf(2.0), 0.5);
    assert_abs_diff_eq!(d.mean(), 2.25);
    assert!(DiscreteDistribution::new(vec![(1.0, 0.4)]).is_err());
}

/// Smallest grid point minimising the average pinball loss against `atoms`.
fn pinball_argmin(atoms: &[f64], beta: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=n {
        let x = lo + k as f64 * step;
        let loss: f64 = atoms
            .iter()
            .map(|&z| pinball_loss(z - x, beta, PinballKind::L1).unwrap())
            .sum::<f64>()
            / atoms.len() as f64;
        if loss < best.0 - 1e-12 {
            best = (loss, x);
        }
    }
    best.1
}

#[test]
fn pinball_minimiser_recovers_empirical_quantiles() {
    let atoms = [0.3, -1.2, 2.5, 0.9, 4.1, -0.4, 1.7, 3.3, 0.05, 2.2];
    let dist = DiscreteDistribution::empirical(&atoms).unwrap();
    let step = 1e-3;
    for beta in [0.1, 0.5, 0.9] {
        let x = pinball_argmin(&atoms, beta, -3.0, 6.0, step);
        let q = dist.inverse_cdf(beta);
        assert!((x - q).abs() <= step, "beta {beta}: argmin {x}, quantile {q}");
    }
}

#[test]
fn crossing_rate_counts_decreases() {
    assert_eq!(crossing_rate(&[1.0, 2.0, 3.0]), 0.0);
    assert_eq!(crossing_rate(&[1.0, 0.0, 3.0, 2.0, 5.0]), 0.5);
    assert_eq!(crossing_rate::<f64>(&[1.0]), 0.0);
}
