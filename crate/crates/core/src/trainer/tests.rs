use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::config::{Algo, AlgoConfig, HeadName, TrainConfig};
use crate::env::{terminating_probabilities, Dag, RewardDistribution, TwoArm, TwoArmState};
use crate::hypergrid::{Hypergrid, HypergridConfig};

fn small_algo(algo: Algo) -> AlgoConfig {
    AlgoConfig { hidden: vec![16], fourier_dim: 8, ..AlgoConfig::new(algo) }
}

fn small_config(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig { steps, lr: 1e-3, eval_interval: 5, seed, ..Default::default() }
}

fn grid(h: usize, d: usize) -> Hypergrid {
    Hypergrid::new(HypergridConfig::new(h, d)).unwrap()
}

fn two_arm() -> TwoArm {
    TwoArm::new(
        RewardDistribution::Deterministic(1.0),
        RewardDistribution::finite(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap(),
    )
}

#[test]
fn deterministic_policy_gives_unique_trajectory() {
    let env = two_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trajs = sample_trajectories(&env, 5, 0.0, &mut rng, |states, _| {
        Ok(states
            .iter()
            .map(|s| match s {
                TwoArmState::Root => vec![0.0, 1.0, 0.0],
                _ => vec![0.0, 0.0, 1.0],
            })
            .collect())
    })
    .unwrap();
    for t in trajs {
        assert_eq!(t.states, vec![TwoArmState::Root, TwoArmState::Arm(1), TwoArmState::Stopped(1)]);
        assert_eq!(t.actions, vec![1, 2]);
        assert_eq!(t.log_pf, vec![0.0, 0.0]);
        assert!(t.reward == 1.0 || t.reward == 4.0);
        t.validate(&env).unwrap();
    }
}

fn uniform_over_mask<E: Environment>(env: &E, states: &[&E::State]) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|s| {
            let mask = env.action_mask(s);
            let k = mask.iter().filter(|&&m| m).count() as f64;
            mask.iter().map(|&m| if m { 1.0 / k } else { 0.0 }).collect()
        })
        .collect()
}

#[test]
fn same_seed_same_trajectories() {
    let env = grid(4, 2);
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_trajectories(&env, 32, 0.1, &mut rng, |s, _| Ok(uniform_over_mask(&env, s))).unwrap()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn full_exploration_matches_uniform_dp() {
    let env = grid(2, 2);
    let dag = Dag::build(&env).unwrap();
    let exact = terminating_probabilities(&env, &dag, |s| uniform_over_mask(&env, &[s]).remove(0)).unwrap();
    // With ε = 1 the supplied policy (always stop when possible) is ignored.
    let greedy = |states: &[&crate::hypergrid::GridState], _: &mut ChaCha8Rng| -> Result<_, TrainError> {
        Ok(states
            .iter()
            .map(|s| {
                let mut p = vec![0.0; env.num_actions()];
                p[env.action_mask(s).iter().rposition(|&m| m).unwrap()] = 1.0;
                p
            })
            .collect())
    };
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trajs = sample_trajectories(&env, n, 1.0, &mut rng, greedy).unwrap();
    let terminals: Vec<_> = dag.terminal_states().cloned().collect();
    for (x, &p) in terminals.iter().zip(&exact) {
        let hits = trajs.iter().filter(|t| t.terminal() == x).count() as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 3.0 * se, "{x:?}: {} vs {p}", hits / n as f64);
    }
}

#[test]
fn categorical_skips_zero_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let k = sample_categorical(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
        assert!(k == 1 || k == 3);
    }
}

#[test]
fn buffer_l1_examples() {
    let mut b = VisitBuffer::new(100, 10, 5);
    for x in [0u8, 1, 1, 2] {
        b.push(x, 1.0, None, false);
    }
    let target = [(0u8, 0.25), (1, 0.5), (2, 0.25)];
    assert!(b.l1_to(target.iter().map(|(x, p)| (x, *p))) < 1e-15);

    let mut one = VisitBuffer::new(100, 10, 5);
    for _ in 0..10 {
        one.push(3u8, 1.0, None, false);
    }
    let k = 4;
    let uniform: Vec<(u8, f64)> = (0..k as u8).map(|x| (x, 1.0 / k as f64)).collect();
    let l1 = one.l1_to(uniform.iter().map(|(x, p)| (x, *p)));
    assert!((l1 - 2.0 * (1.0 - 1.0 / k as f64)).abs() < 1e-12);
}

#[test]
fn buffer_evicts_fifo_and_tracks_extras() {
    let mut b = VisitBuffer::new(3, 2, 2);
    for (x, r) in [(1u8, 1.0), (2, 5.0), (3, 2.0), (4, 0.5)] {
        b.push(x, r, Some(x as usize % 2), x % 2 == 0);
    }
    assert_eq!(b.len(), 3);
    assert_eq!(b.window().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    assert_eq!(b.count(&1), 0);
    // Risky window holds the last two pushes: 3 (not risky) and 4 (risky).
    assert_eq!(b.violation_rate(), 0.5);
    assert_eq!(b.modes().len(), 2);
    assert_eq!(b.top(), &[(5.0, 2), (2.0, 3)]);
    assert_eq!(b.top_k_mean(10), Some(3.5));
    b.push(2, 5.0, None, false);
    assert_eq!(b.top().len(), 2);
}

#[test]
fn training_is_deterministic() {
    for algo in [Algo::Fm, Algo::Tb, Algo::Qm] {
        let run = || {
            let mut t = Trainer::new(grid(4, 2), small_algo(algo), small_config(15, 3)).unwrap();
            MetricsRecord::to_csv(&t.run(|_| {}).unwrap())
        };
        let a = run();
        assert_eq!(a, run(), "{algo:?}");
        assert_eq!(a.lines().count(), 4);
    }
}

#[test]
fn metrics_invariants_hold() {
    let mut t = Trainer::new(grid(4, 2), small_algo(Algo::Qm), small_config(30, 1)).unwrap();
    let mut visited = 0u64;
    let mut last_modes = 0;
    while !t.is_finished() {
        let before = t.states_visited();
        let loss = t.train_step().unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        let added = t.states_visited() - before;
        // Every trajectory on a 4×4 grid takes between 1 and 7 transitions.
        assert!((16..=16 * 7).contains(&added));
        visited += added;
        let m = t.evaluate().unwrap();
        assert!(m.modes_found >= last_modes && m.modes_found <= 4);
        last_modes = m.modes_found;
        assert_eq!(m.violation_rate, 0.0);
        assert!(m.l1_error.unwrap() <= 2.0 + 1e-12);
        assert!(m.l1_exact.unwrap() <= 2.0 + 1e-12);
    }
    assert_eq!(visited, t.states_visited());
    assert_eq!(t.buffer().len(), 30 * 16);
}

#[test]
fn l1_fields_absent_for_stochastic_rewards() {
    let mut t = Trainer::new(two_arm(), small_algo(Algo::Fm), small_config(5, 0)).unwrap();
    let m = t.run(|_| {}).unwrap().pop().unwrap();
    assert_eq!((m.l1_error, m.l1_exact), (None, None));
    assert!(t.exact_terminating().unwrap().is_some());
}

#[test]
fn fm_on_two_arms_reaches_geometric_target() {
    let algo = AlgoConfig { hidden: vec![16], ..AlgoConfig::new(Algo::Fm) };
    let cfg = TrainConfig { steps: 1500, lr: 1e-2, eval_interval: 500, seed: 0, ..Default::default() };
    let mut t = Trainer::new(two_arm(), algo, cfg).unwrap();
    t.run(|_| {}).unwrap();
    let p = t.exact_terminating().unwrap().unwrap();
    let terminals = t.terminals().unwrap();
    let arm1 = terminals.iter().position(|s| **s == TwoArmState::Stopped(1)).unwrap();
    assert!((p[arm1] - 2.0 / 3.0).abs() < 0.02, "{p:?}");
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    for algo in [Algo::Fm, Algo::Tb, Algo::Qm] {
        let mut t = Trainer::new(grid(4, 2), small_algo(algo), small_config(12, 5)).unwrap();
        t.set_meta("note = 1");
        t.run(|_| {}).unwrap();
        let bytes = t.checkpoint_bytes().unwrap();
        let u = Trainer::from_checkpoint_bytes(&bytes, grid(4, 2)).unwrap();
        assert_eq!(u.store(), t.store());
        assert_eq!(u.adam(), t.adam());
        assert_eq!(u.meta(), "note = 1");
        assert_eq!((u.step(), u.states_visited()), (t.step(), t.states_visited()));
        assert_eq!(u.buffer().window().collect::<Vec<_>>(), t.buffer().window().collect::<Vec<_>>());
        assert_eq!(u.buffer().top(), t.buffer().top());
        assert_eq!(u.buffer().modes(), t.buffer().modes());
        assert_eq!(u.checkpoint_bytes().unwrap(), bytes);

        let dag = Dag::build(t.env()).unwrap();
        let mut pick = ChaCha8Rng::seed_from_u64(9);
        let states: Vec<_> =
            (0..100).map(|_| dag.state(dag.interior().nth(pick.gen_range(0..9)).unwrap())).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(2);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let p1 = t.model().policies(t.store(), t.env(), &states, &mut r1).unwrap();
        let p2 = u.model().policies(u.store(), u.env(), &states, &mut r2).unwrap();
        assert_eq!(p1, p2);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = small_config(20, 4);
    let mut full = Trainer::new(grid(4, 2), small_algo(Algo::Qm), cfg.clone()).unwrap();
    let all = full.run(|_| {}).unwrap();

    let mut first = Trainer::new(grid(4, 2), small_algo(Algo::Qm), TrainConfig { steps: 10, ..cfg.clone() }).unwrap();
    let head = first.run(|_| {}).unwrap();
    let bytes = first.checkpoint_bytes().unwrap();
    let mut resumed = Trainer::from_checkpoint_bytes(&bytes, grid(4, 2)).unwrap();
    resumed.extend_steps(20);
    let tail = resumed.run(|_| {}).unwrap();
    let joined: Vec<_> = head.into_iter().chain(tail).collect();
    assert_eq!(MetricsRecord::to_csv(&joined), MetricsRecord::to_csv(&all));
    assert_eq!(resumed.store(), full.store());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let mut t = Trainer::new(grid(3, 2), small_algo(Algo::Fm), small_config(3, 0)).unwrap();
    t.run(|_| {}).unwrap();
    let bytes = t.checkpoint_bytes().unwrap();
    let expect_err = |b: &[u8], what: &str| match Trainer::from_checkpoint_bytes(b, grid(3, 2)) {
        Err(TrainError::Checkpoint(msg)) => assert!(msg.contains(what), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("damaged checkpoint accepted"),
    };

    let mut tail = bytes.clone();
    let n = tail.len();
    tail[n - 3] ^= 0xff;
    expect_err(&tail, "checksum");

    let mut body = bytes.clone();
    body[200] ^= 1;
    expect_err(&body, "checksum");

    expect_err(&bytes[..bytes.len() - 10], "checksum");
    expect_err(&bytes[..60], "checksum");
    expect_err(&bytes[..20], "truncated");
    expect_err(&bytes[..5], "truncated");

    let mut version = bytes.clone();
    version[8] = 99;
    expect_err(&version, "version");

    let mut magic = bytes.clone();
    magic[0] = b'X';
    expect_err(&magic, "magic");

    // Checkpoint of a different model shape.
    let other = Trainer::new(grid(3, 2), AlgoConfig { hidden: vec![8], ..small_algo(Algo::Fm) }, small_config(1, 0))
        .unwrap()
        .checkpoint_bytes()
        .unwrap();
    assert!(Trainer::from_checkpoint_bytes(&other, grid(3, 2)).is_ok());
    match Trainer::from_checkpoint_bytes(&other, grid(4, 2)) {
        Err(_) => {}
        Ok(_) => panic!("checkpoint loaded into a different environment"),
    }
}

#[test]
fn non_finite_loss_aborts_with_dump() {
    let mut t = Trainer::new(grid(3, 2), small_algo(Algo::Fm), small_config(3, 0)).unwrap();
    let Model::Fm(m) = t.model().clone() else { unreachable!() };
    t.store.get_mut(m.mlp.layers.last().unwrap().bias).fill(1e300);
    match t.train_step() {
        Err(TrainError::NonFinite { step, dump }) => {
            assert_eq!(step, 1);
            assert!(dump.contains("flow.") && dump.contains("batch:"), "{dump}");
        }
        other => panic!("{:?}", other.map(|_| ())),
    }
    assert_eq!(t.step(), 0);
}

#[test]
fn explicit_head_trains() {
    let algo = AlgoConfig { head: HeadName::Explicit, m: 10, hidden: vec![16], ..AlgoConfig::new(Algo::Qm) };
    let mut t = Trainer::new(grid(4, 2), algo, small_config(10, 0)).unwrap();
    let m = t.run(|_| {}).unwrap();
    assert!(m.last().unwrap().loss.is_finite());
}
