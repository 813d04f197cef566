use rand::Rng;

use crate::env::{Environment, Trajectory};

use super::TrainError;

/// Index drawn from `probs` with one uniform; zero-probability entries are
/// never chosen.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Samples `batch` complete trajectories in lockstep.
///
/// `policy` maps a slice of states to action distributions; it is called once
/// per depth with every unfinished trajectory's current state. With
/// probability `epsilon` an action is instead drawn uniformly among the valid
/// ones. `log_pf` records the unmixed policy's log-probability.
pub fn sample_trajectories<E, R, P>(
    env: &E,
    batch: usize,
    epsilon: f64,
    rng: &mut R,
    mut policy: P,
) -> Result<Vec<Trajectory<E::State>>, TrainError>
where
    E: Environment,
    R: Rng + ?Sized,
    P: FnMut(&[&E::State], &mut R) -> Result<Vec<Vec<f64>>, TrainError>,
{
    let s0 = env.initial_state();
    let mut trajs: Vec<Trajectory<E::State>> = (0..batch)
        .map(|_| Trajectory { states: vec![s0.clone()], actions: Vec::new(), reward: 0.0, log_pf: Vec::new() })
        .collect();
    let mut active: Vec<usize> = (0..batch).collect();
    while !active.is_empty() {
        let current: Vec<&E::State> = active.iter().map(|&t| trajs[t].terminal()).collect();
        let probs = policy(&current, rng)?;
        let mut moves = Vec::with_capacity(active.len());
        for (k, p) in probs.iter().enumerate() {
            let s = current[k];
            let kids = env.children(s);
            if kids.is_empty() {
                return Err(TrainError::DeadEnd(env.display(s)));
            }
            let explore = epsilon > 0.0 && rng.gen::<f64>() < epsilon;
            let (a, child) = if explore {
                kids[rng.gen_range(0..kids.len())].clone()
            } else {
                let a = sample_categorical(p, rng);
                kids.into_iter()
                    .find(|c| c.0 == a)
                    .ok_or_else(|| TrainError::DeadEnd(format!("{} has no action {a}", env.display(s))))?
            };
            moves.push((a, child, p[a].ln()));
        }
        let mut still = Vec::with_capacity(active.len());
        for (&t, (a, child, lp)) in active.iter().zip(moves) {
            let done = env.is_terminal(&child);
            let traj = &mut trajs[t];
            traj.actions.push(a);
            traj.log_pf.push(lp);
            traj.states.push(child);
            if done {
                traj.reward = env.draw_reward(traj.terminal(), rng)?;
            } else {
                still.push(t);
            }
        }
        active = still;
    }
    Ok(trajs)
}
