use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::env::{Environment, Trajectory};
use crate::quantile::PinballKind;
use crate::Scalar;

use super::{
    encode_states, out_side, parent_edges, trajectory_loss_states, LevelRow, LossError, LossState, QuantileFlowModel,
    StateTable,
};

/// Level counts and pinball shape of the quantile-matching loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QmSettings<T> {
    /// In-flow levels `β_i`.
    pub n: usize,
    /// Out-flow levels `β̃_j`.
    pub n_tilde: usize,
    pub pinball: PinballKind<T>,
    /// Whether the out-flow side of `δ` is differentiated. When false it is
    /// a constant target, as with a frozen target network.
    pub target_gradient: bool,
}

impl<T: Scalar> Default for QmSettings<T> {
    fn default() -> Self {
        QmSettings { n: 8, n_tilde: 8, pinball: PinballKind::default(), target_gradient: true }
    }
}

/// Levels for one loss state: `(β_1..β_N, β̃_1..β̃_Ñ)`.
pub type LevelSet<T> = (Vec<T>, Vec<T>);

fn draw_levels<T: Scalar, R: Rng + ?Sized>(
    model: &QuantileFlowModel,
    count: usize,
    settings: &QmSettings<T>,
    rng: &mut R,
) -> Vec<LevelSet<T>> {
    (0..count)
        .map(|_| {
            let b = (0..settings.n).map(|_| model.sample_level(rng)).collect();
            let bt = (0..settings.n_tilde).map(|_| model.sample_level(rng)).collect();
            (b, bt)
        })
        .collect()
}

/// `scale · Σ_s (1/Ñ) Σ_i Σ_j ρ_{β_i}(δ^{β_i,β̃_j}(s))` with the given levels,
/// where `δ = LSE_children Z^log_{β̃_j} − LSE_parents Z^log_{β_i}` and the
/// children side is `log R` at terminal states.
pub fn qm_loss_with_levels<E: Environment, T: Scalar>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    items: &[LossState<E::State>],
    levels: &[LevelSet<T>],
    pinball: PinballKind<T>,
    scale: T,
) -> Result<(Tape<T>, Var), LossError> {
    levels_loss(model, store, env, items, levels, pinball, scale, true)
}

/// [`qm_loss_with_levels`] with the out-flow side held constant.
pub fn qm_loss_with_levels_fixed_target<E: Environment, T: Scalar>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    items: &[LossState<E::State>],
    levels: &[LevelSet<T>],
    pinball: PinballKind<T>,
    scale: T,
) -> Result<(Tape<T>, Var), LossError> {
    levels_loss(model, store, env, items, levels, pinball, scale, false)
}

#[allow(clippy::too_many_arguments)]
fn levels_loss<E: Environment, T: Scalar>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    items: &[LossState<E::State>],
    levels: &[LevelSet<T>],
    pinball: PinballKind<T>,
    scale: T,
    target_gradient: bool,
) -> Result<(Tape<T>, Var), LossError> {
    if items.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if levels.len() != items.len() || levels.iter().any(|l| l.0.is_empty() || l.1.is_empty()) {
        return Err(LossError::Config("one nonempty level set per loss state is required".into()));
    }
    let mut table = StateTable::new();
    let mut rows: Vec<LevelRow<T>> = Vec::new();
    let mut in_entries: Vec<(usize, usize)> = Vec::new();
    let mut in_off = vec![0];
    let mut out_entries: Vec<(usize, usize)> = Vec::new();
    let mut out_off = vec![0];
    let mut log_rewards = Vec::new();
    // Per item: first in-segment, and either the first out-segment or a reward slot.
    let mut layout: Vec<(usize, Result<usize, usize>)> = Vec::with_capacity(items.len());
    for (item, (betas, betas_t)) in items.iter().zip(levels) {
        let parents: Vec<(usize, usize)> = parent_edges(env, &item.state)?
            .iter()
            .map(|(p, act)| (table.intern(p), *act))
            .collect();
        let first_in = in_off.len() - 1;
        for &b in betas {
            for &(p, act) in &parents {
                in_entries.push((rows.len(), act));
                rows.push(LevelRow { state: p, level: b });
            }
            in_off.push(in_entries.len());
        }
        match out_side(env, item)? {
            Err(lr) => {
                layout.push((first_in, Err(log_rewards.len())));
                log_rewards.push(T::of(lr));
            }
            Ok(acts) => {
                let s = table.intern(&item.state);
                let first_out = out_off.len() - 1;
                for &bt in betas_t {
                    let r = rows.len();
                    rows.push(LevelRow { state: s, level: bt });
                    out_entries.extend(acts.iter().map(|&act| (r, act)));
                    out_off.push(out_entries.len());
                }
                layout.push((first_in, Ok(first_out)));
            }
        }
    }

    let mut tape = Tape::new();
    let x = tape.constant(table.features(env));
    let q = model.forward_tape(&mut tape, store, x, &rows);
    let picked_in = tape.take(q.var, in_entries.iter().map(|&(r, a)| q.flat_index(r, a)).collect());
    let inflow = tape.segment_logsumexp(picked_in, in_off);

    let segments = out_off.len() - 1;
    let mut parts = Vec::new();
    if segments > 0 {
        let picked_out = tape.take(q.var, out_entries.iter().map(|&(r, a)| q.flat_index(r, a)).collect());
        let out = tape.segment_logsumexp(picked_out, out_off);
        parts.push(if target_gradient {
            out
        } else {
            let v = tape.value(out).clone();
            tape.constant(v)
        });
    }
    if !log_rewards.is_empty() {
        let n = log_rewards.len();
        parts.push(tape.constant(Array2::from_shape_vec((n, 1), log_rewards).expect("column")));
    }
    let out_all = tape.concat_rows(&parts);

    let mut in_sel = Vec::new();
    let mut out_sel = Vec::new();
    let mut level_col = Vec::new();
    for ((first_in, out), (betas, betas_t)) in layout.iter().zip(levels) {
        for (i, &b) in betas.iter().enumerate() {
            for j in 0..betas_t.len() {
                in_sel.push(first_in + i);
                out_sel.push(match *out {
                    Ok(first_out) => first_out + j,
                    Err(k) => segments + k,
                });
                level_col.push(b);
            }
        }
    }
    let n_tilde = levels[0].1.len();
    let inflow = tape.take(inflow, in_sel);
    let outflow = tape.take(out_all, out_sel);
    let delta = tape.sub(outflow, inflow);
    let n = level_col.len();
    let lv = Array2::from_shape_vec((n, 1), level_col).expect("column");
    let rho = tape.pinball(delta, lv, pinball);
    let total = tape.sum(rho);
    let loss = tape.scale(total, scale / T::of(n_tilde as f64));
    tape.check_finite()?;
    Ok((tape, loss))
}

/// Quantile-matching loss over `items` with freshly drawn levels.
pub fn qm_loss_states<E: Environment, T: Scalar, R: Rng + ?Sized>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    items: &[LossState<E::State>],
    settings: &QmSettings<T>,
    scale: T,
    rng: &mut R,
) -> Result<(Tape<T>, Var), LossError> {
    if settings.n == 0 || settings.n_tilde == 0 {
        return Err(LossError::Config("N and Ñ must be at least 1".into()));
    }
    let levels = draw_levels(model, items.len(), settings, rng);
    levels_loss(model, store, env, items, &levels, settings.pinball, scale, settings.target_gradient)
}

/// Quantile-matching loss at a single non-initial state.
pub fn qm_loss<E: Environment, T: Scalar, R: Rng + ?Sized>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    state: &E::State,
    log_reward: Option<f64>,
    settings: &QmSettings<T>,
    rng: &mut R,
) -> Result<T, LossError> {
    let item = LossState { state: state.clone(), log_reward };
    let (tape, loss) = qm_loss_states(model, store, env, &[item], settings, T::one(), rng)?;
    Ok(tape.scalar(loss))
}

/// Per-state losses summed along each trajectory and averaged over the batch.
pub fn qm_loss_trajectories<E: Environment, T: Scalar, R: Rng + ?Sized>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    trajs: &[Trajectory<E::State>],
    settings: &QmSettings<T>,
    rng: &mut R,
) -> Result<(Tape<T>, Var), LossError> {
    if trajs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let items = trajectory_loss_states(trajs)?;
    qm_loss_states(model, store, env, &items, settings, T::of(1.0 / trajs.len() as f64), rng)
}

/// `δ^{β,β̃}(s) = LSE_children Z^log_β̃(s→c) − LSE_parents Z^log_β(p→s)`.
pub fn qm_delta<E: Environment, T: Scalar>(
    model: &QuantileFlowModel,
    store: &ParamStore<T>,
    env: &E,
    state: &E::State,
    beta: T,
    beta_tilde: T,
    log_reward: Option<f64>,
) -> Result<T, LossError> {
    let item = LossState { state: state.clone(), log_reward };
    let parents = parent_edges(env, state)?;
    let out = out_side(env, &item)?;
    let mut states: Vec<&E::State> = parents.iter().map(|p| &p.0).collect();
    states.push(state);
    let x = encode_states(env, &states);
    let mut rows: Vec<LevelRow<T>> = (0..parents.len()).map(|k| LevelRow { state: k, level: beta }).collect();
    rows.push(LevelRow { state: parents.len(), level: beta_tilde });
    let q = model.log_quantiles(store, &x, &rows);
    let lse = |it: &mut dyn Iterator<Item = T>| -> T {
        let v: Vec<T> = it.collect();
        let m = v.iter().copied().fold(T::neg_infinity(), T::max);
        m + v.iter().map(|&z| (z - m).exp()).sum::<T>().ln()
    };
    let inflow = lse(&mut parents.iter().enumerate().map(|(k, (_, act))| q[[k, *act]]));
    let outflow = match out {
        Err(lr) => T::of(lr),
        Ok(acts) => lse(&mut acts.iter().map(|&act| q[[parents.len(), act]])),
    };
    Ok(outflow - inflow)
}
