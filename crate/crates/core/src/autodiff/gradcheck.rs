//! Central finite-difference gradient checking.

use super::{ParamStore, Tape, Var};

/// Outcome of [`check_gradients`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest relative error over the compared coordinates.
    pub worst_relative: f64,
    /// Fraction of coordinates skipped because the function has a kink there.
    pub skipped_fraction: f64,
    pub compared: usize,
}

/// Compares reverse-mode gradients of `f` with central differences of step
/// `h` for every parameter coordinate.
///
/// A coordinate is skipped when the one-sided slopes disagree, which happens
/// when `x ± h` straddles a kink (ReLU, clamp, pinball). The relative error
/// uses a floor on the magnitude of `max(1e-6, 1e5·ε·max(|f|, 1)/h)`: the
/// difference quotient cannot resolve gradients much below `ε·|f|/h`.
pub fn check_gradients(
    store: &mut ParamStore<f64>,
    h: f64,
    f: &dyn Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
) -> Result<GradCheck, super::AutodiffError> {
    let mut tape = Tape::new();
    let out = f(&mut tape, store);
    let f0 = tape.scalar(out);
    let grads = tape.backward(out)?;
    let eval = |s: &ParamStore<f64>| {
        let mut t = Tape::new();
        let o = f(&mut t, s);
        t.scalar(o)
    };
    let floor = (1e5 * f64::EPSILON * f0.abs().max(1.0) / h).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut compared = 0;
    for id in store.ids().collect::<Vec<_>>() {
        let g = grads.dense(id, store);
        for k in 0..g.len() {
            let (r, c) = (k / g.ncols(), k % g.ncols());
            let orig = store.get(id)[[r, c]];
            store.get_mut(id)[[r, c]] = orig + h;
            let fp = eval(store);
            store.get_mut(id)[[r, c]] = orig - h;
            let fm = eval(store);
            store.get_mut(id)[[r, c]] = orig;
            let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-3) {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = g[[r, c]];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(floor);
            worst = worst.max(rel);
            compared += 1;
        }
    }
    Ok(GradCheck {
        worst_relative: worst,
        skipped_fraction: skipped as f64 / store.numel().max(1) as f64,
        compared,
    })
}
