//! Tape-based reverse-mode differentiation over dense 2-D arrays.
//!
//! Every value on the tape is an `Array2`; scalars are `1×1`, column vectors
//! are `n×1`. Nodes are appended in evaluation order, so the node vector is
//! already a topological order and the backward pass is a single reverse
//! sweep.

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use super::AutodiffError;
use crate::quantile::PinballKind;
use crate::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    GatherRows(Var, Vec<usize>),
    Take(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    SegmentLogSumExp(Var, Vec<usize>),
    LogSumExpRows(Var),
    LogSoftmaxRows(Var),
    Square(Var),
    Exp(Var),
    Sum(Var),
    ClampMin(Var, T),
    Pinball(Var, Array2<T>, PinballKind<T>),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::GatherRows(..) => "gather_rows",
            Op::Take(..) => "take",
            Op::ConcatRows(..) => "concat_rows",
            Op::SegmentLogSumExp(..) => "segment_logsumexp",
            Op::LogSumExpRows(..) => "logsumexp_rows",
            Op::LogSoftmaxRows(..) => "log_softmax_rows",
            Op::Square(..) => "square",
            Op::Exp(..) => "exp",
            Op::Sum(..) => "sum",
            Op::ClampMin(..) => "clamp_min",
            Op::Pinball(..) => "pinball",
        }
    }
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
}

/// Gradients of a scalar output with respect to the parameters that were
/// bound on the tape.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Gradients { grads: Vec::new() }
    }
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `id`, or `None` when the parameter never reached the output.
    pub fn get(&self, id: ParamId) -> Option<&Array2<T>> {
        self.grads.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, materialising zeros for unreachable parameters.
    pub fn dense(&self, id: ParamId, store: &ParamStore<T>) -> Array2<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Array2::zeros(store.get(id).raw_dim()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    #[cfg(test)]
    pub(crate) fn insert(&mut self, id: ParamId, g: Array2<T>) {
        self.accumulate(id, g);
    }

    fn accumulate(&mut self, id: ParamId, g: Array2<T>) {
        let i = id.index();
        if self.grads.len() <= i {
            self.grads.resize(i + 1, None);
        }
        match &mut self.grads[i] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

/// Ordered record of primitive operations.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    nonfinite: Option<(usize, &'static str)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn finite<T: Scalar>(a: &Array2<T>) -> bool {
    a.iter().all(|v| v.is_finite())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            nonfinite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        let id = self.nodes.len();
        if self.nonfinite.is_none() && !finite(&value) {
            self.nonfinite = Some((id, op.name()));
        }
        self.nodes.push(Node { value, op });
        Var(id)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[[0, 0]]
    }

    /// First node that produced a NaN or infinity, if any.
    pub fn check_finite(&self) -> Result<(), AutodiffError> {
        match self.nonfinite {
            None => Ok(()),
            Some((node, op)) => Err(AutodiffError::NonFinite { node, op }),
        }
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn column(&mut self, values: Vec<T>) -> Var {
        let n = values.len();
        let a = Array2::from_shape_vec((n, 1), values).expect("column shape");
        self.constant(a)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a + row`, broadcasting a `1×m` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self
            .value(a)
            .mapv(|x| if x >= T::zero() { x } else { x * slope });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &rows);
        self.push(v, Op::GatherRows(a, rows))
    }

    /// Picks entries by row-major flat index into a column vector.
    pub fn take(&mut self, a: Var, flat: Vec<usize>) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let vals: Vec<T> = flat.iter().map(|&k| src[[k / cols, k % cols]]).collect();
        let v = Array2::from_shape_vec((flat.len(), 1), vals).expect("column shape");
        self.push(v, Op::Take(a, flat))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Log-sum-exp over contiguous segments of a column vector.
    ///
    /// Segment `g` covers rows `offsets[g]..offsets[g + 1]`; every segment must
    /// be nonempty.
    pub fn segment_logsumexp(&mut self, a: Var, offsets: Vec<usize>) -> Var {
        let src = self.value(a).column(0);
        let vals: Vec<T> = offsets
            .windows(2)
            .map(|w| {
                assert!(w[1] > w[0], "segment_logsumexp: empty segment");
                lse_slice(src.slice(s![w[0]..w[1]]).iter().copied())
            })
            .collect();
        let n = vals.len();
        let v = Array2::from_shape_vec((n, 1), vals).expect("column shape");
        self.push(v, Op::SegmentLogSumExp(a, offsets))
    }

    /// Row-wise log-sum-exp; `n×m` to `n×1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let vals: Vec<T> = src
            .rows()
            .into_iter()
            .map(|r| lse_slice(r.iter().copied()))
            .collect();
        let v = Array2::from_shape_vec((src.nrows(), 1), vals).expect("column shape");
        self.push(v, Op::LogSumExpRows(a))
    }

    /// Log-sum-exp over every element; returns a `1×1` node.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        if self.value(a).is_empty() {
            return Err(AutodiffError::Empty("logsumexp"));
        }
        let n = self.value(a).len();
        let flat = self.take(a, (0..n).collect());
        Ok(self.segment_logsumexp(flat, vec![0, n]))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut r in v.rows_mut() {
            let lse = lse_slice(r.iter().copied());
            r.mapv_inplace(|x| x - lse);
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(T::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    pub fn clamp_min(&mut self, a: Var, lo: T) -> Var {
        let v = self.value(a).mapv(|x| if x < lo { lo } else { x });
        self.push(v, Op::ClampMin(a, lo))
    }

    /// Elementwise pinball loss `|β − 1{δ<0}|·ℓ(δ)` with per-element levels.
    pub fn pinball(&mut self, delta: Var, levels: Array2<T>, kind: PinballKind<T>) -> Var {
        assert_eq!(
            self.value(delta).raw_dim(),
            levels.raw_dim(),
            "pinball: level shape mismatch"
        );
        let mut v = self.value(delta).clone();
        Zip::from(&mut v)
            .and(&levels)
            .for_each(|d, &b| *d = kind.eval_unchecked(*d, b));
        self.push(v, Op::Pinball(delta, levels, kind))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, AutodiffError> {
        let shape = self.value(output).dim();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarOutput(shape));
        }
        self.check_finite()?;
        let mut adj: Vec<Option<Array2<T>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Array2::ones((1, 1)));
        let mut grads = Gradients { grads: Vec::new() };

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(*id, g),
                Op::MatMul(a, b) => {
                    debug_assert!(a.0 < i && b.0 < i);
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.mapv(|x| -x));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut adj, *a, g * *c),
                Op::LeakyRelu(a, slope) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| {
                        if x < T::zero() {
                            *d *= *slope;
                        }
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(r);
                        dst += &g.row(k);
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Take(a, flat) => {
                    let src = self.value(*a);
                    let cols = src.ncols();
                    let mut ga = Array2::zeros(src.raw_dim());
                    for (k, &f) in flat.iter().enumerate() {
                        ga[[f / cols, f % cols]] += g[[k, 0]];
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(&mut adj, *p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::SegmentLogSumExp(a, offsets) => {
                    let x = self.value(*a);
                    let mut ga = Array2::zeros(x.raw_dim());
                    for (seg, w) in offsets.windows(2).enumerate() {
                        let lse = node.value[[seg, 0]];
                        let gs = g[[seg, 0]];
                        for r in w[0]..w[1] {
                            ga[[r, 0]] = gs * (x[[r, 0]] - lse).exp();
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let x = self.value(*a);
                    let mut ga = x.clone();
                    for ((mut r, lse), gr) in ga
                        .rows_mut()
                        .into_iter()
                        .zip(node.value.column(0))
                        .zip(g.column(0))
                    {
                        r.mapv_inplace(|v| *gr * (v - *lse).exp());
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for (mut gr, y) in ga.rows_mut().into_iter().zip(node.value.rows()) {
                        let total: T = gr.iter().copied().sum();
                        Zip::from(&mut gr).and(&y).for_each(|d, &yv| {
                            *d -= yv.exp() * total;
                        });
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Square(a) => {
                    let two = T::of(2.0);
                    let ga = &g * &self.value(*a).mapv(|x| two * x);
                    acc(&mut adj, *a, ga);
                }
                Op::Exp(a) => acc(&mut adj, *a, &g * &node.value),
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    acc(&mut adj, *a, ga);
                }
                Op::ClampMin(a, lo) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| {
                        if x < *lo {
                            *d = T::zero();
                        }
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::Pinball(a, levels, kind) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(levels)
                        .for_each(|d, &x, &b| *d *= kind.derivative_unchecked(x, b));
                    acc(&mut adj, *a, ga);
                }
            }
        }
        Ok(grads)
    }
}

fn acc<T: Scalar>(adj: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut adj[v.0] {
        Some(a) => *a += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Max-shifted log-sum-exp of a nonempty sequence.
pub(crate) fn lse_slice<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let m = values
        .clone()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if m == T::neg_infinity() {
        return m;
    }
    let s: T = values.map(|v| (v - m).exp()).sum();
    m + s.ln()
}
