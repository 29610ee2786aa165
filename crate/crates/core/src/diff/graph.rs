//! Tape of rank-2 tensor operations with reverse-mode adjoints.
//!
//! A [`Graph`] records every primitive applied to its [`Var`]s in execution
//! order, which is already a topological order, so the backward sweep is a
//! single reverse walk over the tape.

use std::cell::RefCell;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Open-domain margin for `arcosh`, `arcsin` and `arccos` inputs.
pub const DOMAIN_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum UnaryKind {
    Neg,
    Exp,
    Ln,
    Cosh,
    Sinh,
    Asinh,
    Sqrt,
    Abs,
    Softplus,
    Arcosh,
    Arcsin,
    Arccos,
    /// `sinh(min(x, cap)) / x` for `x >= 0`, equal to 1 at 0.
    SinhRatio(f64),
    /// `asinh(x) / x`, equal to 1 at 0.
    AsinhRatio,
}

impl UnaryKind {
    fn name(self) -> &'static str {
        match self {
            UnaryKind::Neg => "neg",
            UnaryKind::Exp => "exp",
            UnaryKind::Ln => "ln",
            UnaryKind::Cosh => "cosh",
            UnaryKind::Sinh => "sinh",
            UnaryKind::Asinh => "asinh",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Abs => "abs",
            UnaryKind::Softplus => "softplus",
            UnaryKind::Arcosh => "arcosh",
            UnaryKind::Arcsin => "arcsin",
            UnaryKind::Arccos => "arccos",
            UnaryKind::SinhRatio(_) => "sinh_ratio",
            UnaryKind::AsinhRatio => "asinh_ratio",
        }
    }

    /// `(lo, hi)` the input is clamped into before evaluation.
    fn domain(self) -> Option<(f64, f64)> {
        match self {
            UnaryKind::Arcosh => Some((1.0 + DOMAIN_EPS, f64::INFINITY)),
            UnaryKind::Arcsin | UnaryKind::Arccos => Some((-1.0 + DOMAIN_EPS, 1.0 - DOMAIN_EPS)),
            _ => None,
        }
    }

    fn eval(self, x: f64) -> f64 {
        let x = match self.domain() {
            Some((lo, hi)) => x.clamp(lo, hi),
            None => x,
        };
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Ln => x.ln(),
            UnaryKind::Cosh => x.cosh(),
            UnaryKind::Sinh => x.sinh(),
            UnaryKind::Asinh => x.asinh(),
            UnaryKind::Sqrt => x.sqrt(),
            UnaryKind::Abs => x.abs(),
            UnaryKind::Softplus => softplus(x),
            UnaryKind::Arcosh => x.acosh(),
            UnaryKind::Arcsin => x.asin(),
            UnaryKind::Arccos => x.acos(),
            UnaryKind::SinhRatio(cap) => {
                if x > cap {
                    cap.sinh() / x
                } else if x.abs() < 1e-3 {
                    let x2 = x * x;
                    1.0 + x2 / 6.0 + x2 * x2 / 120.0
                } else {
                    x.sinh() / x
                }
            }
            UnaryKind::AsinhRatio => {
                if x.abs() < 1e-3 {
                    let x2 = x * x;
                    1.0 - x2 / 6.0 + 3.0 * x2 * x2 / 40.0
                } else {
                    x.asinh() / x
                }
            }
        }
    }

    /// Derivative given input `x` and output `y`. Clamped inputs get zero.
    fn deriv(self, x: f64, y: f64) -> f64 {
        if let Some((lo, hi)) = self.domain() {
            if x < lo || x > hi {
                return 0.0;
            }
        }
        match self {
            UnaryKind::Neg => -1.0,
            UnaryKind::Exp => y,
            UnaryKind::Ln => 1.0 / x,
            UnaryKind::Cosh => x.sinh(),
            UnaryKind::Sinh => x.cosh(),
            UnaryKind::Asinh => 1.0 / (1.0 + x * x).sqrt(),
            UnaryKind::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            UnaryKind::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryKind::Softplus => sigmoid(x),
            UnaryKind::Arcosh => 1.0 / (x * x - 1.0).sqrt(),
            UnaryKind::Arcsin => 1.0 / (1.0 - x * x).sqrt(),
            UnaryKind::Arccos => -1.0 / (1.0 - x * x).sqrt(),
            UnaryKind::SinhRatio(cap) => {
                if x > cap {
                    -y / x
                } else if x.abs() < 1e-3 {
                    x / 3.0 + x * x * x / 30.0
                } else {
                    (x.cosh() - y) / x
                }
            }
            UnaryKind::AsinhRatio => {
                if x.abs() < 1e-3 {
                    -x / 3.0 + 0.3 * x * x * x
                } else {
                    (1.0 / (1.0 + x * x).sqrt() - y) / x
                }
            }
        }
    }

    /// Distance of `x` from the nearest point where this primitive is not smooth.
    fn kink_distance(self, x: f64) -> f64 {
        match self {
            UnaryKind::Abs => x.abs(),
            UnaryKind::SinhRatio(cap) => (x - cap).abs(),
            _ => match self.domain() {
                Some((lo, hi)) => (x - lo).abs().min((hi - x).abs()),
                None => f64::INFINITY,
            },
        }
    }
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(BinaryKind, usize, usize),
    Unary(UnaryKind, usize),
    Scale(usize, f64),
    Offset(usize),
    Clamp(usize, f64, f64),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Transpose(usize),
    SoftmaxRows(usize),
    SumAll(usize),
    /// Sum across columns: `r x c -> r x 1`.
    RowSums(usize),
    /// Sum across rows: `r x c -> 1 x c`.
    ColSums(usize),
    RowMax(usize, Vec<usize>),
    ColMax(usize, Vec<usize>),
    RowNorm(usize),
    Concat(Vec<usize>, Axis),
    Slice(usize, Axis, usize),
    Gather(usize, Axis, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

struct Inner {
    nodes: Vec<Node>,
    record: bool,
    min_kink: f64,
}

/// Recording tape. One graph per forward/backward pass.
pub struct Graph {
    inner: RefCell<Inner>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Adjoints produced by [`Graph::backward`], kept for leaves only.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of its shape when the loss does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => v.with_value(Tensor::zeros_like),
        }
    }
}

impl Graph {
    /// A recording graph: every op keeps what backward needs.
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                record: true,
                min_kink: f64::INFINITY,
            }),
        }
    }

    /// A forward-only graph; [`Graph::backward`] is rejected.
    pub fn inference() -> Self {
        let g = Self::new();
        g.inner.borrow_mut().record = false;
        g
    }

    pub fn is_recording(&self) -> bool {
        self.inner.borrow().record
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest distance, over every recorded non-smooth primitive, between an
    /// input and the primitive's kink (hinge corner, clamp bound, max tie, |0|).
    pub fn min_kink_distance(&self) -> f64 {
        self.inner.borrow().min_kink
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Result<Var<'_>> {
        value.dims2()?;
        self.push_node(value, Op::Leaf, requires_grad, "leaf")
    }

    pub fn param(&self, value: Tensor) -> Result<Var<'_>> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Var<'_>> {
        self.constant(Tensor::scalar(value))
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.inner.borrow(), |i| &i.nodes[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].needs_grad
    }

    fn note_kink(&self, d: f64) {
        let mut inner = self.inner.borrow_mut();
        if inner.record && d < inner.min_kink {
            inner.min_kink = d;
        }
    }

    fn push_node(&self, value: Tensor, op: Op, needs_grad: bool, name: &str) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::numerical(name, "non-finite output"));
        }
        let mut inner = self.inner.borrow_mut();
        let op = if inner.record { op } else { Op::Leaf };
        let needs_grad = needs_grad && inner.record;
        inner.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var {
            graph: self,
            id: inner.nodes.len() - 1,
        })
    }

    fn push_op(&self, value: Tensor, op: Op, inputs: &[usize], name: &str) -> Result<Var<'_>> {
        let needs = inputs.iter().any(|&i| self.needs(i));
        self.push_node(value, op, needs, name)
    }

    /// Reverse sweep from a `1 x 1` loss. Leaves untouched nodes' values.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.graph, self) {
            return Err(Error::arg("loss belongs to a different graph"));
        }
        let inner = self.inner.borrow();
        if !inner.record {
            return Err(Error::arg("backward on an inference graph"));
        }
        let loss_value = &inner.nodes[loss.id].value;
        if loss_value.len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; inner.nodes.len()];
        grads[loss.id] = Some(Tensor::full(1, 1, 1.0));
        for id in (0..=loss.id).rev() {
            let node = &inner.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&inner.nodes, id, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn binary<'g>(&'g self, kind: BinaryKind, a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
        same_graph(a, b)?;
        let value = {
            let (av, bv) = (self.value_of(a.id), self.value_of(b.id));
            let bc = Broadcast::new(&av, &bv)?;
            let (ad, bd) = (av.data(), bv.data());
            let mut out = Vec::with_capacity(bc.rows * bc.cols);
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    let x = ad[bc.a_index(i, j)];
                    let y = bd[bc.b_index(i, j)];
                    out.push(match kind {
                        BinaryKind::Add => x + y,
                        BinaryKind::Sub => x - y,
                        BinaryKind::Mul => x * y,
                        BinaryKind::Div => x / y,
                    });
                }
            }
            Tensor::matrix(bc.rows, bc.cols, out)?
        };
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        self.push_op(value, Op::Binary(kind, a.id, b.id), &[a.id, b.id], name)
    }

    fn unary<'g>(&'g self, kind: UnaryKind, a: Var<'g>) -> Result<Var<'g>> {
        let track = self.is_recording()
            && (kind.domain().is_some()
                || matches!(kind, UnaryKind::Abs | UnaryKind::SinhRatio(_)));
        let (value, kink) = {
            let av = self.value_of(a.id);
            let kink = if track {
                av.data()
                    .iter()
                    .map(|&x| kind.kink_distance(x))
                    .fold(f64::INFINITY, f64::min)
            } else {
                f64::INFINITY
            };
            (av.map(|x| kind.eval(x)), kink)
        };
        self.note_kink(kink);
        self.push_op(value, Op::Unary(kind, a.id), &[a.id], kind.name())
    }
}

fn same_graph(a: Var<'_>, b: Var<'_>) -> Result<()> {
    if std::ptr::eq(a.graph, b.graph) {
        Ok(())
    } else {
        Err(Error::arg("operands belong to different graphs"))
    }
}

/// Index arithmetic for `(r, c)` broadcasting between two rank-2 operands.
struct Broadcast {
    rows: usize,
    cols: usize,
    a_strides: (usize, usize),
    b_strides: (usize, usize),
}

impl Broadcast {
    fn new(a: &Tensor, b: &Tensor) -> Result<Self> {
        let (ar, ac) = a.dims2()?;
        let (br, bc) = b.dims2()?;
        let join = |x: usize, y: usize| -> Result<usize> {
            if x == y || y == 1 {
                Ok(x)
            } else if x == 1 {
                Ok(y)
            } else {
                Err(Error::dim(format!(
                    "cannot broadcast {ar}x{ac} with {br}x{bc}"
                )))
            }
        };
        let rows = join(ar, br)?;
        let cols = join(ac, bc)?;
        let strides = |r: usize, c: usize| {
            (
                if r == 1 { 0 } else { c },
                if c == 1 { 0 } else { 1 },
            )
        };
        Ok(Self {
            rows,
            cols,
            a_strides: strides(ar, ac),
            b_strides: strides(br, bc),
        })
    }

    #[inline]
    fn a_index(&self, i: usize, j: usize) -> usize {
        i * self.a_strides.0 + j * self.a_strides.1
    }

    #[inline]
    fn b_index(&self, i: usize, j: usize) -> usize {
        i * self.b_strides.0 + j * self.b_strides.1
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn backprop_node(
    nodes: &[Node],
    id: usize,
    g: &Tensor,
    grads: &mut [Option<Tensor>],
) -> Result<()> {
    let node = &nodes[id];
    let out = &node.value;
    let needs = |i: usize| nodes[i].needs_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Binary(kind, a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let bc = Broadcast::new(av, bv)?;
            let mut ga = needs(*a).then(|| Tensor::zeros_like(av));
            let mut gb = needs(*b).then(|| Tensor::zeros_like(bv));
            let gd = g.data();
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    let gij = gd[i * bc.cols + j];
                    let (ia, ib) = (bc.a_index(i, j), bc.b_index(i, j));
                    let (x, y) = (av.data()[ia], bv.data()[ib]);
                    let (da, db) = match kind {
                        BinaryKind::Add => (gij, gij),
                        BinaryKind::Sub => (gij, -gij),
                        BinaryKind::Mul => (gij * y, gij * x),
                        BinaryKind::Div => (gij / y, -gij * x / (y * y)),
                    };
                    if let Some(ga) = ga.as_mut() {
                        ga.data_mut()[ia] += da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb.data_mut()[ib] += db;
                    }
                }
            }
            if let Some(ga) = ga {
                accumulate(grads, *a, ga);
            }
            if let Some(gb) = gb {
                accumulate(grads, *b, gb);
            }
        }
        Op::Unary(kind, a) => {
            let av = &nodes[*a].value;
            let mut ga = Tensor::zeros_like(av);
            for (((dst, &x), &y), &gi) in ga
                .data_mut()
                .iter_mut()
                .zip(av.data())
                .zip(out.data())
                .zip(g.data())
            {
                *dst = gi * kind.deriv(x, y);
            }
            accumulate(grads, *a, ga);
        }
        Op::Scale(a, s) => accumulate(grads, *a, g.map(|v| v * s)),
        Op::Offset(a) => accumulate(grads, *a, g.clone()),
        Op::Clamp(a, lo, hi) => {
            let av = &nodes[*a].value;
            let mut ga = g.clone();
            for (dst, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                if x < *lo || x > *hi {
                    *dst = 0.0;
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::MatMul { a, b, ta, tb } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (ar, ac) = av.dims2()?;
            let (br, bcols) = bv.dims2()?;
            let (m, n) = g.dims2()?;
            if needs(*a) {
                let mut ga = Tensor::zeros_like(av);
                if !ta {
                    gemm(g.data(), m, n, false, bv.data(), br, bcols, !tb, ga.data_mut(), false);
                } else {
                    gemm(bv.data(), br, bcols, *tb, g.data(), m, n, true, ga.data_mut(), false);
                }
                accumulate(grads, *a, ga);
            }
            if needs(*b) {
                let mut gb = Tensor::zeros_like(bv);
                if !tb {
                    gemm(av.data(), ar, ac, !ta, g.data(), m, n, false, gb.data_mut(), false);
                } else {
                    gemm(g.data(), m, n, true, av.data(), ar, ac, *ta, gb.data_mut(), false);
                }
                accumulate(grads, *b, gb);
            }
        }
        Op::Transpose(a) => accumulate(grads, *a, transpose(g)?),
        Op::SoftmaxRows(a) => {
            let (r, c) = out.dims2()?;
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                let y = out.row(i);
                let gy = g.row(i);
                let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                for j in 0..c {
                    dst[j] = y[j] * (gy[j] - dot);
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::SumAll(a) => {
            let av = &nodes[*a].value;
            let s = g.data()[0];
            accumulate(grads, *a, av.map(|_| s));
        }
        Op::RowSums(a) => {
            let av = &nodes[*a].value;
            let (r, c) = av.dims2()?;
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                let gi = g.data()[i];
                ga.data_mut()[i * c..(i + 1) * c].fill(gi);
            }
            accumulate(grads, *a, ga);
        }
        Op::ColSums(a) => {
            let av = &nodes[*a].value;
            let (r, c) = av.dims2()?;
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                ga.data_mut()[i * c..(i + 1) * c].copy_from_slice(g.data());
            }
            accumulate(grads, *a, ga);
        }
        Op::RowMax(a, arg) => {
            let av = &nodes[*a].value;
            let c = av.cols();
            let mut ga = Tensor::zeros_like(av);
            for (i, &j) in arg.iter().enumerate() {
                ga.data_mut()[i * c + j] += g.data()[i];
            }
            accumulate(grads, *a, ga);
        }
        Op::ColMax(a, arg) => {
            let av = &nodes[*a].value;
            let c = av.cols();
            let mut ga = Tensor::zeros_like(av);
            for (j, &i) in arg.iter().enumerate() {
                ga.data_mut()[i * c + j] += g.data()[j];
            }
            accumulate(grads, *a, ga);
        }
        Op::RowNorm(a) => {
            let av = &nodes[*a].value;
            let (r, c) = av.dims2()?;
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                let norm = out.data()[i];
                if norm > 0.0 {
                    let s = g.data()[i] / norm;
                    let src = av.row(i);
                    let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                    for j in 0..c {
                        dst[j] = s * src[j];
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::Concat(parts, axis) => {
            let (_, gc) = g.dims2()?;
            let mut offset = 0;
            for &p in parts {
                let pv = &nodes[p].value;
                let (pr, pc) = pv.dims2()?;
                if needs(p) {
                    let mut gp = Tensor::zeros(pr, pc);
                    match axis {
                        Axis::Rows => gp
                            .data_mut()
                            .copy_from_slice(&g.data()[offset * gc..(offset + pr) * gc]),
                        Axis::Cols => {
                            for i in 0..pr {
                                gp.data_mut()[i * pc..(i + 1) * pc].copy_from_slice(
                                    &g.data()[i * gc + offset..i * gc + offset + pc],
                                );
                            }
                        }
                    }
                    accumulate(grads, p, gp);
                }
                offset += match axis {
                    Axis::Rows => pr,
                    Axis::Cols => pc,
                };
            }
        }
        Op::Slice(a, axis, start) => {
            let av = &nodes[*a].value;
            let (_, c) = av.dims2()?;
            let (gr, gc) = g.dims2()?;
            let mut ga = Tensor::zeros_like(av);
            match axis {
                Axis::Rows => ga.data_mut()[start * c..(start + gr) * c].copy_from_slice(g.data()),
                Axis::Cols => {
                    for i in 0..gr {
                        ga.data_mut()[i * c + start..i * c + start + gc]
                            .copy_from_slice(g.row(i));
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::Gather(a, axis, idx) => {
            let av = &nodes[*a].value;
            let (_, c) = av.dims2()?;
            let (gr, gc) = g.dims2()?;
            let mut ga = Tensor::zeros_like(av);
            match axis {
                Axis::Rows => {
                    for (k, &src) in idx.iter().enumerate() {
                        let dst = &mut ga.data_mut()[src * c..(src + 1) * c];
                        for (d, v) in dst.iter_mut().zip(g.row(k)) {
                            *d += v;
                        }
                    }
                }
                Axis::Cols => {
                    for i in 0..gr {
                        for (k, &src) in idx.iter().enumerate() {
                            ga.data_mut()[i * c + src] += g.data()[i * gc + k];
                        }
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
    }
    Ok(())
}

fn transpose(t: &Tensor) -> Result<Tensor> {
    let (r, c) = t.dims2()?;
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(t.data()[i * c + j]);
        }
    }
    Tensor::matrix(c, r, out)
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id).clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.graph.value_of(self.id))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.with_value(|t| (t.rows(), t.cols()))
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn item(&self) -> Result<f64> {
        self.with_value(Tensor::item)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryKind::Add, self, other)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryKind::Sub, self, other)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryKind::Mul, self, other)
    }

    pub fn div(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryKind::Div, self, other)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.mul(self)
    }

    pub fn neg(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Neg, self)
    }

    pub fn exp(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Exp, self)
    }

    pub fn ln(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Ln, self)
    }

    pub fn cosh(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Cosh, self)
    }

    pub fn sinh(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Sinh, self)
    }

    pub fn asinh(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Asinh, self)
    }

    pub fn sqrt(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Sqrt, self)
    }

    pub fn abs(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Abs, self)
    }

    pub fn softplus(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Softplus, self)
    }

    /// `arcosh` with the input clamped to `[1 + DOMAIN_EPS, inf)`.
    pub fn arcosh(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Arcosh, self)
    }

    /// `arcsin` with the input clamped to `[-1 + DOMAIN_EPS, 1 - DOMAIN_EPS]`.
    pub fn arcsin(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Arcsin, self)
    }

    /// `arccos` with the input clamped to `[-1 + DOMAIN_EPS, 1 - DOMAIN_EPS]`.
    pub fn arccos(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::Arccos, self)
    }

    /// `sinh(min(x, cap)) / x`: the radial factor of the exponential map at
    /// the origin with a tangent-norm cap. Smooth through 0.
    pub fn sinh_ratio(self, cap: f64) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::SinhRatio(cap), self)
    }

    /// `asinh(x) / x`: the radial factor of the logarithmic map at the origin.
    pub fn asinh_ratio(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryKind::AsinhRatio, self)
    }

    pub fn scale(self, s: f64) -> Result<Var<'g>> {
        let value = self.with_value(|t| t.map(|v| v * s));
        self.graph
            .push_op(value, Op::Scale(self.id, s), &[self.id], "scale")
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'g>> {
        let value = self.with_value(|t| t.map(|v| v + s));
        self.graph
            .push_op(value, Op::Offset(self.id), &[self.id], "add_scalar")
    }

    /// Elementwise clamp; gradient passes inside `[lo, hi]`, zero outside.
    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'g>> {
        if lo > hi {
            return Err(Error::arg(format!("clamp bounds {lo} > {hi}")));
        }
        let (value, kink) = self.with_value(|t| {
            let kink = t
                .data()
                .iter()
                .map(|&x| (x - lo).abs().min((hi - x).abs()))
                .fold(f64::INFINITY, f64::min);
            (t.map(|v| v.clamp(lo, hi)), kink)
        });
        self.graph.note_kink(kink);
        self.graph
            .push_op(value, Op::Clamp(self.id, lo, hi), &[self.id], "clamp")
    }

    pub fn relu(self) -> Result<Var<'g>> {
        self.clamp(0.0, f64::INFINITY)
    }

    fn matmul_impl(self, other: Var<'g>, ta: bool, tb: bool) -> Result<Var<'g>> {
        same_graph(self, other)?;
        let value = {
            let (av, bv) = (self.graph.value_of(self.id), self.graph.value_of(other.id));
            let (ar, ac) = av.dims2()?;
            let (br, bc) = bv.dims2()?;
            let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
            let (k2, n) = if tb { (bc, br) } else { (br, bc) };
            if k != k2 {
                return Err(Error::dim(format!(
                    "matmul of {m}x{k} by {k2}x{n}"
                )));
            }
            let mut out = vec![0.0; m * n];
            gemm(av.data(), ar, ac, ta, bv.data(), br, bc, tb, &mut out, false);
            Tensor::matrix(m, n, out)?
        };
        self.graph.push_op(
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
            &[self.id, other.id],
            "matmul",
        )
    }

    /// `self * other`.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.matmul_impl(other, false, false)
    }

    /// `self * other^T`.
    pub fn matmul_t(self, other: Var<'g>) -> Result<Var<'g>> {
        self.matmul_impl(other, false, true)
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        let value = self.with_value(transpose)?;
        self.graph
            .push_op(value, Op::Transpose(self.id), &[self.id], "transpose")
    }

    /// Softmax along each row.
    pub fn softmax_rows(self) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, c) = t.dims2()?;
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let row = t.row(i);
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let start = out.len();
                out.extend(row.iter().map(|v| (v - m).exp()));
                let s: f64 = out[start..].iter().sum();
                for v in &mut out[start..] {
                    *v /= s;
                }
            }
            Tensor::matrix(r, c, out)
        })?;
        self.graph
            .push_op(value, Op::SoftmaxRows(self.id), &[self.id], "softmax")
    }

    pub fn sum_all(self) -> Result<Var<'g>> {
        let value = self.with_value(|t| Tensor::scalar(t.data().iter().sum()));
        self.graph
            .push_op(value, Op::SumAll(self.id), &[self.id], "sum")
    }

    pub fn mean_all(self) -> Result<Var<'g>> {
        let n = self.with_value(Tensor::len) as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    /// Sum across each row: `r x c -> r x 1`.
    pub fn row_sums(self) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, _) = t.dims2()?;
            Tensor::matrix(r, 1, (0..r).map(|i| t.row(i).iter().sum()).collect())
        })?;
        self.graph
            .push_op(value, Op::RowSums(self.id), &[self.id], "row_sums")
    }

    pub fn row_means(self) -> Result<Var<'g>> {
        let c = self.cols() as f64;
        self.row_sums()?.scale(1.0 / c)
    }

    /// Sum down each column: `r x c -> 1 x c`.
    pub fn col_sums(self) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, c) = t.dims2()?;
            let mut out = vec![0.0; c];
            for i in 0..r {
                for (o, v) in out.iter_mut().zip(t.row(i)) {
                    *o += v;
                }
            }
            Tensor::matrix(1, c, out)
        })?;
        self.graph
            .push_op(value, Op::ColSums(self.id), &[self.id], "col_sums")
    }

    pub fn col_means(self) -> Result<Var<'g>> {
        let r = self.rows() as f64;
        self.col_sums()?.scale(1.0 / r)
    }

    /// Maximum of each row: `r x c -> r x 1`. Ties go to the first index.
    pub fn row_max(self) -> Result<Var<'g>> {
        let (value, arg, gap) = self.with_value(|t| -> Result<_> {
            let (r, _) = t.dims2()?;
            let mut vals = Vec::with_capacity(r);
            let mut arg = Vec::with_capacity(r);
            let mut gap = f64::INFINITY;
            for i in 0..r {
                let (j, v, g) = max_with_gap(t.row(i).iter().copied());
                vals.push(v);
                arg.push(j);
                gap = gap.min(g);
            }
            Ok((Tensor::matrix(r, 1, vals)?, arg, gap))
        })?;
        self.graph.note_kink(gap);
        self.graph
            .push_op(value, Op::RowMax(self.id, arg), &[self.id], "row_max")
    }

    /// Maximum of each column: `r x c -> 1 x c`. Ties go to the first index.
    pub fn col_max(self) -> Result<Var<'g>> {
        let (value, arg, gap) = self.with_value(|t| -> Result<_> {
            let (r, c) = t.dims2()?;
            let mut vals = Vec::with_capacity(c);
            let mut arg = Vec::with_capacity(c);
            let mut gap = f64::INFINITY;
            for j in 0..c {
                let (i, v, g) = max_with_gap((0..r).map(|i| t.data()[i * c + j]));
                vals.push(v);
                arg.push(i);
                gap = gap.min(g);
            }
            Ok((Tensor::matrix(1, c, vals)?, arg, gap))
        })?;
        self.graph.note_kink(gap);
        self.graph
            .push_op(value, Op::ColMax(self.id, arg), &[self.id], "col_max")
    }

    /// Euclidean norm of each row: `r x c -> r x 1`.
    pub fn row_norm(self) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, _) = t.dims2()?;
            Tensor::matrix(
                r,
                1,
                (0..r)
                    .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                    .collect(),
            )
        })?;
        self.graph
            .push_op(value, Op::RowNorm(self.id), &[self.id], "row_norm")
    }

    fn slice(self, axis: Axis, start: usize, end: usize) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, c) = t.dims2()?;
            let limit = if axis == Axis::Rows { r } else { c };
            if start >= end || end > limit {
                return Err(Error::dim(format!(
                    "slice {start}..{end} out of range for {r}x{c}"
                )));
            }
            match axis {
                Axis::Rows => Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec()),
                Axis::Cols => {
                    let mut out = Vec::with_capacity(r * (end - start));
                    for i in 0..r {
                        out.extend_from_slice(&t.row(i)[start..end]);
                    }
                    Tensor::matrix(r, end - start, out)
                }
            }
        })?;
        self.graph
            .push_op(value, Op::Slice(self.id, axis, start), &[self.id], "slice")
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Result<Var<'g>> {
        self.slice(Axis::Rows, start, end)
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'g>> {
        self.slice(Axis::Cols, start, end)
    }

    fn gather(self, axis: Axis, idx: &[usize]) -> Result<Var<'g>> {
        let value = self.with_value(|t| -> Result<Tensor> {
            let (r, c) = t.dims2()?;
            let limit = if axis == Axis::Rows { r } else { c };
            if idx.is_empty() || idx.iter().any(|&i| i >= limit) {
                return Err(Error::dim(format!("gather indices out of range for {r}x{c}")));
            }
            match axis {
                Axis::Rows => {
                    let mut out = Vec::with_capacity(idx.len() * c);
                    for &i in idx {
                        out.extend_from_slice(t.row(i));
                    }
                    Tensor::matrix(idx.len(), c, out)
                }
                Axis::Cols => {
                    let mut out = Vec::with_capacity(r * idx.len());
                    for i in 0..r {
                        let row = t.row(i);
                        out.extend(idx.iter().map(|&j| row[j]));
                    }
                    Tensor::matrix(r, idx.len(), out)
                }
            }
        })?;
        self.graph.push_op(
            value,
            Op::Gather(self.id, axis, idx.to_vec()),
            &[self.id],
            "gather",
        )
    }

    /// Rows `idx[0], idx[1], ...` of `self` (repeats allowed).
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'g>> {
        self.gather(Axis::Rows, idx)
    }

    pub fn gather_cols(self, idx: &[usize]) -> Result<Var<'g>> {
        self.gather(Axis::Cols, idx)
    }
}

fn max_with_gap(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut second = f64::NEG_INFINITY;
    for (j, v) in values.enumerate() {
        if v > best.1 {
            second = best.1;
            best = (j, v);
        } else if v > second {
            second = v;
        }
    }
    (best.0, best.1, best.1 - second)
}

fn concat<'g>(parts: &[Var<'g>], axis: Axis) -> Result<Var<'g>> {
    let first = *parts
        .first()
        .ok_or_else(|| Error::arg("concat of zero tensors"))?;
    let g = first.graph;
    for p in parts {
        same_graph(first, *p)?;
    }
    let value = {
        let vals: Vec<_> = parts.iter().map(|p| g.value_of(p.id)).collect();
        let (r0, c0) = vals[0].dims2()?;
        match axis {
            Axis::Rows => {
                let mut rows = 0;
                let mut out = Vec::new();
                for v in &vals {
                    let (r, c) = v.dims2()?;
                    if c != c0 {
                        return Err(Error::dim("concat_rows with differing column counts"));
                    }
                    rows += r;
                    out.extend_from_slice(v.data());
                }
                Tensor::matrix(rows, c0, out)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for v in &vals {
                    let (r, c) = v.dims2()?;
                    if r != r0 {
                        return Err(Error::dim("concat_cols with differing row counts"));
                    }
                    cols += c;
                }
                let mut out = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for v in &vals {
                        out.extend_from_slice(v.row(i));
                    }
                }
                Tensor::matrix(r0, cols, out)?
            }
        }
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    g.push_op(value, Op::Concat(ids.clone(), axis), &ids, "concat")
}

/// Stacks `parts` vertically.
pub fn concat_rows<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    concat(parts, Axis::Rows)
}

/// Places `parts` side by side.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    concat(parts, Axis::Cols)
}
