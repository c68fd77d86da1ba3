use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::{AtomicUsize, Ordering};

use super::{AdError, Matrix, Ops};
use crate::math;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Operation request for [`Tape::try_apply`], the checked construction path.
#[derive(Debug, Clone, Copy)]
pub enum Primitive {
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Tanh(Var),
    Square(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    BroadcastScalar(Var, usize, usize),
    SliceCols(Var, usize, usize),
    PadCols(Var, usize, usize),
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Tanh(usize),
    Square(usize),
    SumAll(usize),
    SumRows(usize),
    SumCols(usize),
    BroadcastRows(usize, usize),
    BroadcastCols(usize, usize),
    BroadcastScalar(usize, usize, usize),
    /// (input, start, len)
    SliceCols(usize, usize, usize),
    /// (input, start, total)
    PadCols(usize, usize, usize),
}

impl Op {
    fn inputs(self) -> [Option<usize>; 2] {
        use Op::*;
        match self {
            Leaf | Const => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => [Some(a), Some(b)],
            Neg(a) | Scale(a, _) | Transpose(a) | Sin(a) | Cos(a) | Exp(a) | Tanh(a)
            | Square(a) | SumAll(a) | SumRows(a) | SumCols(a) | BroadcastRows(a, _)
            | BroadcastCols(a, _) | BroadcastScalar(a, _, _) | SliceCols(a, _, _)
            | PadCols(a, _, _) => [Some(a), None],
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    /// Depends on at least one leaf. Nodes that do not are stored as
    /// constants and never receive adjoints.
    live: bool,
}

/// Append-only record of tensor operations.
///
/// Nodes are only ever appended, so every node's inputs precede it. The
/// recording sweep [`Tape::grad`] emits its adjoint computations as new
/// nodes on the same tape, which makes first derivatives differentiable
/// again.
pub struct Tape {
    id: usize,
    nodes: RefCell<Vec<Node>>,
    /// `(input, is_cos) -> node` for every recorded sine and cosine, so a
    /// repeated request reuses the node and the numeric sweep reads the
    /// partner function instead of recomputing it.
    trig: RefCell<BTreeMap<(usize, bool), usize>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            trig: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn owns(&self, v: Var) -> bool {
        self.check(v).is_ok()
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        v.tape == self.id && matches!(self.nodes.borrow()[v.index].op, Op::Leaf)
    }

    /// Whether `v` depends on any leaf.
    pub fn is_live(&self, v: Var) -> bool {
        self.nodes.borrow()[v.index].live
    }

    pub fn value(&self, v: Var) -> Matrix {
        self.check(v).expect("variable from another tape");
        self.nodes.borrow()[v.index].value.clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Matrix) -> R) -> R {
        self.check(v).expect("variable from another tape");
        f(&self.nodes.borrow()[v.index].value)
    }

    pub fn shape_of(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.index].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> Option<f64> {
        self.with_value(v, Matrix::as_scalar)
    }

    fn check(&self, v: Var) -> Result<(), AdError> {
        if v.tape != self.id || v.index >= self.nodes.borrow().len() {
            return Err(AdError::ForeignVar);
        }
        Ok(())
    }

    fn var(&self, index: usize) -> Var {
        Var {
            tape: self.id,
            index,
        }
    }

    fn push(&self, value: Matrix, op: Op, live: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, live });
        self.var(nodes.len() - 1)
    }

    /// Checked construction: validates tape membership and shapes before
    /// recording.
    pub fn try_apply(&self, prim: Primitive) -> Result<Var, AdError> {
        use Primitive as P;
        let (op, operands): (Op, [Option<Var>; 2]) = match prim {
            P::Add(a, b) => (Op::Add(a.index, b.index), [Some(a), Some(b)]),
            P::Sub(a, b) => (Op::Sub(a.index, b.index), [Some(a), Some(b)]),
            P::Mul(a, b) => (Op::Mul(a.index, b.index), [Some(a), Some(b)]),
            P::MatMul(a, b) => (Op::MatMul(a.index, b.index), [Some(a), Some(b)]),
            P::Neg(a) => (Op::Neg(a.index), [Some(a), None]),
            P::Scale(a, c) => (Op::Scale(a.index, c), [Some(a), None]),
            P::Transpose(a) => (Op::Transpose(a.index), [Some(a), None]),
            P::Sin(a) => (Op::Sin(a.index), [Some(a), None]),
            P::Cos(a) => (Op::Cos(a.index), [Some(a), None]),
            P::Exp(a) => (Op::Exp(a.index), [Some(a), None]),
            P::Tanh(a) => (Op::Tanh(a.index), [Some(a), None]),
            P::Square(a) => (Op::Square(a.index), [Some(a), None]),
            P::SumAll(a) => (Op::SumAll(a.index), [Some(a), None]),
            P::SumRows(a) => (Op::SumRows(a.index), [Some(a), None]),
            P::SumCols(a) => (Op::SumCols(a.index), [Some(a), None]),
            P::BroadcastRows(a, n) => (Op::BroadcastRows(a.index, n), [Some(a), None]),
            P::BroadcastCols(a, n) => (Op::BroadcastCols(a.index, n), [Some(a), None]),
            P::BroadcastScalar(a, r, c) => (Op::BroadcastScalar(a.index, r, c), [Some(a), None]),
            P::SliceCols(a, s, l) => (Op::SliceCols(a.index, s, l), [Some(a), None]),
            P::PadCols(a, s, t) => (Op::PadCols(a.index, s, t), [Some(a), None]),
        };
        for v in operands.into_iter().flatten() {
            self.check(v)?;
        }
        let trig_key = match op {
            Op::Sin(a) => Some((a, false)),
            Op::Cos(a) => Some((a, true)),
            _ => None,
        };
        if let Some(j) = trig_key.and_then(|k| self.trig.borrow().get(&k).copied()) {
            return Ok(self.var(j));
        }
        let (value, live) = {
            let nodes = self.nodes.borrow();
            let value = evaluate(&nodes, op)?;
            let live = op.inputs().into_iter().flatten().any(|i| nodes[i].live);
            (value, live)
        };
        let v = self.push(value, if live { op } else { Op::Const }, live);
        if let Some(k) = trig_key {
            self.trig.borrow_mut().insert(k, v.index);
        }
        Ok(v)
    }

    fn apply(&self, prim: Primitive) -> Var {
        match self.try_apply(prim) {
            Ok(v) => v,
            Err(e) => panic!("tape construction failed: {e}"),
        }
    }

    fn validate_target(&self, y: Var) -> Result<(), AdError> {
        self.check(y)?;
        let shape = self.shape_of(y);
        if shape != (1, 1) {
            return Err(AdError::NotScalar(shape));
        }
        Ok(())
    }

    /// Recording reverse sweep: returns `d y / d w` for each `w` in `wrt`
    /// as nodes on this tape, so the results can be differentiated again.
    ///
    /// `wrt` may name intermediate nodes; the result is then the partial
    /// derivative through that node. Nodes that `y` does not depend on get
    /// a zero constant.
    pub fn grad(&self, y: Var, wrt: &[Var]) -> Result<Vec<Var>, AdError> {
        self.validate_target(y)?;
        for &w in wrt {
            self.check(w)?;
        }
        let floor = wrt.iter().map(|w| w.index).min().unwrap_or(y.index + 1);
        let mut adj: Vec<Option<Var>> = vec![None; y.index + 1];
        adj[y.index] = Some(self.constant(Matrix::scalar(1.0)));

        let wanted = |i: usize| wrt.iter().any(|w| w.index == i);
        for i in (floor..=y.index).rev() {
            let (op, live) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op, nodes[i].live)
            };
            if !live {
                continue;
            }
            let g = match if wanted(i) { adj[i] } else { adj[i].take() } {
                Some(g) => g,
                None => continue,
            };
            for (j, c) in self.vjp_recorded(i, op, g, floor).into_iter().flatten() {
                adj[j] = Some(match adj[j] {
                    None => c,
                    Some(prev) => self.add(&prev, &c),
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| {
                adj.get(w.index).copied().flatten().unwrap_or_else(|| {
                    let (r, c) = self.shape_of(*w);
                    self.constant(Matrix::zeros(r, c))
                })
            })
            .collect())
    }

    /// Numeric reverse sweep: plain adjoint matrices, nothing recorded.
    pub fn gradients(&self, y: Var, wrt: &[Var]) -> Result<Vec<Matrix>, AdError> {
        self.validate_target(y)?;
        for &w in wrt {
            self.check(w)?;
        }
        let floor = wrt.iter().map(|w| w.index).min().unwrap_or(y.index + 1);
        let nodes = self.nodes.borrow();
        let trig = self.trig.borrow();
        let mut adj: Vec<Option<Matrix>> = vec![None; y.index + 1];
        adj[y.index] = Some(Matrix::scalar(1.0));

        let wanted = |i: usize| wrt.iter().any(|w| w.index == i);
        for i in (floor..=y.index).rev() {
            let node = &nodes[i];
            if !node.live || matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            if wanted(i) {
                adj[i] = Some(g.clone());
            }
            for (j, c) in vjp_numeric(&nodes, &trig, i, node.op, &g, floor).into_iter().flatten() {
                match &mut adj[j] {
                    None => adj[j] = Some(c),
                    Some(prev) => prev.add_assign(&c),
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|w| {
                adj.get(w.index).cloned().flatten().unwrap_or_else(|| {
                    let (r, c) = nodes[w.index].value.shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect())
    }

    fn is_live_index(&self, i: usize) -> bool {
        self.nodes.borrow()[i].live
    }

    fn vjp_recorded(&self, i: usize, op: Op, g: Var, floor: usize) -> [Option<(usize, Var)>; 2] {
        let v = |j: usize| self.var(j);
        // adjoints below the floor are never read
        let live = |j: usize| j >= floor && self.is_live_index(j);
        let one = |j: usize, c: Var| [Some((j, c)), None];
        if !op.inputs().into_iter().flatten().any(live) {
            return [None, None];
        }
        match op {
            Op::Leaf | Op::Const => [None, None],
            Op::Add(a, b) => [live(a).then_some((a, g)), live(b).then_some((b, g))],
            Op::Sub(a, b) => [
                live(a).then_some((a, g)),
                live(b).then(|| (b, self.neg(&g))),
            ],
            Op::Mul(a, b) => [
                live(a).then(|| (a, self.mul(&g, &v(b)))),
                live(b).then(|| (b, self.mul(&g, &v(a)))),
            ],
            Op::Neg(a) => one(a, self.neg(&g)),
            Op::Scale(a, c) => one(a, self.scale(&g, c)),
            Op::MatMul(a, b) => [
                live(a).then(|| (a, self.matmul(&g, &self.transpose(&v(b))))),
                live(b).then(|| (b, self.matmul(&self.transpose(&v(a)), &g))),
            ],
            Op::Transpose(a) => one(a, self.transpose(&g)),
            Op::Sin(a) => one(a, self.mul(&g, &self.cos(&v(a)))),
            Op::Cos(a) => one(a, self.neg(&self.mul(&g, &self.sin(&v(a))))),
            Op::Exp(a) => one(a, self.mul(&g, &v(i))),
            Op::Tanh(a) => {
                let (r, c) = self.shape_of(v(i));
                let ones = self.constant(Matrix::filled(r, c, 1.0));
                let slope = self.sub(&ones, &self.square(&v(i)));
                one(a, self.mul(&g, &slope))
            }
            Op::Square(a) => one(a, self.scale(&self.mul(&g, &v(a)), 2.0)),
            Op::SumAll(a) => {
                let (r, c) = self.shape_of(v(a));
                one(a, self.broadcast_scalar(&g, r, c))
            }
            Op::SumRows(a) => {
                let r = self.shape_of(v(a)).0;
                one(a, self.broadcast_rows(&g, r))
            }
            Op::SumCols(a) => {
                let c = self.shape_of(v(a)).1;
                one(a, self.broadcast_cols(&g, c))
            }
            Op::BroadcastRows(a, _) => one(a, self.sum_rows(&g)),
            Op::BroadcastCols(a, _) => one(a, self.sum_cols(&g)),
            Op::BroadcastScalar(a, _, _) => one(a, self.sum_all(&g)),
            Op::SliceCols(a, start, _) => {
                let total = self.shape_of(v(a)).1;
                one(a, self.pad_cols(&g, start, total))
            }
            Op::PadCols(a, start, _) => {
                let len = self.shape_of(v(a)).1;
                one(a, self.slice_cols(&g, start, len))
            }
        }
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), AdError> {
    if a.shape() != b.shape() {
        return Err(AdError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn evaluate(nodes: &[Node], op: Op) -> Result<Matrix, AdError> {
    let val = |i: usize| &nodes[i].value;
    let shape_err = |op, a: &Matrix, rhs| AdError::Shape {
        op,
        lhs: a.shape(),
        rhs,
    };
    Ok(match op {
        Op::Leaf | Op::Const => unreachable!("leaves are pushed directly"),
        Op::Add(a, b) => {
            same_shape("add", val(a), val(b))?;
            val(a).zip_map(val(b), |x, y| x + y)
        }
        Op::Sub(a, b) => {
            same_shape("sub", val(a), val(b))?;
            val(a).zip_map(val(b), |x, y| x - y)
        }
        Op::Mul(a, b) => {
            same_shape("mul", val(a), val(b))?;
            val(a).zip_map(val(b), |x, y| x * y)
        }
        Op::Neg(a) => val(a).map(|x| -x),
        Op::Scale(a, c) => val(a).scale(c),
        Op::MatMul(a, b) => {
            if val(a).cols() != val(b).rows() {
                return Err(shape_err("matmul", val(a), val(b).shape()));
            }
            val(a).matmul(val(b))
        }
        Op::Transpose(a) => val(a).transpose(),
        Op::Sin(a) => val(a).map(math::sin),
        Op::Cos(a) => val(a).map(math::cos),
        Op::Exp(a) => val(a).map(math::exp),
        Op::Tanh(a) => val(a).map(math::tanh),
        Op::Square(a) => val(a).map(|x| x * x),
        Op::SumAll(a) => Matrix::scalar(val(a).sum_all()),
        Op::SumRows(a) => val(a).sum_rows(),
        Op::SumCols(a) => val(a).sum_cols(),
        Op::BroadcastRows(a, n) => {
            if val(a).rows() != 1 {
                return Err(shape_err("broadcast_rows", val(a), (1, val(a).cols())));
            }
            val(a).broadcast_rows(n)
        }
        Op::BroadcastCols(a, n) => {
            if val(a).cols() != 1 {
                return Err(shape_err("broadcast_cols", val(a), (val(a).rows(), 1)));
            }
            val(a).broadcast_cols(n)
        }
        Op::BroadcastScalar(a, r, c) => {
            let s = val(a)
                .as_scalar()
                .ok_or_else(|| shape_err("broadcast_scalar", val(a), (1, 1)))?;
            Matrix::filled(r, c, s)
        }
        Op::SliceCols(a, start, len) => {
            if start + len > val(a).cols() {
                return Err(shape_err("slice_cols", val(a), (val(a).rows(), start + len)));
            }
            val(a).slice_cols(start, len)
        }
        Op::PadCols(a, start, total) => {
            if start + val(a).cols() > total {
                return Err(shape_err("pad_cols", val(a), (val(a).rows(), total)));
            }
            val(a).pad_cols(start, total)
        }
    })
}

fn vjp_numeric(
    nodes: &[Node],
    trig: &BTreeMap<(usize, bool), usize>,
    i: usize,
    op: Op,
    g: &Matrix,
    floor: usize,
) -> [Option<(usize, Matrix)>; 2] {
    let val = |j: usize| &nodes[j].value;
    let live = |j: usize| j >= floor && nodes[j].live;
    let one = |j: usize, c: Matrix| [Some((j, c)), None];
    if !op.inputs().into_iter().flatten().any(live) {
        return [None, None];
    }
    match op {
        Op::Leaf | Op::Const => [None, None],
        Op::Add(a, b) => [
            live(a).then(|| (a, g.clone())),
            live(b).then(|| (b, g.clone())),
        ],
        Op::Sub(a, b) => [
            live(a).then(|| (a, g.clone())),
            live(b).then(|| (b, g.map(|x| -x))),
        ],
        Op::Mul(a, b) => [
            live(a).then(|| (a, g.zip_map(val(b), |x, y| x * y))),
            live(b).then(|| (b, g.zip_map(val(a), |x, y| x * y))),
        ],
        Op::Neg(a) => one(a, g.map(|x| -x)),
        Op::Scale(a, c) => one(a, g.scale(c)),
        Op::MatMul(a, b) => [
            live(a).then(|| (a, g.matmul_nt(val(b)))),
            live(b).then(|| (b, val(a).matmul_tn(g))),
        ],
        Op::Transpose(a) => one(a, g.transpose()),
        Op::Sin(a) => one(
            a,
            match trig.get(&(a, true)) {
                Some(&c) => g.zip_map(val(c), |x, y| x * y),
                None => g.zip_map(val(a), |x, y| x * math::cos(y)),
            },
        ),
        Op::Cos(a) => one(
            a,
            match trig.get(&(a, false)) {
                Some(&s) => g.zip_map(val(s), |x, y| -(x * y)),
                None => g.zip_map(val(a), |x, y| -(x * math::sin(y))),
            },
        ),
        Op::Exp(a) => one(a, g.zip_map(val(i), |x, y| x * y)),
        Op::Tanh(a) => one(a, g.zip_map(val(i), |x, y| x * (1.0 - y * y))),
        Op::Square(a) => one(a, g.zip_map(val(a), |x, y| 2.0 * (x * y))),
        Op::SumAll(a) => {
            let (r, c) = val(a).shape();
            one(a, Matrix::filled(r, c, g.data()[0]))
        }
        Op::SumRows(a) => one(a, g.broadcast_rows(val(a).rows())),
        Op::SumCols(a) => one(a, g.broadcast_cols(val(a).cols())),
        Op::BroadcastRows(a, _) => one(a, g.sum_rows()),
        Op::BroadcastCols(a, _) => one(a, g.sum_cols()),
        Op::BroadcastScalar(a, _, _) => one(a, Matrix::scalar(g.sum_all())),
        Op::SliceCols(a, start, _) => one(a, g.pad_cols(start, val(a).cols())),
        Op::PadCols(a, start, _) => one(a, g.slice_cols(start, val(a).cols())),
    }
}

impl Ops for Tape {
    type T = Var;

    fn constant(&self, m: Matrix) -> Var {
        self.push(m, Op::Const, false)
    }

    fn shape(&self, a: &Var) -> (usize, usize) {
        self.shape_of(*a)
    }

    fn to_matrix(&self, a: &Var) -> Matrix {
        self.value(*a)
    }

    fn add(&self, a: &Var, b: &Var) -> Var {
        self.apply(Primitive::Add(*a, *b))
    }

    fn sub(&self, a: &Var, b: &Var) -> Var {
        self.apply(Primitive::Sub(*a, *b))
    }

    fn mul(&self, a: &Var, b: &Var) -> Var {
        self.apply(Primitive::Mul(*a, *b))
    }

    fn neg(&self, a: &Var) -> Var {
        self.apply(Primitive::Neg(*a))
    }

    fn scale(&self, a: &Var, c: f64) -> Var {
        self.apply(Primitive::Scale(*a, c))
    }

    fn matmul(&self, a: &Var, b: &Var) -> Var {
        self.apply(Primitive::MatMul(*a, *b))
    }

    fn transpose(&self, a: &Var) -> Var {
        self.apply(Primitive::Transpose(*a))
    }

    fn sin(&self, a: &Var) -> Var {
        self.apply(Primitive::Sin(*a))
    }

    fn cos(&self, a: &Var) -> Var {
        self.apply(Primitive::Cos(*a))
    }

    fn exp(&self, a: &Var) -> Var {
        self.apply(Primitive::Exp(*a))
    }

    fn tanh(&self, a: &Var) -> Var {
        self.apply(Primitive::Tanh(*a))
    }

    fn square(&self, a: &Var) -> Var {
        self.apply(Primitive::Square(*a))
    }

    fn sum_all(&self, a: &Var) -> Var {
        self.apply(Primitive::SumAll(*a))
    }

    fn sum_rows(&self, a: &Var) -> Var {
        self.apply(Primitive::SumRows(*a))
    }

    fn sum_cols(&self, a: &Var) -> Var {
        self.apply(Primitive::SumCols(*a))
    }

    fn broadcast_rows(&self, a: &Var, rows: usize) -> Var {
        self.apply(Primitive::BroadcastRows(*a, rows))
    }

    fn broadcast_cols(&self, a: &Var, cols: usize) -> Var {
        self.apply(Primitive::BroadcastCols(*a, cols))
    }

    fn broadcast_scalar(&self, a: &Var, rows: usize, cols: usize) -> Var {
        self.apply(Primitive::BroadcastScalar(*a, rows, cols))
    }

    fn slice_cols(&self, a: &Var, start: usize, len: usize) -> Var {
        self.apply(Primitive::SliceCols(*a, start, len))
    }

    fn pad_cols(&self, a: &Var, start: usize, total: usize) -> Var {
        self.apply(Primitive::PadCols(*a, start, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_fold_and_are_dead() {
        let tape = Tape::new();
        let a = tape.constant(Matrix::scalar(2.0));
        let b = tape.sin(&a);
        assert!(!tape.is_live(b));
        let x = tape.leaf(Matrix::scalar(1.0));
        let y = tape.mul(&b, &x);
        assert!(tape.is_live(y));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 3));
        let b = tape.leaf(Matrix::zeros(3, 2));
        assert!(matches!(
            tape.try_apply(Primitive::Add(a, b)),
            Err(AdError::Shape { op: "add", .. })
        ));
        assert!(tape.try_apply(Primitive::MatMul(a, b)).is_ok());
        assert!(tape.try_apply(Primitive::MatMul(a, a)).is_err());
        assert!(tape.try_apply(Primitive::BroadcastCols(a, 4)).is_err());
    }

    #[test]
    fn foreign_variables_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.leaf(Matrix::scalar(1.0));
        let b = t2.leaf(Matrix::scalar(1.0));
        assert_eq!(t2.try_apply(Primitive::Neg(a)).unwrap_err(), AdError::ForeignVar);
        assert_eq!(t1.grad(a, &[b]).unwrap_err(), AdError::ForeignVar);
    }

    #[test]
    fn non_scalar_target_rejected() {
        let tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 1));
        assert_eq!(tape.gradients(a, &[a]).unwrap_err(), AdError::NotScalar((2, 1)));
    }

    #[test]
    fn matmul_gradients() {
        // y = sum(A B); dy/dA = 1 B^T, dy/dB = A^T 1
        let tape = Tape::new();
        let a = tape.leaf(Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Matrix::new(2, 1, vec![5.0, 6.0]).unwrap());
        let y = tape.sum_all(&tape.matmul(&a, &b));
        let g = tape.gradients(y, &[a, b]).unwrap();
        assert_eq!(g[0].data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g[1].data(), &[4.0, 6.0]);
        let r = tape.grad(y, &[a, b]).unwrap();
        assert_eq!(tape.value(r[0]), g[0]);
        assert_eq!(tape.value(r[1]), g[1]);
    }

    #[test]
    fn recorded_and_numeric_sweeps_agree() {
        let tape = Tape::new();
        let x = tape.leaf(Matrix::new(2, 3, vec![0.1, -0.4, 0.7, 1.2, -0.3, 0.5]).unwrap());
        let w = tape.leaf(Matrix::new(3, 2, vec![0.2, -0.1, 0.4, 0.3, -0.6, 0.9]).unwrap());
        let h = tape.tanh(&tape.matmul(&x, &w));
        let e = tape.exp(&tape.scale(&h, 0.5));
        let c = tape.cos(&tape.transpose(&e));
        let s = tape.sum_cols(&tape.square(&c));
        let y = tape.sum_all(&tape.broadcast_cols(&s, 3));
        let numeric = tape.gradients(y, &[x, w]).unwrap();
        let recorded = tape.grad(y, &[x, w]).unwrap();
        for (n, r) in numeric.iter().zip(&recorded) {
            let r = tape.value(*r);
            for (a, b) in n.data().iter().zip(r.data()) {
                assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
