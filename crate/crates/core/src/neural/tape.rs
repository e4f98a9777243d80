use super::store::{ParamId, ParamStore};
use super::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation whose backward pass is supplied by the caller.
pub trait CustomOp {
    /// Gradients with respect to each input, given the upstream gradient of
    /// the output.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Matrix>;
}

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddCol(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Sum(Var),
    ColSums(Var),
    ConcatRows(Vec<Var>),
    HStack(Vec<Var>),
    LogSoftmax(Var),
    Pick(Var, usize, usize),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a forward computation for later reverse-mode differentiation.
/// Parameters are read from a borrowed store and recorded once per tape.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients of one scalar output with respect to every recorded node.
pub struct Grads {
    nodes: Vec<Option<Matrix>>,
    params: Vec<Option<Var>>,
}

impl Grads {
    pub fn wrt(&self, var: Var) -> Option<&Matrix> {
        self.nodes[var.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params
            .get(id.index())
            .copied()
            .flatten()
            .and_then(|v| self.nodes[v.0].as_ref())
    }
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in {what}");
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant (no gradient flows into the store).
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(self.store.value(id).clone(), Op::Param);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(x.ncols(), y.nrows(), "shape mismatch in matmul");
        let out = x * y;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(x, y, "add");
        let out = x + y;
        self.push(out, Op::Add(a, b))
    }

    /// `a + b 1ᵀ`: adds the column vector `b` to every column of `a`.
    pub fn add_col(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(y.ncols() == 1 && y.nrows() == x.nrows(), "shape mismatch in add_col");
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            col += y.column(0);
        }
        self.push(out, Op::AddCol(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(x, y, "sub");
        let out = x - y;
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(x, y, "mul");
        let out = x.component_mul(y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = &self.nodes[a.0].value * k;
        self.push(out, Op::Scale(a, k))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// Sum of all entries, as a 1x1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::from_element(1, 1, self.nodes[a.0].value.sum());
        self.push(out, Op::Sum(a))
    }

    /// Per-column sums, as a `1 x cols` row.
    pub fn col_sums(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let out = Matrix::from_fn(1, x.ncols(), |_, c| x.column(c).sum());
        self.push(out, Op::ColSums(a))
    }

    /// Vertical concatenation of values sharing a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.nodes[parts[0].0].value.ncols();
        let rows: usize = parts.iter().map(|p| self.nodes[p.0].value.nrows()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut r = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.ncols(), cols, "shape mismatch in concat_rows");
            out.view_mut((r, 0), (v.nrows(), cols)).copy_from(v);
            r += v.nrows();
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Horizontal concatenation of values sharing a row count.
    pub fn hstack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "hstack of nothing");
        let rows = self.nodes[parts[0].0].value.nrows();
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.ncols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut c = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.nrows(), rows, "shape mismatch in hstack");
            out.view_mut((0, c), (rows, v.ncols())).copy_from(v);
            c += v.ncols();
        }
        self.push(out, Op::HStack(parts.to_vec()))
    }

    /// Log-softmax of each column independently.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            let lse = log_sum_exp(col.as_slice());
            col.apply(|v| *v -= lse);
        }
        self.push(out, Op::LogSoftmax(a))
    }

    /// Selects one entry as a 1x1 value.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Var {
        let out = Matrix::from_element(1, 1, self.nodes[a.0].value[(row, col)]);
        self.push(out, Op::Pick(a, row, col))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Matrix, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), op))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.nodes[root.0].value.shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::from_element(1, 1, 1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => *existing += g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = &g * val(*b).transpose();
                    let gb = val(*a).transpose() * &g;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddCol(a, b) => {
                    let gb = Matrix::from_fn(g.nrows(), 1, |r, _| g.row(r).sum());
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.component_mul(val(*b));
                    let gb = g.component_mul(val(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, &g * *k),
                Op::OneMinus(a) => acc(&mut grads, *a, -g.clone()),
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y));
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let d = g.component_mul(&node.value);
                    acc(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(&mut grads, *a, Matrix::from_element(r, c, g[(0, 0)]));
                }
                Op::ColSums(a) => {
                    let (r, c) = val(*a).shape();
                    acc(&mut grads, *a, Matrix::from_fn(r, c, |_, j| g[(0, j)]));
                }
                Op::ConcatRows(parts) => {
                    let mut r = 0;
                    for p in parts {
                        let (pr, pc) = val(*p).shape();
                        acc(&mut grads, *p, g.view((r, 0), (pr, pc)).into_owned());
                        r += pr;
                    }
                }
                Op::HStack(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let (pr, pc) = val(*p).shape();
                        acc(&mut grads, *p, g.view((0, c), (pr, pc)).into_owned());
                        c += pc;
                    }
                }
                Op::LogSoftmax(a) => {
                    let mut d = g.clone();
                    for c in 0..d.ncols() {
                        let total = g.column(c).sum();
                        for r in 0..d.nrows() {
                            d[(r, c)] -= node.value[(r, c)].exp() * total;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Pick(a, r, c) => {
                    let (nr, nc) = val(*a).shape();
                    let mut d = Matrix::zeros(nr, nc);
                    d[(*r, *c)] = g[(0, 0)];
                    acc(&mut grads, *a, d);
                }
                Op::Custom(inputs, op) => {
                    let ins: Vec<&Matrix> = inputs.iter().map(|v| val(*v)).collect();
                    let outs = op.backward(&ins, &node.value, &g);
                    assert_eq!(outs.len(), inputs.len(), "custom op gradient count");
                    for (v, d) in inputs.iter().zip(outs) {
                        acc(&mut grads, *v, d);
                    }
                }
            }
            // keep gradients of leaves for the caller
            if matches!(node.op, Op::Input | Op::Param) {
                grads[i] = Some(g);
            }
        }
        Grads {
            nodes: grads,
            params: self.param_vars.clone(),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
