//! Dynamic reverse-mode tape over dense `f64` matrices.
//!
//! Every row of a matrix is one sample; the graph is rebuilt for each
//! forward pass and discarded afterwards. Parameters are referenced from a
//! [`ParameterStore`] without copying, so the graph borrows the store for its
//! whole lifetime.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParameterStore};
use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    /// `x · wᵀ` with `w` stored as (out, in).
    MatMulT(NodeId, NodeId),
    /// `x + b` with `b` a single row broadcast over all rows of `x`.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Matrix),
    /// `a·x + c`
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Elu(NodeId),
    Abs(NodeId),
    Square(NodeId),
    SumCols(NodeId),
    SumAll(NodeId),
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Reshape(NodeId),
    /// Per-row vector-matrix product: `q` (B×n) times `w` (B×(n·e)) → B×e.
    BatchVecMat(NodeId, NodeId, usize, usize),
}

enum Value {
    Owned(Matrix),
    Param(ParamId),
}

struct Node {
    op: Op,
    value: Value,
}

pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

/// Gradients of one scalar loss with respect to every node of a graph.
pub struct Gradients {
    nodes: Vec<Option<Matrix>>,
    params: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    pub fn wrt(&self, node: NodeId) -> Option<&Matrix> {
        self.nodes[node.0].as_ref()
    }

    /// Gradient for each parameter the loss reached.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params
            .iter()
            .filter_map(|&(p, n)| self.nodes[n.0].as_ref().map(|g| (p, g)))
    }
}

fn shape_of(m: &Matrix) -> (usize, usize) {
    m.dim()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh` through one `expm1`, noticeably cheaper than libm's `tanh`.
fn tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp_m1();
    e / (e + 2.0)
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(256),
            param_nodes: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        match &self.nodes[id.0].value {
            Value::Owned(m) => m,
            Value::Param(p) => self.store.value(*p),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        shape_of(self.value(id))
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; receives gradient but feeds nothing upstream.
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn row(&mut self, values: &[f64]) -> NodeId {
        let m = Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape");
        self.input(m)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param,
            value: Value::Param(id),
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xr, xc) = self.shape(x);
        let (wr, wc) = self.shape(w);
        if xc != wc {
            return Err(Error::shape(
                "matmul",
                format!("input has {xc} columns but weights are {wr}x{wc}"),
            ));
        }
        let _ = xr;
        let v = self.value(x).dot(&self.value(w).t());
        Ok(self.push(Op::MatMulT(x, w), v))
    }

    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (_, xc) = self.shape(x);
        let (br, bc) = self.shape(b);
        if br != 1 || bc != xc {
            return Err(Error::shape(
                "add_row",
                format!("bias {br}x{bc} does not broadcast over {xc} columns"),
            ));
        }
        let v = self.value(x) + self.value(b);
        Ok(self.push(Op::AddRow(x, b), v))
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// Elementwise product with a constant (masks, per-sample weights).
    pub fn mul_const(&mut self, a: NodeId, c: Matrix) -> Result<NodeId> {
        if self.shape(a) != c.dim() {
            return Err(Error::shape(
                "mul_const",
                format!("{:?} vs {:?}", self.shape(a), c.dim()),
            ));
        }
        let v = self.value(a) * &c;
        Ok(self.push(Op::MulConst(a, c), v))
    }

    /// `scale·x + shift`
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(x).mapv(|e| scale * e + shift);
        self.push(Op::Affine(x, scale), v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(|e| e.max(0.0));
        self.push(Op::Relu(x), v)
    }

    pub fn elu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(elu);
        self.push(Op::Elu(x), v)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(f64::abs);
        self.push(Op::Abs(x), v)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(|e| e * e);
        self.push(Op::Square(x), v)
    }

    /// Row sums, giving an r×1 column.
    pub fn sum_cols(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumCols(x), v)
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Op::SumAll(x), Array2::from_elem((1, 1), s))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat", "nothing to concatenate"));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::shape("concat", format!("row counts {rows} vs {r}")));
            }
            cols += c;
        }
        let mut v = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let pv = self.value(p);
            let c = pv.ncols();
            v.slice_mut(s![.., at..at + c]).assign(pv);
            at += c;
        }
        Ok(self.push(Op::Concat(parts.to_vec()), v))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (_, c) = self.shape(x);
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{} out of {c} columns", start + len),
            ));
        }
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        Ok(self.push(Op::SliceCols(x, start), v))
    }

    /// Picks column `idx[r]` from each row `r`, giving an r×1 column.
    pub fn gather(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if idx.len() != r {
            return Err(Error::shape("gather", format!("{} indices for {r} rows", idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= c) {
            return Err(Error::shape("gather", format!("index {bad} out of {c} columns")));
        }
        let xv = self.value(x);
        let v = Array2::from_shape_fn((r, 1), |(i, _)| xv[[i, idx[i]]]);
        Ok(self.push(Op::Gather(x, idx.to_vec()), v))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.len() != rows * cols {
            return Err(Error::shape(
                "reshape",
                format!("{:?} into {rows}x{cols}", xv.dim()),
            ));
        }
        let flat: Vec<f64> = xv.iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("checked length");
        Ok(self.push(Op::Reshape(x), v))
    }

    /// For each row b: `out[b, j] = Σ_i q[b, i] · w[b, i·e + j]`.
    pub fn batch_vecmat(&mut self, q: NodeId, w: NodeId, e: usize) -> Result<NodeId> {
        let (qb, n) = self.shape(q);
        let (wb, wc) = self.shape(w);
        if qb != wb || wc != n * e {
            return Err(Error::shape(
                "batch_vecmat",
                format!("q {qb}x{n} with w {wb}x{wc} and embed {e}"),
            ));
        }
        let (qv, wv) = (self.value(q), self.value(w));
        let mut v = Array2::zeros((qb, e));
        for b in 0..qb {
            for i in 0..n {
                let qi = qv[[b, i]];
                for j in 0..e {
                    v[[b, j]] += qi * wv[[b, i * e + j]];
                }
            }
        }
        Ok(self.push(Op::BatchVecMat(q, w, n, e), v))
    }

    /// Reverse sweep from a 1×1 loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut grads[id.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = match &node.value {
                Value::Owned(m) => m,
                Value::Param(p) => self.store.value(*p),
            };
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMulT(x, w) => {
                    acc(&mut grads, *x, gy.dot(self.value(*w)));
                    acc(&mut grads, *w, gy.t().dot(self.value(*x)));
                }
                Op::AddRow(x, b) => {
                    acc(&mut grads, *b, gy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, gy.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, gy.clone());
                    acc(&mut grads, *b, gy.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&gy);
                    acc(&mut grads, *a, gy.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &gy * self.value(*b));
                    acc(&mut grads, *b, &gy * self.value(*a));
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, &gy * c),
                Op::Affine(x, scale) => acc(&mut grads, *x, &gy * *scale),
                Op::Sigmoid(x) => {
                    let mut g = gy.clone();
                    Zip::from(&mut g).and(y).for_each(|g, &s| *g *= s * (1.0 - s));
                    acc(&mut grads, *x, g);
                }
                Op::Tanh(x) => {
                    let mut g = gy.clone();
                    Zip::from(&mut g).and(y).for_each(|g, &t| *g *= 1.0 - t * t);
                    acc(&mut grads, *x, g);
                }
                Op::Relu(x) => {
                    let mut g = gy.clone();
                    Zip::from(&mut g).and(self.value(*x)).for_each(|g, &v| {
                        if v <= 0.0 {
                            *g = 0.0
                        }
                    });
                    acc(&mut grads, *x, g);
                }
                Op::Elu(x) => {
                    let mut g = gy.clone();
                    Zip::from(&mut g).and(y).for_each(|g, &out| {
                        if out <= 0.0 {
                            *g *= out + 1.0
                        }
                    });
                    acc(&mut grads, *x, g);
                }
                Op::Abs(x) => {
                    let mut g = gy.clone();
                    Zip::from(&mut g)
                        .and(self.value(*x))
                        .for_each(|g, &v| *g *= if v < 0.0 { -1.0 } else { 1.0 });
                    acc(&mut grads, *x, g);
                }
                Op::Square(x) => acc(&mut grads, *x, &gy * &(self.value(*x) * 2.0)),
                Op::SumCols(x) => {
                    let (r, c) = self.shape(*x);
                    let g = gy.broadcast((r, c)).expect("column broadcast").to_owned();
                    acc(&mut grads, *x, g);
                }
                Op::SumAll(x) => {
                    let g = Array2::from_elem(self.shape(*x), gy[[0, 0]]);
                    acc(&mut grads, *x, g);
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let c = self.shape(p).1;
                        acc(&mut grads, p, gy.slice(s![.., at..at + c]).to_owned());
                        at += c;
                    }
                }
                Op::SliceCols(x, start) => {
                    let mut g = Array2::zeros(self.shape(*x));
                    let c = gy.ncols();
                    g.slice_mut(s![.., *start..*start + c]).assign(&gy);
                    acc(&mut grads, *x, g);
                }
                Op::Gather(x, idx) => {
                    let mut g = Array2::zeros(self.shape(*x));
                    for (r, &c) in idx.iter().enumerate() {
                        g[[r, c]] = gy[[r, 0]];
                    }
                    acc(&mut grads, *x, g);
                }
                Op::Reshape(x) => {
                    let flat: Vec<f64> = gy.iter().copied().collect();
                    let g = Array2::from_shape_vec(self.shape(*x), flat).expect("reshape back");
                    acc(&mut grads, *x, g);
                }
                Op::BatchVecMat(q, w, n, e) => {
                    let (qv, wv) = (self.value(*q), self.value(*w));
                    let rows = qv.nrows();
                    let mut gq = Array2::zeros((rows, *n));
                    let mut gw = Array2::zeros((rows, n * e));
                    for b in 0..rows {
                        for i in 0..*n {
                            let mut sq = 0.0;
                            for j in 0..*e {
                                let gyj = gy[[b, j]];
                                sq += gyj * wv[[b, i * e + j]];
                                gw[[b, i * e + j]] = gyj * qv[[b, i]];
                            }
                            gq[[b, i]] = sq;
                        }
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *w, gw);
                }
            }
            grads[i] = Some(gy);
        }

        let params = self.param_nodes.iter().map(|(&p, &n)| (p, n)).collect();
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}
