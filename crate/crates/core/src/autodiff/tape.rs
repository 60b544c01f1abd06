//! Append-only tape of vector-valued primitives with a reverse sweep.
//!
//! Nodes are created in topological order (inputs always precede the node
//! that consumes them), so the backward pass simply walks the node list in
//! reverse. Parameter leaves read their values straight out of a borrowed
//! flat parameter slice and accumulate adjoints into a gradient of the same
//! length.

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, sigmoid, softplus};
use crate::params::Block;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { offset: usize, len: usize },
    /// `y = W x + b`, `W` is `rows × cols`.
    Affine { w: Var, b: Var, x: Var, rows: usize, cols: usize },
    /// Same affine map applied to each of `n` rows of `x` (`n × cin`).
    RowAffine { w: Var, b: Var, x: Var, n: usize, cin: usize, cout: usize },
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Neg(Var),
    Square(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Sum(Var),
    GroupSum { x: Var, group: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param { offset, len } => &self.params[offset..offset + len],
            _ => &node.value,
        }
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Input, value)
    }

    /// Leaf bound to `block` of the parameter slice.
    pub fn param(&mut self, block: Block) -> Var {
        self.param_range(block.offset, block.len())
    }

    pub fn param_range(&mut self, offset: usize, len: usize) -> Var {
        assert!(offset + len <= self.params.len(), "parameter range out of bounds");
        self.push(Op::Param { offset, len }, Vec::new())
    }

    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.len();
        let rows = self.value(b).len();
        assert_eq!(self.value(w).len(), rows * cols, "affine shape mismatch");
        let (wv, bv) = (self.value(w), self.value(b));
        let y = wv
            .chunks_exact(cols)
            .zip(bv)
            .map(|(row, b)| b + row.iter().zip(xv).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        self.push(Op::Affine { w, b, x, rows, cols }, y)
    }

    /// Applies the affine map `W (cout × cin), b` to every row of `x`.
    pub fn row_affine(&mut self, w: Var, b: Var, x: Var, cin: usize) -> Var {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        let cout = bv.len();
        assert_eq!(wv.len(), cout * cin, "row_affine weight shape mismatch");
        assert_eq!(xv.len() % cin, 0, "row_affine input shape mismatch");
        let n = xv.len() / cin;
        let mut y = Vec::with_capacity(n * cout);
        for row in xv.chunks_exact(cin) {
            for (wr, b) in wv.chunks_exact(cin).zip(bv) {
                y.push(b + wr.iter().zip(row).map(|(a, c)| a * c).sum::<f64>());
            }
        }
        self.push(Op::RowAffine { w, b, x, n, cin, cout }, y)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(self.value(p));
        }
        self.push(Op::Concat(parts.to_vec()), y)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise length mismatch");
        let y = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        self.push(op, y)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y = self.value(x).iter().map(|v| f(*v)).collect();
        self.push(op, y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| c * v, Op::Scale(x, c))
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v + c, Op::Offset(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.map(x, |v| -v, Op::Neg(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, f64::ln, Op::Log(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, softplus, Op::Softplus(x))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let y = crate::nn::softmax(self.value(x));
        self.push(Op::Softmax(x), y)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let y = crate::nn::log_softmax(self.value(x));
        self.push(Op::LogSoftmax(x), y)
    }

    pub fn log_sum_exp(&mut self, x: Var) -> Var {
        let y = vec![log_sum_exp(self.value(x))];
        self.push(Op::LogSumExp(x), y)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y = vec![self.value(x).iter().sum()];
        self.push(Op::Sum(x), y)
    }

    /// Sums consecutive groups of `group` entries.
    pub fn group_sum(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len() % group, 0, "group_sum length mismatch");
        let y = xv.chunks_exact(group).map(|c| c.iter().sum()).collect();
        self.push(Op::GroupSum { x, group }, y)
    }

    /// First node (in creation order) holding a NaN or infinite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| !matches!(n.op, Op::Param { .. }) && n.value.iter().any(|v| !v.is_finite()))
    }

    /// Reverse sweep from the scalar node `output`. Returns d output / d params
    /// for the full parameter slice the tape was created with.
    ///
    /// Consumes the tape; a second sweep needs a fresh forward pass.
    pub fn backward(self, output: Var) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(output, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `seed · d output / d params` into `grad`.
    pub fn backward_into(self, output: Var, seed: f64, grad: &mut [f64]) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::DimensionMismatch("backward needs a scalar output".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch("gradient buffer length".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![seed]);
        for id in (0..=output.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.propagate(id, &g, &mut adj, grad);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>], grad: &mut [f64]) {
        let node = &self.nodes[id];
        let y = &node.value;
        let len_of = |v: Var| self.value(v).len();
        // accumulate `f(i)` into the adjoint of `v`
        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, n: usize, f: impl Fn(usize) -> f64) {
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; n]);
            for (i, s) in slot.iter_mut().enumerate() {
                *s += f(i);
            }
        }
        match node.op {
            Op::Input => {}
            Op::Param { offset, .. } => {
                for (dst, v) in grad[offset..offset + g.len()].iter_mut().zip(g) {
                    *dst += v;
                }
            }
            Op::Affine { w, b, x, rows, cols } => {
                let (wv, xv) = (self.value(w), self.value(x));
                acc(adj, b, rows, |i| g[i]);
                acc(adj, w, rows * cols, |k| g[k / cols] * xv[k % cols]);
                acc(adj, x, cols, |j| (0..rows).map(|i| wv[i * cols + j] * g[i]).sum());
            }
            Op::RowAffine { w, b, x, n, cin, cout } => {
                let (wv, xv) = (self.value(w), self.value(x));
                acc(adj, b, cout, |o| (0..n).map(|r| g[r * cout + o]).sum());
                acc(adj, w, cout * cin, |k| {
                    let (o, c) = (k / cin, k % cin);
                    (0..n).map(|r| g[r * cout + o] * xv[r * cin + c]).sum()
                });
                acc(adj, x, n * cin, |k| {
                    let (r, c) = (k / cin, k % cin);
                    (0..cout).map(|o| wv[o * cin + c] * g[r * cout + o]).sum()
                });
            }
            Op::Concat(ref parts) => {
                let mut start = 0;
                for &p in parts {
                    let n = len_of(p);
                    acc(adj, p, n, |i| g[start + i]);
                    start += n;
                }
            }
            Op::Add(a, b) => {
                acc(adj, a, g.len(), |i| g[i]);
                acc(adj, b, g.len(), |i| g[i]);
            }
            Op::Sub(a, b) => {
                acc(adj, a, g.len(), |i| g[i]);
                acc(adj, b, g.len(), |i| -g[i]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                acc(adj, a, g.len(), |i| g[i] * bv[i]);
                acc(adj, b, g.len(), |i| g[i] * av[i]);
            }
            Op::Scale(x, c) => acc(adj, x, g.len(), |i| c * g[i]),
            Op::Offset(x) => acc(adj, x, g.len(), |i| g[i]),
            Op::Neg(x) => acc(adj, x, g.len(), |i| -g[i]),
            Op::Square(x) => {
                let xv = self.value(x);
                acc(adj, x, g.len(), |i| 2.0 * xv[i] * g[i]);
            }
            Op::Exp(x) => acc(adj, x, g.len(), |i| y[i] * g[i]),
            Op::Log(x) => {
                let xv = self.value(x);
                acc(adj, x, g.len(), |i| g[i] / xv[i]);
            }
            Op::Tanh(x) => acc(adj, x, g.len(), |i| (1.0 - y[i] * y[i]) * g[i]),
            Op::Sigmoid(x) => acc(adj, x, g.len(), |i| y[i] * (1.0 - y[i]) * g[i]),
            Op::Softplus(x) => {
                let xv = self.value(x);
                acc(adj, x, g.len(), |i| sigmoid(xv[i]) * g[i]);
            }
            Op::Softmax(x) => {
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                acc(adj, x, g.len(), |i| y[i] * (g[i] - dot));
            }
            Op::LogSoftmax(x) => {
                let total: f64 = g.iter().sum();
                acc(adj, x, g.len(), |i| g[i] - y[i].exp() * total);
            }
            Op::LogSumExp(x) => {
                let xv = self.value(x);
                let lse = y[0];
                acc(adj, x, xv.len(), |i| g[0] * (xv[i] - lse).exp());
            }
            Op::Sum(x) => acc(adj, x, len_of(x), |_| g[0]),
            Op::GroupSum { x, group } => acc(adj, x, len_of(x), |i| g[i / group]),
        }
    }
}
