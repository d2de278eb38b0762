//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs, so node order is a topological order by construction. A
//! single [`Tape::backward`] sweep fills gradients for every leaf that was
//! registered with `requires_grad`.

use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by leaf.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` when it did not require one.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

fn row_dims(t: &Tensor, op: &'static str, other: &Tensor) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::Shape {
        op,
        lhs: t.shape().to_vec(),
        rhs: other.shape().to_vec(),
    })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Frozen values pass `requires_grad = false`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name.into() });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b) => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a) => self.requires_grad(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (p, q) = row_dims(av, "matmul", bv)?;
        let (q2, r) = row_dims(bv, "matmul", av)?;
        if q != q2 || bv.rank() != 2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let out = Tensor::new(&[p, r], matmul_raw(av.data(), bv.data(), p, q, r))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        self.push(out, Op::Transpose(a), "transpose")
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    fn broadcast_row(&self, a: Var, row: Var, op: &'static str) -> Result<(usize, usize)> {
        let (av, rv) = (self.value(a), self.value(row));
        let (p, d) = row_dims(av, op, rv)?;
        let ok = match rv.shape() {
            [c] => *c == d,
            [1, c] => *c == d,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape {
                op,
                lhs: av.shape().to_vec(),
                rhs: rv.shape().to_vec(),
            });
        }
        Ok((p, d))
    }

    /// Adds a `d`-vector (or `1×d` row) to every row of a `p×d` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, d) = self.broadcast_row(a, row, "add_row")?;
        let r = self.value(row).data();
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] + r[i % d]);
        self.push(out, Op::AddRow(a, row), "add_row")
    }

    /// Multiplies every row of a `p×d` matrix by a `d`-vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, d) = self.broadcast_row(a, row, "mul_row")?;
        let r = self.value(row).data();
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] * r[i % d]);
        self.push(out, Op::MulRow(a, row), "mul_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a), "add_scalar")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_finite() {
            return Err(Error::NonFinite {
                op: "softmax_rows".into(),
            });
        }
        let (p, q) = row_dims(av, "softmax_rows", av)?;
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(q).take(p) {
            softmax_in_place(row);
        }
        let out = Tensor::new(av.shape(), data)?;
        self.push(out, Op::SoftmaxRows(a), "softmax_rows")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        self.push(out, Op::Reshape(a), "reshape")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(out, Op::Mean(a), "mean")
    }

    /// Mean of squared entries.
    pub fn mean_square(&mut self, a: Var) -> Result<Var> {
        let sq = self.mul(a, a)?;
        self.mean(sq)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: lv.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(
                    Tensor::new(
                        node.value.shape(),
                        g.unwrap_or_else(|| vec![0.0; node.value.len()]),
                    )
                    .expect("gradient matches leaf shape"),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
        if !self.requires_grad(var) {
            return;
        }
        match &mut grads[var.0] {
            Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (p, q) = av.dims2().expect("checked in forward");
                let r = bv.shape()[1];
                if self.requires_grad(a) {
                    let bt = bv.transpose().expect("rank 2");
                    self.accumulate(grads, a, matmul_raw(g, bt.data(), p, r, q));
                }
                if self.requires_grad(b) {
                    let at = Tensor::new(&[p, q], av.data().to_vec())
                        .and_then(|t| t.transpose())
                        .expect("rank 2");
                    self.accumulate(grads, b, matmul_raw(at.data(), g, q, p, r));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = out.dims2().expect("rank 2");
                let gt = Tensor::new(&[r, c], g.to_vec())
                    .and_then(|t| t.transpose())
                    .expect("rank 2");
                self.accumulate(grads, a, gt.into_data());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                if self.requires_grad(a) {
                    self.accumulate(grads, a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                }
                if self.requires_grad(b) {
                    self.accumulate(grads, b, g.iter().zip(av).map(|(g, a)| g * a).collect());
                }
            }
            Op::AddRow(a, row) => {
                let d = self.value(row).len();
                self.accumulate(grads, a, g.to_vec());
                if self.requires_grad(row) {
                    let mut acc = vec![0.0; d];
                    for (i, gi) in g.iter().enumerate() {
                        acc[i % d] += gi;
                    }
                    self.accumulate(grads, row, acc);
                }
            }
            Op::MulRow(a, row) => {
                let rv = self.value(row).data();
                let d = rv.len();
                if self.requires_grad(a) {
                    self.accumulate(
                        grads,
                        a,
                        g.iter().enumerate().map(|(i, gi)| gi * rv[i % d]).collect(),
                    );
                }
                if self.requires_grad(row) {
                    let av = self.value(a).data();
                    let mut acc = vec![0.0; d];
                    for (i, gi) in g.iter().enumerate() {
                        acc[i % d] += gi * av[i];
                    }
                    self.accumulate(grads, row, acc);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, a, g.iter().map(|x| x * s).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, a, g.to_vec()),
            Op::Sigmoid(a) => {
                let y = out.data();
                self.accumulate(
                    grads,
                    a,
                    g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                );
            }
            Op::SoftmaxRows(a) => {
                let (_, q) = out.dims2().expect("rank 2");
                let y = out.data();
                let mut acc = vec![0.0; y.len()];
                for ((gr, yr), ar) in g.chunks(q).zip(y.chunks(q)).zip(acc.chunks_mut(q)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((a, g), y) in ar.iter_mut().zip(gr).zip(yr) {
                        *a = y * (g - dot);
                    }
                }
                self.accumulate(grads, a, acc);
            }
            Op::Sum(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0] / n as f64; n]);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
