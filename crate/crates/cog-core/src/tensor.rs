//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape of [`Tensor`] nodes built define-by-run: every
//! operation computes its value eagerly, records its parents, and returns an
//! index handle ([`TensorId`]). [`Graph::backward`] then walks the tape in
//! reverse and accumulates gradients into every node, including leaves.
//!
//! Scope is deliberately narrow: rank 0..=2, the ops needed by the training
//! losses, no broadcasting beyond row-bias addition and scalar affine maps.
//! Every op validates shapes and checks its output for NaN/inf so a bad loss
//! surfaces at the op that produced it instead of as a silent bad update.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::Result;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = x + z, identical shapes.
    Add(TensorId, TensorId),
    /// y = x - z, identical shapes.
    Sub(TensorId, TensorId),
    /// y = x * z elementwise, identical shapes.
    Mul(TensorId, TensorId),
    /// y = k * x + c; only the slope k matters for the backward pass.
    Affine(TensorId, f64),
    /// y[i,j] = sum_p x[i,p] z[p,j].
    Matmul(TensorId, TensorId),
    /// y[i,j] = x[i,j] + bias[j].
    AddRow(TensorId, TensorId),
    Relu(TensorId),
    Tanh(TensorId),
    Exp(TensorId),
    Ln(TensorId),
    /// y = ln(1 + e^x), computed stably.
    Softplus(TensorId),
    Square(TensorId),
    Clamp(TensorId, f64, f64),
    /// y = min(x, z) elementwise; ties route the gradient to x.
    MinElem(TensorId, TensorId),
    /// Scalar sum of all elements.
    SumAll(TensorId),
    /// Scalar mean of all elements.
    MeanAll(TensorId),
    /// [m,n] -> [m], sum over columns.
    SumRows(TensorId),
    /// [m,n] -> [m], log(sum_j exp(x[i,j])) with max subtraction.
    LogSumExpRows(TensorId),
    /// k inputs of shape [m] -> [m,k].
    StackCols(Vec<TensorId>),
    /// Concatenation of rank-2 inputs along columns; payload holds each
    /// input's column count.
    ConcatCols(Vec<(TensorId, usize)>),
    /// Same data, new shape with equal element count.
    Reshape(TensorId),
}

/// One node of the tape: value, gradient accumulator, and provenance.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    op: Op,
}

impl Tensor {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Reverse-mode tape. Build ops, call [`Graph::backward`] once on a scalar
/// loss, then read gradients back through [`Graph::grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Tensor>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Scalar value of a rank-0 or single-element tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        self.nodes[id.0].data[0]
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<TensorId> {
        debug_assert_eq!(numel_of(&shape), data.len());
        // A NaN or inf anywhere poisons this product-free probe sum.
        let probe: f64 = data.iter().map(|v| v * 0.0).sum();
        if probe != 0.0 {
            return Err(CoreError::NonFinite(format!(
                "op {:?} produced a non-finite value",
                op_name(&op)
            )));
        }
        let grad = vec![0.0; data.len()];
        self.nodes.push(Tensor {
            shape,
            data,
            grad,
            op,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    /// Inserts an input node. Leaves accumulate gradients like any other
    /// node, which is how parameters receive their updates.
    pub fn leaf(&mut self, shape: &[usize], data: &[f64]) -> Result<TensorId> {
        if numel_of(shape) != data.len() {
            return Err(CoreError::Shape(format!(
                "leaf: shape {shape:?} wants {} elements, got {}",
                numel_of(shape),
                data.len()
            )));
        }
        self.push(shape.to_vec(), data.to_vec(), Op::Leaf)
    }

    /// Scalar leaf.
    pub fn scalar_leaf(&mut self, v: f64) -> Result<TensorId> {
        self.push(Vec::new(), vec![v], Op::Leaf)
    }

    fn binary_same_shape(&self, a: TensorId, b: TensorId, name: &str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(CoreError::Shape(format!(
                "{name}: shapes {:?} and {:?} differ",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "add")?;
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x + y);
        self.push(self.nodes[a.0].shape.clone(), data, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "sub")?;
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x - y);
        self.push(self.nodes[a.0].shape.clone(), data, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mul")?;
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x * y);
        self.push(self.nodes[a.0].shape.clone(), data, Op::Mul(a, b))
    }

    /// y = k * x + c.
    pub fn affine(&mut self, a: TensorId, k: f64, c: f64) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|x| k * x + c).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Affine(a, k))
    }

    pub fn neg(&mut self, a: TensorId) -> Result<TensorId> {
        self.affine(a, -1.0, 0.0)
    }

    /// Matrix product of [m,k] and [k,n].
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CoreError::Shape(format!(
                "matmul: incompatible shapes {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_accum(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut out);
        self.push(vec![m, n], out, Op::Matmul(a, b))
    }

    /// Adds a bias row: [m,n] + [n].
    pub fn add_row(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[bias.0].shape);
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(CoreError::Shape(format!(
                "add_row: incompatible shapes {sa:?} + {sb:?}"
            )));
        }
        let (m, n) = (sa[0], sa[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.nodes[a.0].data[i * n + j] + self.nodes[bias.0].data[j];
            }
        }
        self.push(vec![m, n], out, Op::AddRow(a, bias))
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| x.max(0.0)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| libm::tanh(x)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| libm::exp(x)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Exp(a))
    }

    pub fn ln(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| libm::log(x)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| softplus(x)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Softplus(a))
    }

    pub fn square(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| x * x).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Square(a))
    }

    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> Result<TensorId> {
        if !(lo <= hi) {
            return Err(CoreError::Config(format!("clamp: lo {lo} > hi {hi}")));
        }
        let data = self
            .nodes[a.0]
            .data
            .iter()
            .map(|&x| x.max(lo).min(hi))
            .collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Clamp(a, lo, hi))
    }

    pub fn min_elem(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "min_elem")?;
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| {
            if x <= y {
                x
            } else {
                y
            }
        });
        self.push(self.nodes[a.0].shape.clone(), data, Op::MinElem(a, b))
    }

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        self.push(Vec::new(), vec![s], Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.nodes[a.0].numel();
        if n == 0 {
            return Err(CoreError::Shape(String::from("mean_all: empty tensor")));
        }
        let s: f64 = self.nodes[a.0].data.iter().sum::<f64>() / n as f64;
        self.push(Vec::new(), vec![s], Op::MeanAll(a))
    }

    /// [m,n] -> [m], summing each row.
    pub fn sum_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 {
            return Err(CoreError::Shape(format!("sum_rows: want rank 2, got {sa:?}")));
        }
        let (m, n) = (sa[0], sa[1]);
        let data = (0..m)
            .map(|i| self.nodes[a.0].data[i * n..(i + 1) * n].iter().sum())
            .collect();
        self.push(vec![m], data, Op::SumRows(a))
    }

    /// Row-wise log-sum-exp with max subtraction: [m,n] -> [m].
    pub fn logsumexp_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 || sa[1] == 0 {
            return Err(CoreError::Shape(format!(
                "logsumexp_rows: want rank 2 with columns, got {sa:?}"
            )));
        }
        let (m, n) = (sa[0], sa[1]);
        let mut data = vec![0.0; m];
        for i in 0..m {
            let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
            data[i] = logsumexp(row);
        }
        self.push(vec![m], data, Op::LogSumExpRows(a))
    }

    /// Stacks k vectors of shape [m] into an [m,k] matrix, column per input.
    pub fn stack_cols(&mut self, ids: &[TensorId]) -> Result<TensorId> {
        if ids.is_empty() {
            return Err(CoreError::Shape(String::from("stack_cols: no inputs")));
        }
        let m = match self.nodes[ids[0].0].shape.as_slice() {
            [m] => *m,
            other => {
                return Err(CoreError::Shape(format!(
                    "stack_cols: want rank-1 inputs, got {other:?}"
                )))
            }
        };
        for id in ids {
            if self.nodes[id.0].shape.as_slice() != [m] {
                return Err(CoreError::Shape(format!(
                    "stack_cols: input shape {:?} != [{m}]",
                    self.nodes[id.0].shape
                )));
            }
        }
        let k = ids.len();
        let mut data = vec![0.0; m * k];
        for (c, id) in ids.iter().enumerate() {
            for i in 0..m {
                data[i * k + c] = self.nodes[id.0].data[i];
            }
        }
        self.push(vec![m, k], data, Op::StackCols(ids.to_vec()))
    }

    /// Concatenates [m,c1], [m,c2], ... along columns into [m, c1+c2+...].
    pub fn concat_cols(&mut self, ids: &[TensorId]) -> Result<TensorId> {
        if ids.is_empty() {
            return Err(CoreError::Shape(String::from("concat_cols: no inputs")));
        }
        let m = match self.nodes[ids[0].0].shape.as_slice() {
            [m, _] => *m,
            other => {
                return Err(CoreError::Shape(format!(
                    "concat_cols: want rank-2 inputs, got {other:?}"
                )))
            }
        };
        let mut parts = Vec::with_capacity(ids.len());
        let mut total = 0usize;
        for id in ids {
            match self.nodes[id.0].shape.as_slice() {
                [mi, ci] if *mi == m => {
                    parts.push((*id, *ci));
                    total += ci;
                }
                other => {
                    return Err(CoreError::Shape(format!(
                        "concat_cols: input shape {other:?} incompatible with {m} rows"
                    )))
                }
            }
        }
        let mut data = vec![0.0; m * total];
        let mut base = 0usize;
        for &(id, c) in &parts {
            for i in 0..m {
                let src = &self.nodes[id.0].data[i * c..(i + 1) * c];
                data[i * total + base..i * total + base + c].copy_from_slice(src);
            }
            base += c;
        }
        self.push(vec![m, total], data, Op::ConcatCols(parts))
    }

    /// Reinterprets the data with a new shape of equal element count.
    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel_of(shape) != self.nodes[a.0].numel() {
            return Err(CoreError::Shape(format!(
                "reshape: {:?} -> {shape:?} changes element count",
                self.nodes[a.0].shape
            )));
        }
        self.push(shape.to_vec(), self.nodes[a.0].data.clone(), Op::Reshape(a))
    }

    /// Copies a value into a fresh leaf, cutting it out of the gradient flow.
    pub fn detach(&mut self, a: TensorId) -> Result<TensorId> {
        self.push(
            self.nodes[a.0].shape.clone(),
            self.nodes[a.0].data.clone(),
            Op::Leaf,
        )
    }

    /// Backpropagates from a scalar loss through the whole tape.
    ///
    /// Gradients accumulate, so call once per graph (or zero via rebuild).
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].numel() != 1 {
            return Err(CoreError::Shape(format!(
                "backward: loss must be scalar, got {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for idx in (0..self.nodes.len()).rev() {
            // Split off this node's grad so parents can be mutated.
            let g = core::mem::take(&mut self.nodes[idx].grad);
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accum(&mut self.nodes[a.0].grad, &g, 1.0);
                    accum(&mut self.nodes[b.0].grad, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    accum(&mut self.nodes[a.0].grad, &g, 1.0);
                    accum(&mut self.nodes[b.0].grad, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (pa, pb) = (a.0, b.0);
                    for i in 0..g.len() {
                        let (xa, xb) = (self.nodes[pa].data[i], self.nodes[pb].data[i]);
                        self.nodes[pa].grad[i] += g[i] * xb;
                        self.nodes[pb].grad[i] += g[i] * xa;
                    }
                }
                Op::Affine(a, k) => {
                    accum(&mut self.nodes[a.0].grad, &g, k);
                }
                Op::Matmul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    // dA[i,p] += sum_j g[i,j] B[p,j]
                    let bdat = core::mem::take(&mut self.nodes[b.0].data);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bdat[p * n..(p + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            self.nodes[a.0].grad[i * k + p] += acc;
                        }
                    }
                    self.nodes[b.0].data = bdat;
                    // dB[p,j] += sum_i A[i,p] g[i,j]
                    let adat = core::mem::take(&mut self.nodes[a.0].data);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = adat[i * k + p];
                            if av != 0.0 {
                                let brow = &mut self.nodes[b.0].grad[p * n..(p + 1) * n];
                                for j in 0..n {
                                    brow[j] += av * grow[j];
                                }
                            }
                        }
                    }
                    self.nodes[a.0].data = adat;
                }
                Op::AddRow(a, bias) => {
                    accum(&mut self.nodes[a.0].grad, &g, 1.0);
                    let n = self.nodes[bias.0].shape[0];
                    let m = g.len() / n;
                    for i in 0..m {
                        for j in 0..n {
                            self.nodes[bias.0].grad[j] += g[i * n + j];
                        }
                    }
                }
                Op::Relu(a) => {
                    for i in 0..g.len() {
                        if self.nodes[a.0].data[i] > 0.0 {
                            self.nodes[a.0].grad[i] += g[i];
                        }
                    }
                }
                Op::Tanh(a) => {
                    for i in 0..g.len() {
                        let y = self.nodes[idx].data[i];
                        self.nodes[a.0].grad[i] += g[i] * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    for i in 0..g.len() {
                        let y = self.nodes[idx].data[i];
                        self.nodes[a.0].grad[i] += g[i] * y;
                    }
                }
                Op::Ln(a) => {
                    for i in 0..g.len() {
                        self.nodes[a.0].grad[i] += g[i] / self.nodes[a.0].data[i];
                    }
                }
                Op::Softplus(a) => {
                    for i in 0..g.len() {
                        let x = self.nodes[a.0].data[i];
                        self.nodes[a.0].grad[i] += g[i] * sigmoid(x);
                    }
                }
                Op::Square(a) => {
                    for i in 0..g.len() {
                        self.nodes[a.0].grad[i] += g[i] * 2.0 * self.nodes[a.0].data[i];
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    for i in 0..g.len() {
                        let x = self.nodes[a.0].data[i];
                        if x >= lo && x <= hi {
                            self.nodes[a.0].grad[i] += g[i];
                        }
                    }
                }
                Op::MinElem(a, b) => {
                    for i in 0..g.len() {
                        if self.nodes[a.0].data[i] <= self.nodes[b.0].data[i] {
                            self.nodes[a.0].grad[i] += g[i];
                        } else {
                            self.nodes[b.0].grad[i] += g[i];
                        }
                    }
                }
                Op::SumAll(a) => {
                    accum_scalar(&mut self.nodes[a.0].grad, g[0]);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].grad.len() as f64;
                    accum_scalar(&mut self.nodes[a.0].grad, g[0] / n);
                }
                Op::SumRows(a) => {
                    let n = self.nodes[a.0].shape[1];
                    for i in 0..g.len() {
                        for j in 0..n {
                            self.nodes[a.0].grad[i * n + j] += g[i];
                        }
                    }
                }
                Op::LogSumExpRows(a) => {
                    let n = self.nodes[a.0].shape[1];
                    for i in 0..g.len() {
                        let y = self.nodes[idx].data[i];
                        for j in 0..n {
                            let sm = libm::exp(self.nodes[a.0].data[i * n + j] - y);
                            self.nodes[a.0].grad[i * n + j] += g[i] * sm;
                        }
                    }
                }
                Op::StackCols(ids) => {
                    let k = ids.len();
                    let m = g.len() / k;
                    for (c, id) in ids.iter().enumerate() {
                        for i in 0..m {
                            self.nodes[id.0].grad[i] += g[i * k + c];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total: usize = parts.iter().map(|(_, c)| c).sum();
                    let m = g.len() / total;
                    let mut base = 0usize;
                    for (id, c) in parts {
                        for i in 0..m {
                            for j in 0..c {
                                self.nodes[id.0].grad[i * c + j] += g[i * total + base + j];
                            }
                        }
                        base += c;
                    }
                }
                Op::Reshape(a) => {
                    accum(&mut self.nodes[a.0].grad, &g, 1.0);
                }
            }
            self.nodes[idx].grad = g;
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Affine(..) => "affine",
        Op::Matmul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Softplus(..) => "softplus",
        Op::Square(..) => "square",
        Op::Clamp(..) => "clamp",
        Op::MinElem(..) => "min_elem",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
        Op::SumRows(..) => "sum_rows",
        Op::LogSumExpRows(..) => "logsumexp_rows",
        Op::StackCols(..) => "stack_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::Reshape(..) => "reshape",
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn accum(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn accum_scalar(dst: &mut [f64], v: f64) {
    for d in dst.iter_mut() {
        *d += v;
    }
}

/// out += A @ B for row-major [m,k] x [k,n].
///
/// The i-k-j loop order keeps the inner loop a contiguous fused
/// multiply-add over rows of B, which the compiler vectorizes.
pub fn matmul_accum(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// Numerically stable log(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Max-subtracted log(sum_i e^{x_i}) over a nonempty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| libm::exp(x - m)).sum();
    m + libm::log(s)
}
