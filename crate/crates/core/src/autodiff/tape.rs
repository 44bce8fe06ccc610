//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates adjoints into every leaf created with `requires_grad`.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Exp,
    Scale(f64),
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Scale(c) => c * x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Exp => y,
            Unary::Scale(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Unary(Unary, Var),
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        inner: usize,
        widths: Vec<usize>,
    },
    SliceCols {
        input: Var,
        start: usize,
    },
    GatherRows {
        input: Var,
        index: Vec<usize>,
    },
    SegmentSum {
        input: Var,
        segment: Vec<usize>,
    },
    SegmentSoftmax {
        input: Var,
        segment: Vec<Option<usize>>,
    },
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records a leaf. Gradients are collected for it iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let needs_grad = value.requires_grad();
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, populated by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        let value = Tensor::new(shape, data).expect("op produced inconsistent shape");
        self.push(value, op, needs_grad)
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(op, s, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.record(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    /// Elementwise binary op with equal shapes or a single-element operand.
    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let f = |x: f64, y: f64| match op {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let (shape, data) = if sa == sb {
            (sa, av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect())
        } else if bv.len() == 1 {
            let y = bv[0];
            (sa, av.iter().map(|&x| f(x, y)).collect())
        } else if av.len() == 1 {
            let x = av[0];
            (sb, bv.iter().map(|&y| f(x, y)).collect())
        } else {
            return Err(Error::dim("elementwise", &sa, &sb));
        };
        Ok(self.record(shape, data, Op::Binary(op, a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let value = self.value(x);
        let shape = value.shape().to_vec();
        let data = value.data().iter().map(|&v| op.apply(v)).collect();
        self.record(shape, data, Op::Unary(op, x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(Unary::Scale(c), x)
    }

    /// `a[m×n] + b[1×n]`, the bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "add_row")?;
        if self.value(b).numel() != n {
            return Err(Error::dim("add_row", self.shape(a), self.shape(b)));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = av.to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(bv).for_each(|(o, &y)| *o += y);
        }
        Ok(self.record(vec![m, n], out, Op::AddRow(a, b), &[a, b]))
    }

    /// `a[m×n] ⊙ c[m×1]`, each row scaled by its own coefficient.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "mul_col")?;
        if self.value(c).numel() != m {
            return Err(Error::dim("mul_col", self.shape(a), self.shape(c)));
        }
        let av = self.value(a).data();
        let cv = self.value(c).data();
        let mut out = av.to_vec();
        for (row, &s) in out.chunks_mut(n).zip(cv) {
            row.iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.record(vec![m, n], out, Op::MulCol(a, c), &[a, c]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        if inputs.len() == 1 {
            return Ok(*first);
        }
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", &base, &[axis]));
        }
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            widths.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &w) in inputs.iter().zip(&widths) {
                let src = self.value(v).data();
                data.extend_from_slice(&src[o * w * inner..(o + 1) * w * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            outer,
            inner,
            widths,
        };
        Ok(self.record(shape, data, op, inputs))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::dim("slice_cols", &[m, n], &[start, len]));
        }
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&xv[r * n + start..r * n + start + len]);
        }
        Ok(self.record(vec![m, len], data, Op::SliceCols { input: x, start }, &[x]))
    }

    /// Selects rows `index[k]` of `x` into row `k` of the output.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix(x, "gather_rows")?;
        if index.is_empty() {
            return Err(Error::Contract("gather_rows with empty index".into()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::dim("gather_rows", &[m, n], &[bad]));
        }
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index {
            data.extend_from_slice(&xv[i * n..(i + 1) * n]);
        }
        let op = Op::GatherRows {
            input: x,
            index: index.to_vec(),
        };
        Ok(self.record(vec![index.len(), n], data, op, &[x]))
    }

    /// Sums row `k` of `x` into output row `segment[k]`; output has `segments` rows.
    pub fn segment_sum(&mut self, x: Var, segment: &[usize], segments: usize) -> Result<Var> {
        let (m, n) = self.matrix(x, "segment_sum")?;
        if segment.len() != m || segments == 0 {
            return Err(Error::dim("segment_sum", &[m, n], &[segment.len()]));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= segments) {
            return Err(Error::dim("segment_sum", &[segments], &[bad]));
        }
        let xv = self.value(x).data();
        let mut data = vec![0.0; segments * n];
        for (r, &s) in segment.iter().enumerate() {
            let dst = &mut data[s * n..(s + 1) * n];
            dst.iter_mut()
                .zip(&xv[r * n..(r + 1) * n])
                .for_each(|(d, &v)| *d += v);
        }
        let op = Op::SegmentSum {
            input: x,
            segment: segment.to_vec(),
        };
        Ok(self.record(vec![segments, n], data, op, &[x]))
    }

    /// Softmax computed independently within each group of entries sharing a
    /// segment id. Entries with `None` are outside every group and output 0.
    pub fn segment_softmax(&mut self, logits: Var, segment: &[Option<usize>]) -> Result<Var> {
        let value = self.value(logits);
        if value.numel() != segment.len() {
            return Err(Error::dim(
                "segment_softmax",
                value.shape(),
                &[segment.len()],
            ));
        }
        let shape = value.shape().to_vec();
        let data = softmax_groups(value.data(), segment);
        let op = Op::SegmentSoftmax {
            input: logits,
            segment: segment.to_vec(),
        };
        Ok(self.record(shape, data, op, &[logits]))
    }

    /// Softmax over the entries where `mask` is true; the rest are exactly 0.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract(
                "masked_softmax requires at least one unmasked entry".into(),
            ));
        }
        let segment: Vec<_> = mask.iter().map(|&m| m.then_some(0)).collect();
        self.segment_softmax(logits, &segment)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.record(vec![1], vec![s], Op::Sum(x), &[x])
    }

    /// Propagates adjoints from a scalar `loss` into every reachable leaf that
    /// requires a gradient. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut send = |v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    send(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let x = av[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            db[p * n..(p + 1) * n]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(d, &gv)| *d += x * gv);
                        }
                    }
                    send(*b, db);
                }
            }
            Op::Binary(op, a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let n = g.len();
                let pick = |v: &[f64], j: usize| if v.len() == 1 { v[0] } else { v[j] };
                // partial derivatives with respect to each operand at element j
                let (da, db): (Vec<f64>, Vec<f64>) = match op {
                    Binary::Add => (g.to_vec(), g.to_vec()),
                    Binary::Sub => (g.to_vec(), g.iter().map(|x| -x).collect()),
                    Binary::Mul => (
                        (0..n).map(|j| g[j] * pick(bv, j)).collect(),
                        (0..n).map(|j| g[j] * pick(av, j)).collect(),
                    ),
                };
                let reduce = |d: Vec<f64>, len: usize| {
                    if len == 1 && n != 1 {
                        vec![d.iter().sum()]
                    } else {
                        d
                    }
                };
                send(*a, reduce(da, av.len()));
                send(*b, reduce(db, bv.len()));
            }
            Op::AddRow(a, b) => {
                let n = self.value(*b).numel();
                send(*a, g.to_vec());
                if self.needs(*b) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, &x)| *d += x);
                    }
                    send(*b, db);
                }
            }
            Op::MulCol(a, c) => {
                let av = self.value(*a).data();
                let cv = self.value(*c).data();
                let n = av.len() / cv.len();
                if self.needs(*a) {
                    let da = g
                        .chunks(n)
                        .zip(cv)
                        .flat_map(|(row, &s)| row.iter().map(move |x| x * s))
                        .collect();
                    send(*a, da);
                }
                if self.needs(*c) {
                    let dc = g
                        .chunks(n)
                        .zip(av.chunks(n))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    send(*c, dc);
                }
            }
            Op::Unary(op, x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv.iter().zip(out))
                    .map(|(gv, (&xi, &yi))| gv * op.derivative(xi, yi))
                    .collect();
                send(*x, dx);
            }
            Op::Concat {
                inputs,
                outer,
                inner,
                widths,
            } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&v, &w) in inputs.iter().zip(widths) {
                    if self.needs(v) {
                        let mut d = Vec::with_capacity(outer * w * inner);
                        for o in 0..*outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g[base..base + w * inner]);
                        }
                        send(v, d);
                    }
                    offset += w;
                }
            }
            Op::SliceCols { input, start } => {
                let (m, n) = (self.shape(*input)[0], self.shape(*input)[1]);
                let len = g.len() / m;
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                send(*input, d);
            }
            Op::GatherRows { input, index } => {
                let (m, n) = (self.shape(*input)[0], self.shape(*input)[1]);
                let mut d = vec![0.0; m * n];
                for (k, &r) in index.iter().enumerate() {
                    d[r * n..(r + 1) * n]
                        .iter_mut()
                        .zip(&g[k * n..(k + 1) * n])
                        .for_each(|(a, &b)| *a += b);
                }
                send(*input, d);
            }
            Op::SegmentSum { input, segment } => {
                let n = self.shape(*input)[1];
                let mut d = Vec::with_capacity(segment.len() * n);
                for &s in segment {
                    d.extend_from_slice(&g[s * n..(s + 1) * n]);
                }
                send(*input, d);
            }
            Op::SegmentSoftmax { input, segment } => {
                let groups = segment.iter().flatten().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; groups];
                for ((s, &y), &gv) in segment.iter().zip(out).zip(g) {
                    if let Some(s) = s {
                        dot[*s] += y * gv;
                    }
                }
                let d = segment
                    .iter()
                    .zip(out)
                    .zip(g)
                    .map(|((s, &y), &gv)| s.map_or(0.0, |s| y * (gv - dot[s])))
                    .collect();
                send(*input, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                send(*x, vec![g[0]; n]);
            }
        }
    }
}

/// Stabilized per-group softmax on plain values.
pub fn softmax_groups(logits: &[f64], segment: &[Option<usize>]) -> Vec<f64> {
    let groups = segment.iter().flatten().max().map_or(0, |m| m + 1);
    let mut max = vec![f64::NEG_INFINITY; groups];
    for (&x, s) in logits.iter().zip(segment) {
        if let Some(s) = s {
            max[*s] = max[*s].max(x);
        }
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(segment)
        .map(|(&x, s)| s.map_or(0.0, |s| (x - max[s]).exp()))
        .collect();
    let mut total = vec![0.0; groups];
    for (&e, s) in out.iter().zip(segment) {
        if let Some(s) = s {
            total[*s] += e;
        }
    }
    for (o, s) in out.iter_mut().zip(segment) {
        if let Some(s) = s {
            *o /= total[*s];
        }
    }
    out
}
