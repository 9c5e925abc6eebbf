use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{gemm_into, log_softmax_rows, scatter_add_rows, softmax_rows};
use super::{ParamId, ParamSet, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    MaxAxis { x: Var, axis: usize, argmax: Vec<usize> },
    Softmax(Var),
    LogSoftmax(Var),
    GatherRows { x: Var, ids: Vec<usize> },
    Unfold { x: Var, width: usize },
    Pick { x: Var, cols: Vec<usize> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A reverse-mode computation tape.
///
/// Nodes are appended in evaluation order, so the tape is already
/// topologically sorted. Parameters enter the tape by value and receive
/// their gradients when [`Graph::backward`] is called with the owning
/// [`ParamSet`]. Gradients accumulate (`+=`); call
/// [`ParamSet::zero_grad`] between steps. Calling `backward` twice on the
/// same tape therefore doubles the parameter gradients.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// A detached input: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable input that is not a parameter.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.require_2d("matmul")?;
        let (k2, n) = bv.require_2d("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm_into(av, false, bv, false, out.data_mut(), T::zero());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a bias vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        let c = xv.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % c];
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::tanh);
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::exp);
        let rg = self.rg(x);
        self.push(out, Op::Exp(x), rg)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::ln);
        let rg = self.rg(x);
        self.push(out, Op::Log(x), rg)
    }

    /// Concatenates 2-D tensors along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat", &[], &[]))?;
        let (r0, c0) = self.value(first).require_2d("concat")?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            let (r, c) = pv.require_2d("concat")?;
            match axis {
                0 if c == c0 => rows += r,
                1 if r == r0 => cols += c,
                _ => return Err(shape_err("concat", self.value(first).shape(), pv.shape())),
            }
        }
        let shape = if axis == 0 { [rows, c0] } else { [r0, cols] };
        let mut data = Vec::with_capacity(shape[0] * shape[1]);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            for r in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(r));
                }
            }
        }
        let out = Tensor::from_vec(shape.to_vec(), data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `x[start..end]` along axis 0 or 1 of a 2-D tensor.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_2d("slice")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start >= end || end > extent {
            return Err(shape_err("slice", xv.shape(), &[axis, start, end]));
        }
        let out = if axis == 0 {
            Tensor::from_vec(vec![end - start, c], xv.data()[start * c..end * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                data.extend_from_slice(&xv.row(i)[start..end]);
            }
            Tensor::from_vec(vec![r, end - start], data)?
        };
        let rg = self.rg(x);
        Ok(self.push(out, Op::Slice { x, axis, start }, rg))
    }

    /// Maximum along an axis of a 2-D tensor. The reduced axis is kept with
    /// size 1. Gradients flow only to the (first) argmax.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_2d("max_axis")?;
        let (outer, inner, shape) = match axis {
            0 => (c, r, vec![1, c]),
            1 => (r, c, vec![r, 1]),
            _ => return Err(shape_err("max_axis", xv.shape(), &[axis])),
        };
        let mut values = Vec::with_capacity(outer);
        let mut argmax = Vec::with_capacity(outer);
        for o in 0..outer {
            let at = |i: usize| if axis == 0 { xv.at(i, o) } else { xv.at(o, i) };
            let mut best = 0;
            for i in 1..inner {
                if at(i) > at(best) {
                    best = i;
                }
            }
            values.push(at(best));
            argmax.push(best);
        }
        let out = Tensor::from_vec(shape, values)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::MaxAxis { x, axis, argmax }, rg))
    }

    /// Indices selected by the last [`Graph::max_axis`] node `v`.
    pub fn argmax(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::MaxAxis { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::Softmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let out = log_softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::LogSoftmax(x), rg)
    }

    /// Rows `ids` of `x`; the adjoint is a scatter-add.
    pub fn gather_rows(&mut self, x: Var, ids: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_2d("gather_rows")?;
        if ids.is_empty() {
            return Err(shape_err("gather_rows", xv.shape(), &[0]));
        }
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(shape_err("gather_rows", xv.shape(), &[id]));
            }
            data.extend_from_slice(xv.row(id));
        }
        let out = Tensor::from_vec(vec![ids.len(), c], data)?;
        let rg = self.rg(x);
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Sliding windows: row `p` of the `(n-w+1) × (w·d)` result is rows
    /// `p..p+w` of the `n × d` input laid end to end.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.require_2d("unfold")?;
        if width == 0 || width > n {
            return Err(shape_err("unfold", xv.shape(), &[width]));
        }
        let positions = n - width + 1;
        let mut data = Vec::with_capacity(positions * width * d);
        for p in 0..positions {
            data.extend_from_slice(&xv.data()[p * d..(p + width) * d]);
        }
        let out = Tensor::from_vec(vec![positions, width * d], data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Unfold { x, width }, rg))
    }

    /// `out[r] = x[r, cols[r]]`, shape `[rows, 1]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_2d("pick")?;
        if cols.len() != r {
            return Err(shape_err("pick", xv.shape(), &[cols.len()]));
        }
        let mut data = Vec::with_capacity(r);
        for (i, &j) in cols.iter().enumerate() {
            if j >= c {
                return Err(shape_err("pick", xv.shape(), &[j]));
            }
            data.push(xv.at(i, j));
        }
        let out = Tensor::from_vec(vec![r, 1], data)?;
        let rg = self.rg(x);
        Ok(self.push(
            out,
            Op::Pick {
                x,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.data().iter().copied().sum::<T>() / T::lit(xv.len() as f64);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Reverse sweep from a scalar `loss`. Node gradients are retained for
    /// [`Graph::grad`]; parameter gradients are added into `params`.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet<T>) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", self.value(loss).shape(), &[1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            if let Op::Param(id) = self.nodes[i].op {
                params.get_mut(id).grad.add_assign(&g);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |v: Var, delta: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut da = av.zeros_like();
                    gemm_into(g, false, bv, true, da.data_mut(), T::zero());
                    acc(*a, da);
                }
                if self.rg(*b) {
                    let mut db = bv.zeros_like();
                    gemm_into(av, true, g, false, db.data_mut(), T::zero());
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, elementwise(g, bv, |gv, bv| gv * bv));
                }
                if self.rg(*b) {
                    acc(*b, elementwise(g, av, |gv, av| gv * av));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                if self.rg(*b) {
                    let mut db = self.value(*b).zeros_like();
                    let c = g.cols();
                    for (k, &gv) in g.data().iter().enumerate() {
                        db.data_mut()[k % c] += gv;
                    }
                    acc(*b, db);
                }
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * *c)),
            Op::Sigmoid(x) => acc(*x, elementwise(g, y, |gv, yv| gv * yv * (T::one() - yv))),
            Op::Tanh(x) => acc(*x, elementwise(g, y, |gv, yv| gv * (T::one() - yv * yv))),
            Op::Exp(x) => acc(*x, elementwise(g, y, |gv, yv| gv * yv)),
            Op::Log(x) => acc(*x, elementwise(g, self.value(*x), |gv, xv| gv / xv)),
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let (r, c) = (pv.rows(), pv.cols());
                    if *axis == 0 {
                        if self.rg(p) {
                            let data = g.data()[offset * c..(offset + r) * c].to_vec();
                            acc(p, Tensor::from_vec(pv.shape().to_vec(), data)?);
                        }
                        offset += r;
                    } else {
                        if self.rg(p) {
                            let mut data = Vec::with_capacity(r * c);
                            for row in 0..r {
                                data.extend_from_slice(&g.row(row)[offset..offset + c]);
                            }
                            acc(p, Tensor::from_vec(pv.shape().to_vec(), data)?);
                        }
                        offset += c;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let mut dx = self.value(*x).zeros_like();
                let c = dx.cols();
                if *axis == 0 {
                    dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                } else {
                    let w = g.cols();
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                    }
                }
                acc(*x, dx);
            }
            Op::MaxAxis { x, axis, argmax } => {
                let mut dx = self.value(*x).zeros_like();
                let c = dx.cols();
                for (o, &best) in argmax.iter().enumerate() {
                    let idx = if *axis == 0 { best * c + o } else { o * c + best };
                    dx.data_mut()[idx] += g.data()[o];
                }
                acc(*x, dx);
            }
            Op::Softmax(x) => {
                let mut dx = g.clone();
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for (d, (&gv, &yv)) in dx.row_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::LogSoftmax(x) => {
                let mut dx = g.clone();
                for r in 0..g.rows() {
                    let total: T = g.row(r).iter().copied().sum();
                    let yr = y.row(r);
                    for (d, &yv) in dx.row_mut(r).iter_mut().zip(yr) {
                        *d -= yv.exp() * total;
                    }
                }
                acc(*x, dx);
            }
            Op::GatherRows { x, ids } => {
                let mut dx = self.value(*x).zeros_like();
                scatter_add_rows(&mut dx, ids, g)?;
                acc(*x, dx);
            }
            Op::Unfold { x, width } => {
                let mut dx = self.value(*x).zeros_like();
                let d = dx.cols();
                for p in 0..g.rows() {
                    let src = g.row(p);
                    let dst = &mut dx.data_mut()[p * d..(p + width) * d];
                    for (a, &b) in dst.iter_mut().zip(src) {
                        *a += b;
                    }
                }
                acc(*x, dx);
            }
            Op::Pick { x, cols } => {
                let mut dx = self.value(*x).zeros_like();
                let c = dx.cols();
                for (r, &j) in cols.iter().enumerate() {
                    dx.data_mut()[r * c + j] += g.data()[r];
                }
                acc(*x, dx);
            }
            Op::Sum(x) => {
                let gv = g.item();
                acc(*x, self.value(*x).map(|_| gv));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gv = g.item() / T::lit(xv.len() as f64);
                acc(*x, xv.map(|_| gv));
            }
        }
        Ok(())
    }
}

fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("same shape")
}
