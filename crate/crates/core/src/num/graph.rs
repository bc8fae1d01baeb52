//! Reverse-mode autodiff over a flat tape of tensor ops.
//!
//! A [`Graph`] is built per forward pass: parameters and constants enter as
//! leaves, ops compute eagerly, and [`Graph::backward`] walks the tape in
//! reverse filling gradients. Graphs are cheap and dropped after each step.

use crate::error::{Error, Result};
use crate::num::tensor::{matmul, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// x[m,n] + b[n] broadcast over rows.
    AddRowVec(Var, Var),
    /// Row i of x[m,n] scaled by s[i]; s is [m] or [m,1].
    ScaleRows(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    /// Row lookup into a [v,e] table; gradient scatter-adds.
    Gather(Var, Vec<usize>),
    MeanAxis(Var, usize),
    /// Row softmax; positions where mask is 0 get probability exactly 0.
    SoftmaxRows(Var, Option<Tensor<F>>),
    /// Mean cross-entropy of logits[n,v] against target ids; probs cached.
    CrossEntropy(Var, Vec<usize>, Tensor<F>),
    /// Elementwise multiply by a constant mask (dropout / DropConnect).
    MulMask(Var, Tensor<F>),
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    needs_grad: bool,
    op: Op<F>,
}

pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<F>, needs_grad: bool, op: Op<F>) -> Var {
        self.nodes.push(Node { value, grad: None, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; gradients do not flow into it.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, false, Op::Leaf)
    }

    /// Trainable leaf; `grad` is available after `backward`.
    pub fn param(&mut self, t: Tensor<F>) -> Var {
        self.push(t, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, true)
    }

    /// aᵀ · b
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, true, false)
    }

    fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let v = matmul(self.value(a), self.value(b), ta, tb)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, ng, Op::MatMul { a, b, ta, tb }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        out.add_assign(vb)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, ng, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("sub", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::from_vec(va.shape(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, ng, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mul", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_vec(va.shape(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, ng, Op::Mul(a, b)))
    }

    pub fn add_row_vec(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if self.value(b).len() != n {
            return Err(Error::shape("add_row_vec", self.value(x).shape(), self.value(b).shape()));
        }
        let bd = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(bd.iter()) {
                *o = *o + bv;
            }
        }
        let ng = self.needs(&[x, b]);
        Ok(self.push(out, ng, Op::AddRowVec(x, b)))
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if self.value(s).len() != m {
            return Err(Error::shape("scale_rows", self.value(x).shape(), self.value(s).shape()));
        }
        let sd = self.value(s).data().to_vec();
        let mut out = self.value(x).clone();
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            for o in row.iter_mut() {
                *o = *o * sd[i];
            }
        }
        let ng = self.needs(&[x, s]);
        Ok(self.push(out, ng, Op::ScaleRows(x, s)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let ng = self.needs(&[x]);
        self.push(out, ng, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let one = F::one();
        let out = self.value(x).map(|v| one / (one + (-v).exp()));
        let ng = self.needs(&[x]);
        self.push(out, ng, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > F::zero() { v } else { F::zero() });
        let ng = self.needs(&[x]);
        self.push(out, ng, Op::Relu(x))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_rows: no inputs"));
        }
        let (_, n) = self.value(parts[0]).dims2();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pm, pn) = self.value(p).dims2();
            if pn != n {
                return Err(Error::shape("concat_rows", self.value(parts[0]).shape(), self.value(p).shape()));
            }
            rows += pm;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(&[rows, n], data)?;
        let ng = self.needs(parts);
        Ok(self.push(out, ng, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols: no inputs"));
        }
        let (m, _) = self.value(parts[0]).dims2();
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = self.value(p).dims2();
            if pm != m {
                return Err(Error::shape("concat_cols", self.value(parts[0]).shape(), self.value(p).shape()));
            }
            widths.push(pn);
            total += pn;
        }
        let mut data = vec![F::zero(); m * total];
        for i in 0..m {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(widths.iter()) {
                let row = self.value(p).row(i);
                data[i * total + off..i * total + off + w].copy_from_slice(row);
                off += w;
            }
        }
        let out = Tensor::from_vec(&[m, total], data)?;
        let ng = self.needs(parts);
        Ok(self.push(out, ng, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if start >= end || end > m {
            return Err(Error::invalid(format!("slice_rows {start}..{end} of {m} rows")));
        }
        let data = self.value(x).data()[start * n..end * n].to_vec();
        let out = Tensor::from_vec(&[end - start, n], data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, ng, Op::SliceRows(x, start, end)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if start >= end || end > n {
            return Err(Error::invalid(format!("slice_cols {start}..{end} of {n} cols")));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.value(x).data()[i * n + start..i * n + end]);
        }
        let out = Tensor::from_vec(&[m, w], data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, ng, Op::SliceCols(x, start, end)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transposed();
        let ng = self.needs(&[x]);
        self.push(out, ng, Op::Transpose(x))
    }

    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (v, e) = self.value(table).dims2();
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::invalid(format!("gather: index {bad} out of {v} rows")));
        }
        let mut data = Vec::with_capacity(indices.len() * e);
        for &i in indices {
            data.extend_from_slice(self.value(table).row(i));
        }
        let out = Tensor::from_vec(&[indices.len(), e], data)?;
        let ng = self.needs(&[table]);
        Ok(self.push(out, ng, Op::Gather(table, indices.to_vec())))
    }

    /// Mean over `axis` of a rank-2 tensor: axis 0 yields column means `[n]`,
    /// axis 1 yields row means `[m]`.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        let xd = self.value(x).data();
        let out = match axis {
            0 => {
                let inv = F::of_f64(1.0 / m as f64);
                let mut acc = vec![F::zero(); n];
                for i in 0..m {
                    for (a, &v) in acc.iter_mut().zip(&xd[i * n..(i + 1) * n]) {
                        *a = *a + v;
                    }
                }
                Tensor::vector(acc.into_iter().map(|v| v * inv).collect())
            }
            1 => {
                let inv = F::of_f64(1.0 / n as f64);
                let acc: Vec<F> = (0..m)
                    .map(|i| xd[i * n..(i + 1) * n].iter().copied().sum::<F>() * inv)
                    .collect();
                Tensor::vector(acc)
            }
            _ => return Err(Error::invalid(format!("mean_axis: axis {axis}"))),
        };
        let ng = self.needs(&[x]);
        Ok(self.push(out, ng, Op::MeanAxis(x, axis)))
    }

    /// Row softmax. With a mask (same shape, entries 0 or 1), masked
    /// positions are excluded from the normalization and get exactly 0.
    /// Errors if any row is fully masked.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<Tensor<F>>) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if let Some(mk) = &mask {
            if mk.shape() != self.value(x).shape() {
                return Err(Error::shape("softmax_rows mask", self.value(x).shape(), mk.shape()));
            }
        }
        let xd = self.value(x).data();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let keep =
                |j: usize| mask.as_ref().map_or(true, |mk| mk.data()[i * n + j] > F::zero());
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if keep(j) && v > max {
                    max = v;
                }
            }
            if !max.is_finite() {
                return Err(Error::invalid(format!("softmax_rows: row {i} fully masked")));
            }
            let mut denom = F::zero();
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    let e = (v - max).exp();
                    out[i * n + j] = e;
                    denom = denom + e;
                }
            }
            for j in 0..n {
                if keep(j) {
                    out[i * n + j] = out[i * n + j] / denom;
                }
            }
        }
        let out = Tensor::from_vec(&[m, n], out)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, ng, Op::SoftmaxRows(x, mask)))
    }

    /// Mean cross-entropy of `logits` rows against `targets` ids.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = self.value(logits).dims2();
        if targets.len() != m {
            return Err(Error::invalid(format!(
                "cross_entropy: {m} logit rows vs {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::invalid(format!("cross_entropy: target {bad} out of {n} classes")));
        }
        let xd = self.value(logits).data();
        let mut probs = vec![F::zero(); m * n];
        let mut loss = F::zero();
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut denom = F::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * n + j] = e;
                denom = denom + e;
            }
            for j in 0..n {
                probs[i * n + j] = probs[i * n + j] / denom;
            }
            // log-sum-exp form keeps the per-row loss stable
            loss = loss - (row[targets[i]] - max - denom.ln());
        }
        let mean = loss * F::of_f64(1.0 / m as f64);
        let probs = Tensor::from_vec(&[m, n], probs)?;
        let ng = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(mean), ng, Op::CrossEntropy(logits, targets.to_vec(), probs)))
    }

    /// Elementwise product with a fixed mask tensor.
    pub fn mul_mask(&mut self, x: Var, mask: Tensor<F>) -> Result<Var> {
        if mask.shape() != self.value(x).shape() {
            return Err(Error::shape("mul_mask", self.value(x).shape(), mask.shape()));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&a, &b)| a * b)
            .collect();
        let out = Tensor::from_vec(mask.shape(), data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, ng, Op::MulMask(x, mask)))
    }

    fn accumulate(&mut self, v: Var, contrib: Tensor<F>) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => g.add_assign(&contrib).expect("gradient shape"),
            None => node.grad = Some(contrib),
        }
    }

    /// Reverse pass from a scalar root. Fills `grad` on every node on the
    /// gradient path; leaves created with `param` can then be read out.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::invalid(format!(
                "backward: root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.nodes[root.0].grad = Some(Tensor::scalar(F::one()));
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_none() {
                continue;
            }
            let g = match self.nodes[idx].op {
                Op::Leaf => continue,
                _ => self.nodes[idx].grad.clone().expect("grad present"),
            };
            let contribs = self.node_backward(idx, &g)?;
            for (v, t) in contribs {
                if self.nodes[v.0].needs_grad {
                    self.accumulate(v, t);
                }
            }
        }
        Ok(())
    }

    fn node_backward(&self, idx: usize, g: &Tensor<F>) -> Result<Vec<(Var, Tensor<F>)>> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut res = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                match (ta, tb) {
                    (false, false) => {
                        res.push((*a, matmul(g, vb, false, true)?));
                        res.push((*b, matmul(va, g, true, false)?));
                    }
                    (false, true) => {
                        res.push((*a, matmul(g, vb, false, false)?));
                        res.push((*b, matmul(g, va, true, false)?));
                    }
                    (true, false) => {
                        res.push((*a, matmul(vb, g, false, true)?));
                        res.push((*b, matmul(va, g, false, false)?));
                    }
                    (true, true) => unreachable!("rejected at construction"),
                }
            }
            Op::Add(a, b) => {
                res.push((*a, g.clone()));
                res.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                res.push((*a, g.clone()));
                res.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect(),
                )?;
                let db = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(va.data()).map(|(&x, &y)| x * y).collect(),
                )?;
                res.push((*a, da));
                res.push((*b, db));
            }
            Op::AddRowVec(x, b) => {
                let (m, n) = g.dims2();
                res.push((*x, g.clone()));
                let mut db = vec![F::zero(); n];
                for i in 0..m {
                    for (d, &gv) in db.iter_mut().zip(g.row(i)) {
                        *d = *d + gv;
                    }
                }
                let shape = self.value(*b).shape().to_vec();
                res.push((*b, Tensor::from_vec(&shape, db)?));
            }
            Op::ScaleRows(x, s) => {
                let (m, n) = g.dims2();
                let sv = self.value(*s).data();
                let xv = self.value(*x).data();
                let mut dx = vec![F::zero(); m * n];
                let mut ds = vec![F::zero(); m];
                for i in 0..m {
                    let grow = g.row(i);
                    let xrow = &xv[i * n..(i + 1) * n];
                    let mut dot = F::zero();
                    for j in 0..n {
                        dx[i * n + j] = grow[j] * sv[i];
                        dot = dot + grow[j] * xrow[j];
                    }
                    ds[i] = dot;
                }
                res.push((*x, Tensor::from_vec(self.value(*x).shape(), dx)?));
                let sshape = self.value(*s).shape().to_vec();
                res.push((*s, Tensor::from_vec(&sshape, ds)?));
            }
            Op::Tanh(x) => {
                let one = F::one();
                let dx = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gv, &y)| gv * (one - y * y))
                    .collect();
                res.push((*x, Tensor::from_vec(g.shape(), dx)?));
            }
            Op::Sigmoid(x) => {
                let one = F::one();
                let dx = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gv, &y)| gv * y * (one - y))
                    .collect();
                res.push((*x, Tensor::from_vec(g.shape(), dx)?));
            }
            Op::Relu(x) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&gv, &xv)| if xv > F::zero() { gv } else { F::zero() })
                    .collect();
                res.push((*x, Tensor::from_vec(g.shape(), dx)?));
            }
            Op::ConcatRows(parts) => {
                let (_, n) = g.dims2();
                let mut start = 0;
                for &p in parts {
                    let (pm, _) = self.value(p).dims2();
                    let dp = g.data()[start * n..(start + pm) * n].to_vec();
                    res.push((p, Tensor::from_vec(self.value(p).shape(), dp)?));
                    start += pm;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = g.dims2();
                let mut off = 0;
                for &p in parts {
                    let (_, pn) = self.value(p).dims2();
                    let mut dp = Vec::with_capacity(m * pn);
                    for i in 0..m {
                        dp.extend_from_slice(&g.data()[i * n + off..i * n + off + pn]);
                    }
                    res.push((p, Tensor::from_vec(self.value(p).shape(), dp)?));
                    off += pn;
                }
            }
            Op::SliceRows(x, start, _end) => {
                let (_, n) = self.value(*x).dims2();
                let mut dx = Tensor::zeros(self.value(*x).shape());
                let (gm, _) = g.dims2();
                dx.data_mut()[start * n..(start + gm) * n].copy_from_slice(g.data());
                res.push((*x, dx));
            }
            Op::SliceCols(x, start, end) => {
                let (m, n) = self.value(*x).dims2();
                let w = end - start;
                let mut dx = Tensor::zeros(self.value(*x).shape());
                for i in 0..m {
                    dx.data_mut()[i * n + start..i * n + end].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                res.push((*x, dx));
            }
            Op::Transpose(x) => {
                res.push((*x, g.transposed()));
            }
            Op::Gather(table, indices) => {
                let (_, e) = self.value(*table).dims2();
                let mut dt = Tensor::zeros(self.value(*table).shape());
                for (p, &i) in indices.iter().enumerate() {
                    let grow = &g.data()[p * e..(p + 1) * e];
                    let drow = &mut dt.data_mut()[i * e..(i + 1) * e];
                    for (d, &gv) in drow.iter_mut().zip(grow) {
                        *d = *d + gv;
                    }
                }
                res.push((*table, dt));
            }
            Op::MeanAxis(x, axis) => {
                let (m, n) = self.value(*x).dims2();
                let mut dx = vec![F::zero(); m * n];
                match axis {
                    0 => {
                        let inv = F::of_f64(1.0 / m as f64);
                        for i in 0..m {
                            for j in 0..n {
                                dx[i * n + j] = g.data()[j] * inv;
                            }
                        }
                    }
                    1 => {
                        let inv = F::of_f64(1.0 / n as f64);
                        for i in 0..m {
                            for j in 0..n {
                                dx[i * n + j] = g.data()[i] * inv;
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                res.push((*x, Tensor::from_vec(self.value(*x).shape(), dx)?));
            }
            Op::SoftmaxRows(x, _mask) => {
                // Masked entries have probability 0, so they drop out here.
                let (m, n) = out.dims2();
                let s = out.data();
                let mut dx = vec![F::zero(); m * n];
                for i in 0..m {
                    let grow = g.row(i);
                    let srow = &s[i * n..(i + 1) * n];
                    let mut dot = F::zero();
                    for j in 0..n {
                        dot = dot + srow[j] * grow[j];
                    }
                    for j in 0..n {
                        dx[i * n + j] = srow[j] * (grow[j] - dot);
                    }
                }
                res.push((*x, Tensor::from_vec(self.value(*x).shape(), dx)?));
            }
            Op::CrossEntropy(logits, targets, probs) => {
                let (m, n) = probs.dims2();
                let scale = g.item() * F::of_f64(1.0 / m as f64);
                let mut dl = probs.data().to_vec();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * n + t] = dl[i * n + t] - F::one();
                }
                for v in dl.iter_mut() {
                    *v = *v * scale;
                }
                res.push((*logits, Tensor::from_vec(self.value(*logits).shape(), dl)?));
            }
            Op::MulMask(x, mask) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(mask.data())
                    .map(|(&gv, &mv)| gv * mv)
                    .collect();
                res.push((*x, Tensor::from_vec(g.shape(), dx)?));
            }
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 4], &[0.7, 0.7, 0.7, 0.7]));
        let s = g.softmax_rows(x, None).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_under_mask() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let mask = t(&[2, 3], &[1.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let s = g.softmax_rows(x, Some(mask)).unwrap();
        let sd = g.value(s).data();
        assert_eq!(sd[1], 0.0);
        assert!((sd[0] + sd[2] - 1.0).abs() < 1e-12);
        assert!((sd[3] + sd[4] + sd[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_fully_masked_row_errors() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let mask = t(&[1, 2], &[0.0, 0.0]);
        assert!(g.softmax_rows(x, Some(mask)).is_err());
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[3, 10]));
        let l = g.cross_entropy(x, &[1, 5, 9]).unwrap();
        assert!((g.value(l).item() - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_axis0_of_rows() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 2], &[1.0, 3.0, 3.0, 5.0]));
        let m = g.mean_axis(x, 0).unwrap();
        assert_eq!(g.value(m).data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_through_matmul_and_ce() {
        let mut g = Graph::new();
        let w = g.param(t(&[2, 3], &[0.1, -0.2, 0.3, 0.0, 0.5, -0.1]));
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let logits = g.matmul(x, w).unwrap();
        let loss = g.cross_entropy(logits, &[2]).unwrap();
        g.backward(loss).unwrap();
        let gw = g.grad(w).unwrap();
        assert_eq!(gw.shape(), &[2, 3]);
        assert!(gw.is_all_finite());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 2], &[1.0, 2.0]));
        let y = g.tanh(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn constant_subtrees_get_no_grad() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = g.constant(t(&[1, 2], &[3.0, 4.0]));
        let c = g.mul(a, b).unwrap();
        let d = g.mean_axis(c, 1).unwrap();
        assert!(g.backward(d).is_ok());
        assert!(g.grad(a).is_none());
    }
}
