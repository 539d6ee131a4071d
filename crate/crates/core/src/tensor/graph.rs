use std::collections::HashMap;

use super::{matmul_acc, ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Softmax {
        x: NodeId,
        axis: usize,
    },
    MaskedSoftmaxRows(NodeId),
    Transpose(NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    MeanPoolMasked {
        x: NodeId,
        mask: Vec<bool>,
        segment: usize,
    },
    MeanRows(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Slice {
        x: NodeId,
        row0: usize,
        col0: usize,
    },
    Reshape(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
    BinaryCrossEntropy {
        p: NodeId,
        targets: Vec<T>,
    },
    BceWithLogits {
        logits: NodeId,
        targets: Vec<T>,
    },
    L2Squared(NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A recorded computation. Nodes are appended in evaluation order, so the
/// reverse of insertion order is a valid backward schedule.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    frozen_prefixes: Vec<String>,
    bound: HashMap<ParamId, NodeId>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            frozen_prefixes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    /// Parameters whose name starts with `prefix` enter this graph as
    /// constants and receive no gradient.
    pub fn freeze(mut self, prefix: impl Into<String>) -> Self {
        self.frozen_prefixes.push(prefix.into());
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> T {
        self.value(id).item()
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by node {} ({})",
                self.nodes.len(),
                op_name(&op)
            )));
        }
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Leaf => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Leaf, &[])
    }

    /// Binds a parameter, once per graph. Frozen parameters become constants.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<NodeId> {
        if let Some(&n) = self.bound.get(&id) {
            return Ok(n);
        }
        let p = store.get(id);
        let frozen = self.frozen_prefixes.iter().any(|f| p.name.starts_with(f.as_str()));
        let op = if frozen { Op::Leaf } else { Op::Param(id) };
        let n = self.push(p.value.clone(), op, &[])?;
        self.bound.insert(id, n);
        Ok(n)
    }

    pub fn param_by_name(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId> {
        let id = store
            .id(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        self.param(store, id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.val(a).expect_rank2("matmul")?;
        let (k2, n) = self.val(b).expect_rank2("matmul")?;
        if k != k2 {
            return shape_err(format!("matmul of {m}x{k} by {k2}x{n}"));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.val(a).data(), self.val(b).data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b])
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.val(a).shape() != self.val(b).shape() {
            return shape_err(format!(
                "{what} of shapes {:?} and {:?}",
                self.val(a).shape(),
                self.val(b).shape()
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<NodeId> {
        let va = self.val(a);
        let vb = self.val(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a 1×n row to every row of an m×n matrix.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("add_row")?;
        if self.val(row).shape() != [1, n] {
            return shape_err(format!("add_row of {m}x{n} with {:?}", self.val(row).shape()));
        }
        let r = self.val(row).data();
        let data = self
            .val(x)
            .data()
            .chunks(n)
            .flat_map(|xr| xr.iter().zip(r).map(|(&a, &b)| a + b))
            .collect();
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(x, row), &[x, row])
    }

    /// x·W + b.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> Result<NodeId> {
        let t = self.val(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s), &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.val(x).map(|v| v.max(T::zero()));
        self.push(t, Op::Relu(x), &[x])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let k = T::c(GELU_K);
        let c = T::c(GELU_C);
        let half = T::c(0.5);
        let t = self
            .val(x)
            .map(|v| half * v * (T::one() + (k * (v + c * v * v * v)).tanh()));
        self.push(t, Op::Gelu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.val(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    /// Row-wise layer normalization with a learned 1×n gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("layer_norm")?;
        if self.val(gain).shape() != [1, n] || self.val(bias).shape() != [1, n] {
            return shape_err(format!("layer_norm gain/bias must be 1x{n}"));
        }
        let eps = T::c(eps);
        let nn = T::c(n as f64);
        let xv = self.val(x).data();
        let g = self.val(gain).data();
        let b = self.val(bias).data();
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for row in xv.chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Softmax along `axis` (0 = down columns, 1 = along rows).
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("softmax")?;
        if axis > 1 {
            return shape_err(format!("softmax axis {axis} on a matrix"));
        }
        let v = self.val(x).data();
        let mut out = vec![T::zero(); m * n];
        let (outer, inner, stride_o, stride_i) = if axis == 1 { (m, n, n, 1) } else { (n, m, 1, n) };
        for o in 0..outer {
            let idx = |i: usize| o * stride_o + i * stride_i;
            let mx = (0..inner).map(|i| v[idx(i)]).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for i in 0..inner {
                let e = (v[idx(i)] - mx).exp();
                out[idx(i)] = e;
                z = z + e;
            }
            for i in 0..inner {
                out[idx(i)] = out[idx(i)] / z;
            }
        }
        self.push(Tensor::matrix(m, n, out)?, Op::Softmax { x, axis }, &[x])
    }

    /// Row softmax over the columns with `keep[j]`; other columns get
    /// probability exactly zero. A row with no kept column is all zeros.
    pub fn masked_softmax_rows(&mut self, x: NodeId, keep: &[bool]) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("masked_softmax_rows")?;
        if keep.len() != n {
            return shape_err(format!("softmax mask of length {} for {n} columns", keep.len()));
        }
        let v = self.val(x).data();
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let row = &v[r * n..(r + 1) * n];
            let o = &mut out[r * n..(r + 1) * n];
            let mx = row
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&a, _)| a)
                .fold(T::neg_infinity(), T::max);
            if mx == T::neg_infinity() {
                continue;
            }
            let mut z = T::zero();
            for j in 0..n {
                if keep[j] {
                    let e = (row[j] - mx).exp();
                    o[j] = e;
                    z = z + e;
                }
            }
            for v in o.iter_mut() {
                *v = *v / z;
            }
        }
        self.push(Tensor::matrix(m, n, out)?, Op::MaskedSoftmaxRows(x), &[x])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("transpose")?;
        let v = self.val(x).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        self.push(Tensor::matrix(n, m, out)?, Op::Transpose(x), &[x])
    }

    /// Rows `ids` of a V×d table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (v, d) = self.val(table).expect_rank2("embedding")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return shape_err(format!("embedding id {bad} out of range for {v} rows"));
        }
        let tv = self.val(table).data();
        let data = ids
            .iter()
            .flat_map(|&i| tv[i * d..(i + 1) * d].iter().copied())
            .collect();
        self.push(
            Tensor::matrix(ids.len(), d, data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Mean of the masked rows within each consecutive block of `segment`
    /// rows: (B·segment)×d → B×d. A block with no masked row yields zeros.
    pub fn mean_pool_masked(&mut self, x: NodeId, mask: &[bool], segment: usize) -> Result<NodeId> {
        let (rows, d) = self.val(x).expect_rank2("mean_pool_masked")?;
        if segment == 0 || rows % segment != 0 || mask.len() != rows {
            return shape_err(format!(
                "mean_pool_masked: {rows} rows, segment {segment}, mask {}",
                mask.len()
            ));
        }
        let b = rows / segment;
        let v = self.val(x).data();
        let mut out = vec![T::zero(); b * d];
        for s in 0..b {
            let o = &mut out[s * d..(s + 1) * d];
            let mut count = 0usize;
            for r in s * segment..(s + 1) * segment {
                if mask[r] {
                    count += 1;
                    for (oj, &xj) in o.iter_mut().zip(&v[r * d..(r + 1) * d]) {
                        *oj = *oj + xj;
                    }
                }
            }
            if count > 0 {
                let c = T::c(count as f64);
                o.iter_mut().for_each(|x| *x = *x / c);
            }
        }
        self.push(
            Tensor::matrix(b, d, out)?,
            Op::MeanPoolMasked {
                x,
                mask: mask.to_vec(),
                segment,
            },
            &[x],
        )
    }

    /// Column means: m×n → 1×n.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("mean_rows")?;
        if m == 0 {
            return shape_err("mean_rows of an empty matrix".into());
        }
        let v = self.val(x).data();
        let mut out = vec![T::zero(); n];
        for row in v.chunks(n) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a;
            }
        }
        let mm = T::c(m as f64);
        out.iter_mut().for_each(|o| *o = *o / mm);
        self.push(Tensor::matrix(1, n, out)?, Op::MeanRows(x), &[x])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of nothing".into());
        };
        let (_, n) = self.val(first).expect_rank2("concat_rows")?;
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (pm, pn) = self.val(p).expect_rank2("concat_rows")?;
            if pn != n {
                return shape_err(format!("concat_rows of widths {n} and {pn}"));
            }
            m += pm;
            data.extend_from_slice(self.val(p).data());
        }
        self.push(Tensor::matrix(m, n, data)?, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of nothing".into());
        };
        let (m, _) = self.val(first).expect_rank2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.val(p).expect_rank2("concat_cols")?;
            if pm != m {
                return shape_err(format!("concat_cols of heights {m} and {pm}"));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.val(p).row(r));
            }
        }
        self.push(Tensor::matrix(m, n, data)?, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// The `rows`×`cols` block starting at (`row0`, `col0`).
    pub fn slice(&mut self, x: NodeId, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<NodeId> {
        let (m, n) = self.val(x).expect_rank2("slice")?;
        if row0 + rows > m || col0 + cols > n {
            return shape_err(format!("slice [{row0}+{rows}, {col0}+{cols}] of {m}x{n}"));
        }
        let v = self.val(x).data();
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&v[r * n + col0..r * n + col0 + cols]);
        }
        self.push(Tensor::matrix(rows, cols, data)?, Op::Slice { x, row0, col0 }, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.val(x).clone().reshape(shape.to_vec())?;
        self.push(t, Op::Reshape(x), &[x])
    }

    /// Mean token cross-entropy over rows with `mask[i]`; zero when no row
    /// is masked in.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        let (m, c) = self.val(logits).expect_rank2("cross_entropy")?;
        if targets.len() != m || mask.len() != m {
            return shape_err(format!(
                "cross_entropy: {m} rows, {} targets, {} mask entries",
                targets.len(),
                mask.len()
            ));
        }
        if let Some(&t) = targets
            .iter()
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|(t, _)| t)
            .find(|&&t| t >= c)
        {
            return shape_err(format!("target class {t} out of range for {c} classes"));
        }
        let v = self.val(logits).data();
        let mut probs = vec![T::zero(); m * c];
        let mut total = T::zero();
        let mut count = 0usize;
        for r in 0..m {
            if !mask[r] {
                continue;
            }
            let row = &v[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z = row.iter().map(|&a| (a - mx).exp()).sum::<T>();
            let lz = z.ln() + mx;
            for j in 0..c {
                probs[r * c + j] = (row[j] - lz).exp();
            }
            total = total + (lz - row[targets[r]]);
            count += 1;
        }
        let loss = if count > 0 {
            total / T::c(count as f64)
        } else {
            T::zero()
        };
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            &[logits],
        )
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    pub fn binary_cross_entropy(&mut self, p: NodeId, targets: &[T]) -> Result<NodeId> {
        let pv = self.val(p);
        if pv.numel() != targets.len() || targets.is_empty() {
            return shape_err(format!("bce: {} probabilities, {} targets", pv.numel(), targets.len()));
        }
        let n = T::c(targets.len() as f64);
        let total = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&q, &t)| -(t * q.ln() + (T::one() - t) * (T::one() - q).ln()))
            .sum::<T>();
        self.push(
            Tensor::scalar(total / n),
            Op::BinaryCrossEntropy {
                p,
                targets: targets.to_vec(),
            },
            &[p],
        )
    }

    /// Mean binary cross-entropy of sigmoid(logits) against targets,
    /// computed from the logits for stability.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &[T]) -> Result<NodeId> {
        let lv = self.val(logits);
        if lv.numel() != targets.len() || targets.is_empty() {
            return shape_err(format!("bce: {} logits, {} targets", lv.numel(), targets.len()));
        }
        let n = T::c(targets.len() as f64);
        let total = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum::<T>();
        self.push(
            Tensor::scalar(total / n),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    /// Sum of squares.
    pub fn l2_squared(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.val(x).data().iter().map(|&v| v * v).sum::<T>();
        self.push(Tensor::scalar(s), Op::L2Squared(x), &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.val(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.val(x);
        if v.numel() == 0 {
            return shape_err("mean of an empty tensor".into());
        }
        let s = v.data().iter().copied().sum::<T>() / T::c(v.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Reverse pass from a scalar node. Gradients are accumulated into the
    /// `grad` of every non-frozen parameter reached.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        if self.val(loss).numel() != 1 {
            return shape_err(format!("backward from non-scalar shape {:?}", self.val(loss).shape()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads, store)?;
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>], store: &mut ParamStore<T>) -> Result<()> {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        // Lazily zero-initialized gradient buffer of an input node, or None
        // when that input needs no gradient.
        macro_rules! buf {
            ($id:expr) => {{
                let id: NodeId = $id;
                if nodes[id.0].needs_grad {
                    Some(grads[id.0].get_or_insert_with(|| vec![T::zero(); nodes[id.0].value.numel()]))
                } else {
                    None
                }
            }};
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Param(pid) => {
                let p = store.get_mut(*pid);
                for (a, &b) in p.grad.data_mut().iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let n = nodes[b.0].value.cols();
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if let Some(da) = buf!(*a) {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let mut s = T::zero();
                            for (&x, &y) in grow.iter().zip(brow) {
                                s = s + x * y;
                            }
                            da[r * k + p] = da[r * k + p] + s;
                        }
                    }
                }
                if let Some(db) = buf!(*b) {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            if a_rp == T::zero() {
                                continue;
                            }
                            let dbrow = &mut db[p * n..(p + 1) * n];
                            for (d, &x) in dbrow.iter_mut().zip(grow) {
                                *d = *d + a_rp * x;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if let Some(d) = buf!(id) {
                        for (x, &y) in d.iter_mut().zip(g) {
                            *x = *x + y;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = buf!(*a) {
                    for (x, &y) in d.iter_mut().zip(g) {
                        *x = *x + y;
                    }
                }
                if let Some(d) = buf!(*b) {
                    for (x, &y) in d.iter_mut().zip(g) {
                        *x = *x - y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if let Some(d) = buf!(*a) {
                    for ((x, &gy), &o) in d.iter_mut().zip(g).zip(bv) {
                        *x = *x + gy * o;
                    }
                }
                if let Some(d) = buf!(*b) {
                    for ((x, &gy), &o) in d.iter_mut().zip(g).zip(av) {
                        *x = *x + gy * o;
                    }
                }
            }
            Op::AddRow(x, row) => {
                let n = out.cols();
                if let Some(d) = buf!(*x) {
                    for (a, &b) in d.iter_mut().zip(g) {
                        *a = *a + b;
                    }
                }
                if let Some(d) = buf!(*row) {
                    for gr in g.chunks(n) {
                        for (a, &b) in d.iter_mut().zip(gr) {
                            *a = *a + b;
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(d) = buf!(*x) {
                    for (a, &b) in d.iter_mut().zip(g) {
                        *a = *a + b * *s;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(d) = buf!(*x) {
                    for ((a, &b), &v) in d.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *a = *a + b;
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let xv = nodes[x.0].value.data();
                let k = T::c(GELU_K);
                let c = T::c(GELU_C);
                let half = T::c(0.5);
                let three = T::c(3.0);
                if let Some(d) = buf!(*x) {
                    for ((a, &b), &v) in d.iter_mut().zip(g).zip(xv) {
                        let u = k * (v + c * v * v * v);
                        let t = u.tanh();
                        let du = k * (T::one() + three * c * v * v);
                        let deriv = half * (T::one() + t) + half * v * (T::one() - t * t) * du;
                        *a = *a + b * deriv;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let yv = out.data();
                if let Some(d) = buf!(*x) {
                    for ((a, &b), &y) in d.iter_mut().zip(g).zip(yv) {
                        *a = *a + b * y * (T::one() - y);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = out.cols();
                let gv = nodes[gain.0].value.data();
                let nn = T::c(n as f64);
                if let Some(d) = buf!(*x) {
                    for (r, gr) in g.chunks(n).enumerate() {
                        let xh = &xhat[r * n..(r + 1) * n];
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..n {
                            let dxh = gr[j] * gv[j];
                            s1 = s1 + dxh;
                            s2 = s2 + dxh * xh[j];
                        }
                        let inv = inv_std[r];
                        for j in 0..n {
                            let dxh = gr[j] * gv[j];
                            d[r * n + j] = d[r * n + j] + inv / nn * (nn * dxh - s1 - xh[j] * s2);
                        }
                    }
                }
                if let Some(d) = buf!(*gain) {
                    for (r, gr) in g.chunks(n).enumerate() {
                        for j in 0..n {
                            d[j] = d[j] + gr[j] * xhat[r * n + j];
                        }
                    }
                }
                if let Some(d) = buf!(*bias) {
                    for gr in g.chunks(n) {
                        for j in 0..n {
                            d[j] = d[j] + gr[j];
                        }
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (m, n) = (out.rows(), out.cols());
                let y = out.data();
                if let Some(d) = buf!(*x) {
                    let (outer, inner, so, si) = if *axis == 1 { (m, n, n, 1) } else { (n, m, 1, n) };
                    for o in 0..outer {
                        let idx = |i: usize| o * so + i * si;
                        let dot = (0..inner).map(|i| g[idx(i)] * y[idx(i)]).sum::<T>();
                        for i in 0..inner {
                            d[idx(i)] = d[idx(i)] + y[idx(i)] * (g[idx(i)] - dot);
                        }
                    }
                }
            }
            Op::MaskedSoftmaxRows(x) => {
                let n = out.cols();
                let y = out.data();
                if let Some(d) = buf!(*x) {
                    for (r, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let dot = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>();
                        for j in 0..n {
                            d[r * n + j] = d[r * n + j] + yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (nodes[x.0].value.rows(), nodes[x.0].value.cols());
                if let Some(d) = buf!(*x) {
                    for i in 0..m {
                        for j in 0..n {
                            d[i * n + j] = d[i * n + j] + g[j * m + i];
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let dm = out.cols();
                if let Some(d) = buf!(*table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..dm {
                            d[id * dm + j] = d[id * dm + j] + g[r * dm + j];
                        }
                    }
                }
            }
            Op::MeanPoolMasked { x, mask, segment } => {
                let dm = out.cols();
                if let Some(d) = buf!(*x) {
                    for (s, gs) in g.chunks(dm).enumerate() {
                        let rows = s * segment..(s + 1) * segment;
                        let count = mask[rows.clone()].iter().filter(|&&k| k).count();
                        if count == 0 {
                            continue;
                        }
                        let c = T::c(count as f64);
                        for r in rows {
                            if mask[r] {
                                for j in 0..dm {
                                    d[r * dm + j] = d[r * dm + j] + gs[j] / c;
                                }
                            }
                        }
                    }
                }
            }
            Op::MeanRows(x) => {
                let m = nodes[x.0].value.rows();
                let n = out.cols();
                let mm = T::c(m as f64);
                if let Some(d) = buf!(*x) {
                    for r in 0..m {
                        for j in 0..n {
                            d[r * n + j] = d[r * n + j] + g[j] / mm;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.numel();
                    if let Some(d) = buf!(p) {
                        for (a, &b) in d.iter_mut().zip(&g[offset..offset + len]) {
                            *a = *a + b;
                        }
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (out.rows(), out.cols());
                let mut col0 = 0;
                for &p in parts {
                    let pn = nodes[p.0].value.cols();
                    if let Some(d) = buf!(p) {
                        for r in 0..m {
                            for j in 0..pn {
                                d[r * pn + j] = d[r * pn + j] + g[r * n + col0 + j];
                            }
                        }
                    }
                    col0 += pn;
                }
            }
            Op::Slice { x, row0, col0 } => {
                let (rows, cols) = (out.rows(), out.cols());
                let n = nodes[x.0].value.cols();
                if let Some(d) = buf!(*x) {
                    for r in 0..rows {
                        for j in 0..cols {
                            let k = (row0 + r) * n + col0 + j;
                            d[k] = d[k] + g[r * cols + j];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = buf!(*x) {
                    for (a, &b) in d.iter_mut().zip(g) {
                        *a = *a + b;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                if *count == 0 {
                    return Ok(());
                }
                let c = nodes[logits.0].value.cols();
                let scale = g[0] / T::c(*count as f64);
                if let Some(d) = buf!(*logits) {
                    for r in 0..mask.len() {
                        if !mask[r] {
                            continue;
                        }
                        for j in 0..c {
                            let onehot = if j == targets[r] { T::one() } else { T::zero() };
                            d[r * c + j] = d[r * c + j] + scale * (probs[r * c + j] - onehot);
                        }
                    }
                }
            }
            Op::BinaryCrossEntropy { p, targets } => {
                let pv = nodes[p.0].value.data();
                let n = T::c(targets.len() as f64);
                if let Some(d) = buf!(*p) {
                    for ((a, &q), &t) in d.iter_mut().zip(pv).zip(targets) {
                        *a = *a + g[0] * (q - t) / (q * (T::one() - q)) / n;
                    }
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let lv = nodes[logits.0].value.data();
                let n = T::c(targets.len() as f64);
                if let Some(d) = buf!(*logits) {
                    for ((a, &z), &t) in d.iter_mut().zip(lv).zip(targets) {
                        *a = *a + g[0] * (sigmoid(z) - t) / n;
                    }
                }
            }
            Op::L2Squared(x) => {
                let xv = nodes[x.0].value.data();
                let two = T::c(2.0);
                if let Some(d) = buf!(*x) {
                    for (a, &v) in d.iter_mut().zip(xv) {
                        *a = *a + g[0] * two * v;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = buf!(*x) {
                    d.iter_mut().for_each(|a| *a = *a + g[0]);
                }
            }
            Op::Mean(x) => {
                let n = T::c(nodes[x.0].value.numel() as f64);
                if let Some(d) = buf!(*x) {
                    d.iter_mut().for_each(|a| *a = *a + g[0] / n);
                }
            }
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::Gelu(_) => "gelu",
        Op::Sigmoid(_) => "sigmoid",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Softmax { .. } => "softmax",
        Op::MaskedSoftmaxRows(_) => "masked_softmax_rows",
        Op::Transpose(_) => "transpose",
        Op::Embedding { .. } => "embedding",
        Op::MeanPoolMasked { .. } => "mean_pool_masked",
        Op::MeanRows(_) => "mean_rows",
        Op::ConcatRows(_) => "concat_rows",
        Op::ConcatCols(_) => "concat_cols",
        Op::Slice { .. } => "slice",
        Op::Reshape(_) => "reshape",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::BinaryCrossEntropy { .. } => "binary_cross_entropy",
        Op::BceWithLogits { .. } => "bce_with_logits",
        Op::L2Squared(_) => "l2_squared",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
    }
}
