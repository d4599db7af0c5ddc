use super::params::{Gradients, ParamId, ParameterStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{AutodiffError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A run of consecutive rows forming one attention sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Tanh(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Softmax(Var),
    Attention { q: Var, k: Var, v: Var, segments: Vec<Segment>, heads: usize, probs: Vec<Vec<f64>> },
    MaxPool { x: Var, argmax: Vec<usize> },
    Gather { x: Var, idx: Vec<usize> },
    Reshape(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Vec<Var>),
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
    Bce { logits: Var, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
}

/// Tape of a single forward computation. Parameter values are borrowed from
/// the store, never copied.
pub struct Graph<'p> {
    store: &'p ParameterStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    backward_done: bool,
}

fn fault(msg: &str) -> ! {
    panic!("internal fault: {msg}")
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParameterStore) -> Self {
        Graph { store, nodes: Vec::new(), param_vars: vec![None; store.len()], backward_done: false }
    }

    pub fn store(&self) -> &'p ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.index()];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => fault("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.index()];
        (n.rows, n.cols)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.index()].requires_grad);
        let (rows, cols) = value.shape();
        self.nodes.push(Node { value: Some(value), rows, cols, op, requires_grad });
        Var((self.nodes.len() - 1) as u32)
    }

    /// Constant input; gradients do not flow into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    /// The parameter as a graph node; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let t = self.store.value(id);
        self.nodes.push(Node { value: None, rows: t.rows, cols: t.cols, op: Op::Param(id), requires_grad: true });
        let v = Var((self.nodes.len() - 1) as u32);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            fault(&format!("matmul shape mismatch {n}x{k} * {k2}x{m}"));
        }
        let mut out = Tensor::zeros(n, m);
        matmul_acc(&self.value(a).data, &self.value(b).data, &mut out.data, n, k, m);
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a) != self.shape(b) {
            fault("add shape mismatch");
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds the `1 x m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (n, m) = self.shape(a);
        if self.shape(b) != (1, m) {
            fault("add_row shape mismatch");
        }
        let mut out = self.value(a).clone();
        let row = &self.value(b).data;
        for i in 0..n {
            for (o, r) in out.row_mut(i).iter_mut().zip(row) {
                *o += r;
            }
        }
        self.push(out, Op::AddRow(a, b), &[a, b])
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a) != self.shape(b) {
            fault("mul shape mismatch");
        }
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in &mut out.data {
            let t = (GELU_C * (*x + 0.044715 * *x * *x * *x)).tanh();
            *x = 0.5 * *x * (1.0 + t);
        }
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|x| *x = x.tanh());
        self.push(out, Op::Tanh(a), &[a])
    }

    /// Per-row normalisation followed by the affine `gamma`, `beta` rows.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (n, m) = self.shape(x);
        if self.shape(gamma) != (1, m) || self.shape(beta) != (1, m) {
            fault("layer_norm shape mismatch");
        }
        let xv = self.value(x);
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let mut out = Tensor::zeros(n, m);
        let mut xhat = vec![0.0; n * m];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..m {
                let h = (row[j] - mean) * is;
                xhat[i * m + j] = h;
                out.data[i * m + j] = h * g[j] + b[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for i in 0..out.rows {
            softmax_in_place(out.row_mut(i));
        }
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Multi-head scaled dot-product attention. Rows of `q`, `k`, `v` are
    /// grouped into independent `segments`; a row only attends to keys of its
    /// own segment, and among those only to rows with `key_mask[row] == true`
    /// (all rows when `key_mask` is `None`). Rows outside every segment get
    /// zero output.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[Segment],
        heads: usize,
        key_mask: Option<&[bool]>,
    ) -> Var {
        let (n, h) = self.shape(q);
        if self.shape(k) != (n, h) || self.shape(v) != (n, h) || heads == 0 || h % heads != 0 {
            fault("attention shape mismatch");
        }
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Tensor::zeros(n, h);
        // probs[s] holds heads * len * len entries, zero where masked
        let mut probs = Vec::with_capacity(segments.len());
        for seg in segments {
            if seg.start + seg.len > n {
                fault("attention segment out of range");
            }
            let len = seg.len;
            let mut p = vec![0.0; heads * len * len];
            let allowed: Vec<bool> =
                (0..len).map(|j| key_mask.is_none_or(|m| m[seg.start + j])).collect();
            for hd in 0..heads {
                let c0 = hd * dh;
                for i in 0..len {
                    let qi = &qv.row(seg.start + i)[c0..c0 + dh];
                    let pr = &mut p[(hd * len + i) * len..(hd * len + i + 1) * len];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..len {
                        if !allowed[j] {
                            continue;
                        }
                        let kj = &kv.row(seg.start + j)[c0..c0 + dh];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        pr[j] = s;
                        max = max.max(s);
                    }
                    if max == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut z = 0.0;
                    for j in 0..len {
                        if allowed[j] {
                            pr[j] = (pr[j] - max).exp();
                            z += pr[j];
                        }
                    }
                    let orow = &mut out.data[(seg.start + i) * h + c0..(seg.start + i) * h + c0 + dh];
                    for j in 0..len {
                        if !allowed[j] {
                            continue;
                        }
                        pr[j] /= z;
                        let vj = &vv.row(seg.start + j)[c0..c0 + dh];
                        for (o, x) in orow.iter_mut().zip(vj) {
                            *o += pr[j] * x;
                        }
                    }
                }
            }
            probs.push(p);
        }
        let op = Op::Attention { q, k, v, segments: segments.to_vec(), heads, probs };
        self.push(out, op, &[q, k, v])
    }

    /// Element-wise maximum over the selected rows, giving a `1 x m` row.
    /// Ties route the gradient to the earliest selected row.
    pub fn max_pool_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        if rows.is_empty() {
            fault("max_pool_rows over no rows");
        }
        let xv = self.value(x);
        let m = xv.cols;
        let mut out = vec![f64::NEG_INFINITY; m];
        let mut argmax = vec![0; m];
        for &r in rows {
            for (j, &val) in xv.row(r).iter().enumerate() {
                if val > out[j] {
                    out[j] = val;
                    argmax[j] = r;
                }
            }
        }
        self.push(Tensor::row_vector(out), Op::MaxPool { x, argmax }, &[x])
    }

    /// Rows of `x` selected by `idx` (repeats allowed); embedding lookup.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Var {
        let xv = self.value(x);
        let m = xv.cols;
        let mut out = Tensor::zeros(idx.len(), m);
        for (o, &r) in idx.iter().enumerate() {
            if r >= xv.rows {
                fault("gather index out of range");
            }
            out.row_mut(o).copy_from_slice(xv.row(r));
        }
        self.push(out, Op::Gather { x, idx: idx.to_vec() }, &[x])
    }

    /// Same data, row-major, viewed as `rows x cols`.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        if xv.len() != rows * cols {
            fault("reshape size mismatch");
        }
        let t = Tensor::from_vec(rows, cols, xv.data.clone());
        self.push(t, Op::Reshape(x), &[x])
    }

    pub fn row(&mut self, x: Var, r: usize) -> Var {
        self.gather(x, &[r])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        if parts.is_empty() {
            fault("concat_rows of nothing");
        }
        let m = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p).1 != m {
                fault("concat_rows width mismatch");
            }
            data.extend_from_slice(&self.value(p).data);
        }
        let rows = data.len() / m.max(1);
        self.push(Tensor::from_vec(rows, m, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        if parts.is_empty() {
            fault("concat_cols of nothing");
        }
        let n = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(n, total);
        let mut c0 = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows != n {
                fault("concat_cols height mismatch");
            }
            for i in 0..n {
                out.row_mut(i)[c0..c0 + pv.cols].copy_from_slice(pv.row(i));
            }
            c0 += pv.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Sum of same-shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        if parts.is_empty() {
            fault("sum of nothing");
        }
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            if self.shape(p) != out.shape() {
                fault("sum shape mismatch");
            }
            out.add_assign(self.value(p));
        }
        self.push(out, Op::Sum(parts.to_vec()), parts)
    }

    pub fn mean(&mut self, parts: &[Var]) -> Var {
        let s = self.sum(parts);
        self.scale(s, 1.0 / parts.len() as f64)
    }

    /// Softmax cross-entropy of a `1 x K` logit row against class `target`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits);
        if lv.rows != 1 || target >= lv.cols {
            fault("cross_entropy shape mismatch");
        }
        let mut probs = lv.data.clone();
        softmax_in_place(&mut probs);
        let max = lv.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - lv.data[target];
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, target, probs }, &[logits])
    }

    /// Summed binary cross-entropy with logits over every element of `logits`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Var {
        let lv = self.value(logits);
        if lv.len() != labels.len() {
            fault("bce label count mismatch");
        }
        let loss = lv.data.iter().zip(labels).map(|(&z, &y)| bce_logit(z, y)).sum();
        self.push(Tensor::scalar(loss), Op::Bce { logits, labels: labels.to_vec() }, &[logits])
    }

    /// Reverse pass from the scalar `loss`. A graph supports one backward.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.backward_done {
            return Err(AutodiffError::RepeatedBackward);
        }
        self.backward_done = true;
        if self.shape(loss) != (1, 1) {
            return Err(AutodiffError::NotScalar(self.shape(loss)));
        }
        if !self.value(loss).is_finite() {
            return Err(AutodiffError::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index()] = Some(Tensor::scalar(1.0));
        let mut out = Gradients { by_param: vec![None; self.store.len()] };
        for idx in (0..=loss.index()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite(format!("gradient of node {idx}")));
            }
            self.backprop_node(idx, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        let node = &self.nodes[v.index()];
        if !node.requires_grad {
            return None;
        }
        let slot = &mut grads[v.index()];
        Some(slot.get_or_insert_with(|| Tensor::zeros(node.rows, node.cols)))
    }

    fn backprop_node(&self, idx: usize, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => match &mut out.by_param[id.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            },
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                let bv = &self.value(*b).data;
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_acc(&g.data, bv, &mut ga.data, n, k, m);
                }
                let av = &self.value(*a).data;
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_acc(av, &g.data, &mut gb.data, n, k, m);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(&g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(&g);
                }
            }
            Op::AddRow(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(&g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.rows {
                        for (o, x) in gb.data.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), y) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, x), y) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *o += x * y;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, x) in ga.data.iter_mut().zip(&g.data) {
                        *o += c * x;
                    }
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), gv) in ga.data.iter_mut().zip(&av.data).zip(&g.data) {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                        *o += gv * d;
                    }
                }
            }
            Op::Tanh(a) => {
                let yv = node.value.as_ref().unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, y), gv) in ga.data.iter_mut().zip(&yv.data).zip(&g.data) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (n, m) = (node.rows, node.cols);
                let gam = &self.value(*gamma).data;
                if let Some(gg) = self.acc(grads, *gamma) {
                    for i in 0..n {
                        for j in 0..m {
                            gg.data[j] += g.data[i * m + j] * xhat[i * m + j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for i in 0..n {
                        for j in 0..m {
                            gb.data[j] += g.data[i * m + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..n {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..m {
                            let d = g.data[i * m + j] * gam[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * m + j];
                        }
                        mean_d /= m as f64;
                        mean_dx /= m as f64;
                        for j in 0..m {
                            let d = g.data[i * m + j] * gam[j];
                            gx.data[i * m + j] += inv_std[i] * (d - mean_d - xhat[i * m + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let yv = node.value.as_ref().unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..node.rows {
                        let y = yv.row(i);
                        let gr = g.row(i);
                        let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in ga.row_mut(i).iter_mut().zip(y).zip(gr) {
                            *o += p * (q - dot);
                        }
                    }
                }
            }
            Op::Attention { q, k, v, segments, heads, probs } => {
                self.backprop_attention(*q, *k, *v, segments, *heads, probs, &g, grads);
            }
            Op::MaxPool { x, argmax } => {
                if let Some(gx) = self.acc(grads, *x) {
                    let m = gx.cols;
                    for (j, &r) in argmax.iter().enumerate() {
                        gx.data[r * m + j] += g.data[j];
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, v) in gx.data.iter_mut().zip(&g.data) {
                        *o += v;
                    }
                }
            }
            Op::Gather { x, idx } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, &r) in idx.iter().enumerate() {
                        for (t, s) in gx.row_mut(r).iter_mut().zip(g.row(o)) {
                            *t += s;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.acc(grads, p) {
                        for (t, s) in gp.data.iter_mut().zip(&g.data[off..off + len]) {
                            *t += s;
                        }
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if let Some(gp) = self.acc(grads, p) {
                        for i in 0..g.rows {
                            for (t, s) in gp.row_mut(i).iter_mut().zip(&g.row(i)[c0..c0 + w]) {
                                *t += s;
                            }
                        }
                    }
                    c0 += w;
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if let Some(gp) = self.acc(grads, p) {
                        gp.add_assign(&g);
                    }
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                let s = g.item();
                if let Some(gl) = self.acc(grads, *logits) {
                    for (j, (o, p)) in gl.data.iter_mut().zip(probs).enumerate() {
                        let y = if j == *target { 1.0 } else { 0.0 };
                        *o += s * (p - y);
                    }
                }
            }
            Op::Bce { logits, labels } => {
                let s = g.item();
                let lv = self.value(*logits);
                if let Some(gl) = self.acc(grads, *logits) {
                    for ((o, &z), &y) in gl.data.iter_mut().zip(&lv.data).zip(labels) {
                        *o += s * (sigmoid(z) - y);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[Segment],
        heads: usize,
        probs: &[Vec<f64>],
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (n, h) = self.shape(q);
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut dq = Tensor::zeros(n, h);
        let mut dk = Tensor::zeros(n, h);
        let mut dv = Tensor::zeros(n, h);
        for (seg, p) in segments.iter().zip(probs) {
            let len = seg.len;
            let mut dp = vec![0.0; len];
            for hd in 0..heads {
                let c0 = hd * dh;
                for i in 0..len {
                    let gi = &g.row(seg.start + i)[c0..c0 + dh];
                    let pr = &p[(hd * len + i) * len..(hd * len + i + 1) * len];
                    let mut dot = 0.0;
                    for j in 0..len {
                        if pr[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let vj = &vv.row(seg.start + j)[c0..c0 + dh];
                        dp[j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += pr[j] * dp[j];
                        let dvr = &mut dv.data[(seg.start + j) * h + c0..(seg.start + j) * h + c0 + dh];
                        for (o, x) in dvr.iter_mut().zip(gi) {
                            *o += pr[j] * x;
                        }
                    }
                    let qi = &qv.row(seg.start + i)[c0..c0 + dh];
                    for j in 0..len {
                        if pr[j] == 0.0 {
                            continue;
                        }
                        let ds = pr[j] * (dp[j] - dot) * scale;
                        let kj = &kv.row(seg.start + j)[c0..c0 + dh];
                        let dqr = &mut dq.data[(seg.start + i) * h + c0..(seg.start + i) * h + c0 + dh];
                        for (o, x) in dqr.iter_mut().zip(kj) {
                            *o += ds * x;
                        }
                        let dkr = &mut dk.data[(seg.start + j) * h + c0..(seg.start + j) * h + c0 + dh];
                        for (o, x) in dkr.iter_mut().zip(qi) {
                            *o += ds * x;
                        }
                    }
                }
            }
        }
        for (var, d) in [(q, dq), (k, dk), (v, dv)] {
            if let Some(t) = self.acc(grads, var) {
                t.add_assign(&d);
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-y ln sigmoid(z) - (1-y) ln(1 - sigmoid(z))`, stable for large |z|.
pub fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}
