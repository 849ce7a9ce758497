//! Dense 2-D tensors and a tape-based reverse-mode differentiation graph.
//!
//! Everything is 64-bit and row-major. Vectors are column vectors (`n x 1`).
//! A [`Graph`] records primitive applications in topological order; calling
//! [`Graph::backward`] on a scalar node produces gradients for every leaf
//! that was registered with `requires_grad`.
//!
//! Broadcasting is deliberately limited: element-wise `mul` accepts a `1x1`
//! operand as a scalar factor, and `add_scalar`/`mul_scalar` fold constants.
//! Anything else must match shapes exactly.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: lhs {lhs_rows}x{lhs_cols}, rhs {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("{op} expects {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Owned dense matrix, row-major.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Tensor { rows, cols, data }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::from_vec(n, 1, data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared L2 norm of all entries.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Primitive kinds accepted by [`Graph::apply_primitive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    MatMul,
    Add,
    Mul,
    Concat,
    Slice { start: usize, len: usize },
    Tanh,
    Sigmoid,
    EmbeddingLookup { row: usize },
    Sum,
    Log,
    Softmax,
    LogSoftmax,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Add,
    AddScalar,
    Mul,
    MulScalar(f64),
    Concat,
    HStack,
    Slice { start: usize, len: usize },
    Tanh,
    Sigmoid,
    EmbedRow { row: usize },
    Sum,
    Log,
    Softmax,
    LogSoftmax,
}

#[derive(Debug, Clone)]
enum Data {
    Owned(Vec<f64>),
    Shared(Arc<Tensor>),
}

impl Data {
    fn as_slice(&self) -> &[f64] {
        match self {
            Data::Owned(v) => v,
            Data::Shared(t) => &t.data,
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    rows: usize,
    cols: usize,
    data: Data,
    needs_grad: bool,
    requires_grad: bool, // leaves only
}

/// A dynamically built compute graph (one per sequence or batch).
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &[f64] {
        self.nodes[id.idx()].data.as_slice()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.idx()];
        (n.rows, n.cols)
    }

    pub fn tensor(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.idx()];
        Tensor::from_vec(n.rows, n.cols, n.data.as_slice().to_vec())
    }

    fn push(
        &mut self,
        op: Op,
        inputs: Vec<NodeId>,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> NodeId {
        debug_assert_eq!(data.len(), rows * cols);
        let needs_grad = inputs.iter().any(|i| self.nodes[i.idx()].needs_grad);
        self.nodes.push(Node {
            op,
            inputs,
            rows,
            cols,
            data: Data::Owned(data),
            needs_grad,
            requires_grad: false,
        });
        NodeId(self.nodes.len() as u32 - 1)
    }

    /// Registers a shared tensor (typically a model parameter) as a leaf.
    pub fn leaf(&mut self, t: Arc<Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            rows: t.rows,
            cols: t.cols,
            data: Data::Shared(t),
            needs_grad: requires_grad,
            requires_grad,
        });
        NodeId(self.nodes.len() as u32 - 1)
    }

    /// Registers an owned constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            rows: t.rows,
            cols: t.cols,
            data: Data::Owned(t.data),
            needs_grad: false,
            requires_grad: false,
        });
        NodeId(self.nodes.len() as u32 - 1)
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.idx()];
        (n.rows, n.cols)
    }

    #[track_caller]
    fn expect_shape(&self, op: &'static str, a: NodeId, b: NodeId) {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ar != br || ac != bc {
            panic!("shape mismatch in {op}: lhs {ar}x{ac}, rhs {br}x{bc}");
        }
    }

    /// `(m x k) . (k x n)` matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            panic!("shape mismatch in matmul: lhs {m}x{k}, rhs {k2}x{n}");
        }
        let out = {
            let av = self.value(a);
            let bv = self.value(b);
            matmul_raw(av, bv, m, k, n)
        };
        self.push(Op::MatMul, vec![a, b], m, n, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.expect_shape("add", a, b);
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add, vec![a, b], r, c, out)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let (r, cc) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| x + c).collect();
        self.push(Op::AddScalar, vec![a], r, cc, out)
    }

    /// Element-wise product. A `1x1` operand broadcasts as a scalar factor.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if br == 1 && bc == 1 && (ar, ac) != (1, 1) {
            let s = self.value(b)[0];
            let out: Vec<f64> = self.value(a).iter().map(|x| x * s).collect();
            return self.push(Op::Mul, vec![a, b], ar, ac, out);
        }
        if ar == 1 && ac == 1 && (br, bc) != (1, 1) {
            return self.mul(b, a);
        }
        self.expect_shape("mul", a, b);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(Op::Mul, vec![a, b], ar, ac, out)
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let (r, cc) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        self.push(Op::MulScalar(c), vec![a], r, cc, out)
    }

    /// Vertical concatenation of column vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero vectors");
        let mut out = Vec::new();
        for &p in parts {
            let (_, c) = self.dims(p);
            assert_eq!(c, 1, "concat expects column vectors");
            out.extend_from_slice(self.value(p));
        }
        let rows = out.len();
        self.push(Op::Concat, parts.to_vec(), rows, 1, out)
    }

    /// Stacks T column vectors of length m into an `m x T` matrix.
    pub fn hstack(&mut self, cols: &[NodeId]) -> NodeId {
        assert!(!cols.is_empty(), "hstack of zero vectors");
        let (m, c) = self.dims(cols[0]);
        assert_eq!(c, 1, "hstack expects column vectors");
        let t = cols.len();
        let mut out = vec![0.0; m * t];
        for (j, &id) in cols.iter().enumerate() {
            let (mj, cj) = self.dims(id);
            assert!(
                mj == m && cj == 1,
                "shape mismatch in hstack: expected {m}x1, got {mj}x{cj}"
            );
            let v = self.value(id);
            for i in 0..m {
                out[i * t + j] = v[i];
            }
        }
        self.push(Op::HStack, cols.to_vec(), m, t, out)
    }

    /// Contiguous slice of a column vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!(c, 1, "slice expects a column vector");
        assert!(start + len <= r, "slice {start}..{} out of 0..{r}", start + len);
        let out = self.value(a)[start..start + len].to_vec();
        self.push(Op::Slice { start, len }, vec![a], len, 1, out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh, vec![a], r, c, out)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(Op::Sigmoid, vec![a], r, c, out)
    }

    /// Row `row` of a `V x d` matrix as a `d x 1` vector.
    pub fn embed_row(&mut self, m: NodeId, row: usize) -> NodeId {
        let (v, d) = self.dims(m);
        assert!(row < v, "embedding row {row} out of 0..{v}");
        let out = self.value(m)[row * d..(row + 1) * d].to_vec();
        self.push(Op::EmbedRow { row }, vec![m], d, 1, out)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).iter().sum();
        self.push(Op::Sum, vec![a], 1, 1, vec![s])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| x.ln()).collect();
        self.push(Op::Log, vec![a], r, c, out)
    }

    /// Numerically stable softmax over a column vector (max subtraction).
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!(c, 1, "softmax expects a column vector");
        let out = softmax_raw(self.value(a));
        self.push(Op::Softmax, vec![a], r, 1, out)
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!(c, 1, "log_softmax expects a column vector");
        let v = self.value(a);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out: Vec<f64> = v.iter().map(|x| x - lse).collect();
        self.push(Op::LogSoftmax, vec![a], r, 1, out)
    }

    /// Checked entry point mirroring the primitive set; internal callers use
    /// the typed methods directly.
    pub fn apply_primitive(
        &mut self,
        kind: PrimitiveKind,
        inputs: &[NodeId],
    ) -> Result<NodeId, TensorError> {
        use PrimitiveKind as K;
        let arity = |op: &'static str, n: usize| -> Result<(), TensorError> {
            if inputs.len() != n {
                Err(TensorError::Arity {
                    op,
                    expected: n,
                    got: inputs.len(),
                })
            } else {
                Ok(())
            }
        };
        let mismatch = |op: &'static str, a: NodeId, b: NodeId, g: &Graph| {
            let (ar, ac) = g.dims(a);
            let (br, bc) = g.dims(b);
            TensorError::ShapeMismatch {
                op,
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            }
        };
        match kind {
            K::MatMul => {
                arity("matmul", 2)?;
                let (_, k) = self.dims(inputs[0]);
                let (k2, _) = self.dims(inputs[1]);
                if k != k2 {
                    return Err(mismatch("matmul", inputs[0], inputs[1], self));
                }
                Ok(self.matmul(inputs[0], inputs[1]))
            }
            K::Add => {
                arity("add", 2)?;
                if self.dims(inputs[0]) != self.dims(inputs[1]) {
                    return Err(mismatch("add", inputs[0], inputs[1], self));
                }
                Ok(self.add(inputs[0], inputs[1]))
            }
            K::Mul => {
                arity("mul", 2)?;
                let a = self.dims(inputs[0]);
                let b = self.dims(inputs[1]);
                if a != b && a != (1, 1) && b != (1, 1) {
                    return Err(mismatch("mul", inputs[0], inputs[1], self));
                }
                Ok(self.mul(inputs[0], inputs[1]))
            }
            K::Concat => {
                if inputs.is_empty() {
                    return Err(TensorError::Arity {
                        op: "concat",
                        expected: 1,
                        got: 0,
                    });
                }
                for &p in inputs {
                    if self.dims(p).1 != 1 {
                        return Err(mismatch("concat", inputs[0], p, self));
                    }
                }
                Ok(self.concat(inputs))
            }
            K::Slice { start, len } => {
                arity("slice", 1)?;
                let (r, c) = self.dims(inputs[0]);
                if c != 1 || start + len > r {
                    return Err(TensorError::Invalid(format!(
                        "slice {start}..{} invalid for {r}x{c}",
                        start + len
                    )));
                }
                Ok(self.slice(inputs[0], start, len))
            }
            K::Tanh => {
                arity("tanh", 1)?;
                Ok(self.tanh(inputs[0]))
            }
            K::Sigmoid => {
                arity("sigmoid", 1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            K::EmbeddingLookup { row } => {
                arity("embedding_lookup", 1)?;
                let (v, _) = self.dims(inputs[0]);
                if row >= v {
                    return Err(TensorError::Invalid(format!(
                        "embedding row {row} out of 0..{v}"
                    )));
                }
                Ok(self.embed_row(inputs[0], row))
            }
            K::Sum => {
                arity("sum", 1)?;
                Ok(self.sum(inputs[0]))
            }
            K::Log => {
                arity("log", 1)?;
                Ok(self.log(inputs[0]))
            }
            K::Softmax => {
                arity("softmax", 1)?;
                if self.dims(inputs[0]).1 != 1 {
                    return Err(TensorError::Invalid("softmax expects a column vector".into()));
                }
                Ok(self.softmax(inputs[0]))
            }
            K::LogSoftmax => {
                arity("log_softmax", 1)?;
                if self.dims(inputs[0]).1 != 1 {
                    return Err(TensorError::Invalid(
                        "log_softmax expects a column vector".into(),
                    ));
                }
                Ok(self.log_softmax(inputs[0]))
            }
        }
    }

    /// Reverse pass from a scalar loss. Gradient paths into a node that feeds
    /// several consumers accumulate by summation.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let ln = &self.nodes[loss.idx()];
        if ln.rows != 1 || ln.cols != 1 {
            return Err(TensorError::NonScalarLoss {
                rows: ln.rows,
                cols: ln.cols,
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.idx()] = Some(vec![1.0]);

        for idx in (0..=loss.idx()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            // keep leaf gradients; interior gradients are dropped once used
            if node.requires_grad {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let ins = &node.inputs;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[id.idx()];
            if !n.needs_grad {
                return;
            }
            let slot = &mut grads[id.idx()];
            if slot.is_none() {
                *slot = Some(vec![0.0; n.rows * n.cols]);
            }
            f(slot.as_mut().unwrap());
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let (m, k) = self.dims(ins[0]);
                let (_, n) = self.dims(ins[1]);
                let a = self.value(ins[0]);
                let b = self.value(ins[1]);
                // dA = G . B^T
                acc(ins[0], &mut |da| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let da_row = &mut da[i * k..(i + 1) * k];
                            for p in 0..k {
                                da_row[p] += gij * b[p * n + j];
                            }
                        }
                    }
                });
                // dB = A^T . G
                acc(ins[1], &mut |db| {
                    for i in 0..m {
                        let a_row = &a[i * k..(i + 1) * k];
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let ap = a_row[p];
                            if ap == 0.0 {
                                continue;
                            }
                            let db_row = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                db_row[j] += ap * g_row[j];
                            }
                        }
                    }
                });
            }
            Op::Add => {
                acc(ins[0], &mut |d| {
                    for (di, gi) in d.iter_mut().zip(g) {
                        *di += gi;
                    }
                });
                acc(ins[1], &mut |d| {
                    for (di, gi) in d.iter_mut().zip(g) {
                        *di += gi;
                    }
                });
            }
            Op::AddScalar => {
                acc(ins[0], &mut |d| {
                    for (di, gi) in d.iter_mut().zip(g) {
                        *di += gi;
                    }
                });
            }
            Op::Mul => {
                let (ar, ac) = self.dims(ins[0]);
                let (br, bc) = self.dims(ins[1]);
                let a = self.value(ins[0]);
                let b = self.value(ins[1]);
                if (br, bc) == (1, 1) && (ar, ac) != (1, 1) {
                    let s = b[0];
                    acc(ins[0], &mut |d| {
                        for (di, gi) in d.iter_mut().zip(g) {
                            *di += gi * s;
                        }
                    });
                    acc(ins[1], &mut |d| {
                        d[0] += g.iter().zip(a).map(|(gi, ai)| gi * ai).sum::<f64>();
                    });
                } else {
                    acc(ins[0], &mut |d| {
                        for ((di, gi), bi) in d.iter_mut().zip(g).zip(b) {
                            *di += gi * bi;
                        }
                    });
                    acc(ins[1], &mut |d| {
                        for ((di, gi), ai) in d.iter_mut().zip(g).zip(a) {
                            *di += gi * ai;
                        }
                    });
                }
            }
            Op::MulScalar(c) => {
                acc(ins[0], &mut |d| {
                    for (di, gi) in d.iter_mut().zip(g) {
                        *di += gi * c;
                    }
                });
            }
            Op::Concat => {
                let mut off = 0;
                for &p in ins {
                    let (r, _) = self.dims(p);
                    acc(p, &mut |d| {
                        for (di, gi) in d.iter_mut().zip(&g[off..off + r]) {
                            *di += gi;
                        }
                    });
                    off += r;
                }
            }
            Op::HStack => {
                let t = ins.len();
                for (j, &p) in ins.iter().enumerate() {
                    let (m, _) = self.dims(p);
                    acc(p, &mut |d| {
                        for i in 0..m {
                            d[i] += g[i * t + j];
                        }
                    });
                }
            }
            Op::Slice { start, len } => {
                acc(ins[0], &mut |d| {
                    for (di, gi) in d[start..start + len].iter_mut().zip(g) {
                        *di += gi;
                    }
                });
            }
            Op::Tanh => {
                let y = node.data.as_slice();
                acc(ins[0], &mut |d| {
                    for ((di, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *di += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Sigmoid => {
                let y = node.data.as_slice();
                acc(ins[0], &mut |d| {
                    for ((di, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *di += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::EmbedRow { row } => {
                let (_, d_cols) = self.dims(ins[0]);
                acc(ins[0], &mut |d| {
                    for (di, gi) in d[row * d_cols..(row + 1) * d_cols].iter_mut().zip(g) {
                        *di += gi;
                    }
                });
            }
            Op::Sum => {
                let g0 = g[0];
                acc(ins[0], &mut |d| {
                    for di in d.iter_mut() {
                        *di += g0;
                    }
                });
            }
            Op::Log => {
                let x = self.value(ins[0]);
                acc(ins[0], &mut |d| {
                    for ((di, gi), xi) in d.iter_mut().zip(g).zip(x) {
                        *di += gi / xi;
                    }
                });
            }
            Op::Softmax => {
                let y = node.data.as_slice();
                let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                acc(ins[0], &mut |d| {
                    for ((di, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *di += yi * (gi - dot);
                    }
                });
            }
            Op::LogSoftmax => {
                let y = node.data.as_slice();
                let gsum: f64 = g.iter().sum();
                acc(ins[0], &mut |d| {
                    for ((di, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *di += gi - yi.exp() * gsum;
                    }
                });
            }
        }
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0 as usize].as_deref()
    }

    /// Gradient of a leaf; an untouched leaf yields zeros of its shape.
    pub fn tensor_or_zeros(&self, g: &Graph, id: NodeId) -> Tensor {
        let (r, c) = g.shape(id);
        match self.get(id) {
            Some(v) => Tensor::from_vec(r, c, v.to_vec()),
            None => Tensor::zeros(r, c),
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if n == 1 {
        // matrix-vector fast path
        for i in 0..m {
            let row = &a[i * k..(i + 1) * k];
            let mut s = 0.0;
            for (x, y) in row.iter().zip(b) {
                s += x * y;
            }
            out[i] = s;
        }
        return out;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (p, &ap) in a_row.iter().enumerate() {
            if ap == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                o_row[j] += ap * b_row[j];
            }
        }
    }
    out
}

/// Stable softmax on a plain slice (shared with beam search scoring).
pub fn softmax_raw(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &mut Graph, t: Tensor) -> NodeId {
        g.leaf(Arc::new(t), true)
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut g = Graph::new();
        let a = leaf(&mut g, Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = leaf(&mut g, Tensor::from_vec(2, 1, vec![1.0, 1.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c), &[3.0, 7.0]);
    }

    #[test]
    fn add_zeros_is_identity() {
        let mut g = Graph::new();
        let x = leaf(&mut g, Tensor::vector(vec![1.5, -2.0, 0.25]));
        let z = g.constant(Tensor::zeros(3, 1));
        let y = g.add(x, z);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(4, 1));
        let y = g.tanh(x);
        assert!(g.value(y).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0; 4]));
        let s = g.softmax(x);
        for v in g.value(s) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let y = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let s = g.softmax(y);
        let v = g.value(s);
        assert!(v[0] > 1.0 - 1e-12 && v[1] < 1e-12);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_exact_ratio() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0f64.ln(), 3.0f64.ln()]));
        let s = g.softmax(x);
        let v = g.value(s);
        assert!((v[0] - 0.25).abs() < 1e-12);
        assert!((v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = leaf(&mut g, Tensor::vector(vec![1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(
            g.backward(y),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_untouched_leaf_is_zero() {
        let mut g = Graph::new();
        let x = leaf(&mut g, Tensor::vector(vec![1.0, 2.0]));
        let w = leaf(&mut g, Tensor::vector(vec![3.0, 4.0]));
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.tensor_or_zeros(&g, w).data, vec![0.0, 0.0]);
        assert_eq!(grads.tensor_or_zeros(&g, x).data, vec![1.0, 1.0]);
    }

    #[test]
    fn fanout_accumulates_both_paths() {
        // y = sum(x) + sum(x .* x): dy/dx = 1 + 2x
        let mut g = Graph::new();
        let x = leaf(&mut g, Tensor::vector(vec![1.0, -2.0, 0.5]));
        let s1 = g.sum(x);
        let xx = g.mul(x, x);
        let s2 = g.sum(xx);
        let loss = g.add(s1, s2);
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        for (gi, xi) in gx.iter().zip(&[1.0, -2.0, 0.5]) {
            assert!((gi - (1.0 + 2.0 * xi)).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_primitive_reports_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(3, 2));
        let b = g.constant(Tensor::zeros(4, 1));
        let err = g.apply_primitive(PrimitiveKind::MatMul, &[a, b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x2") && msg.contains("4x1"), "{msg}");
    }

    #[test]
    fn sum_of_matvec_has_outer_product_gradient() {
        // loss = sum(W.x): dL/dW = 1 x^T replicated per row
        let mut g = Graph::new();
        let w = leaf(&mut g, Tensor::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.matmul(w, x);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        let gw = grads.get(w).unwrap();
        assert_eq!(gw, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }
}
