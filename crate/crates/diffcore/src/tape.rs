use std::cell::RefCell;

use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Copyable; carries the node shape so
/// shape checks do not need to borrow the tape.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    /// Bias add over rows: x is RxC, bias is 1xC.
    AddRows(usize, usize),
    Mul(usize, usize),
    /// Multiply every entry of `x` by a 1x1 scalar node.
    ScalarMul { s: usize, x: usize },
    /// Elementwise `m * x + c` with constant coefficients.
    Affine { x: usize, m: f64 },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Slice { x: usize, r0: usize, c0: usize },
    Gather { x: usize, rows: Vec<usize> },
    SoftmaxRows(usize),
    Sigmoid(usize),
    Tanh(usize),
    LayerNorm { x: usize, eps: f64 },
    Dropout { x: usize, mask: Vec<f64>, keep: f64 },
    Mean(usize),
    Sum(usize),
    Ln(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so gradients can be propagated backward.
///
/// Nodes are appended in topological order; [`Tape::backward`] walks them in
/// reverse. Shape mismatches panic at op construction. Any op whose output
/// contains a NaN or infinity poisons the tape; callers inspect
/// [`Tape::poisoned`] at natural checkpoints (e.g. after computing a loss).
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    poison: RefCell<Option<String>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), poison: RefCell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// First op that produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<String> {
        self.poison.borrow().clone()
    }

    fn push(&self, value: Tensor, op: Op, name: &str) -> Var {
        if !value.all_finite() {
            let mut p = self.poison.borrow_mut();
            if p.is_none() {
                *p = Some(format!("{name}: non-finite output"));
            }
        }
        let (rows, cols) = value.shape();
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, op });
        Var { id, rows, cols }
    }

    /// Insert an input tensor (parameter or constant).
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.id].value.item()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "matmul: {}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols);
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.id].value.matmul(&nodes[b.id].value)
        };
        self.push(value, Op::Matmul(a.id, b.id), "matmul")
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.id].value.transpose();
        self.push(value, Op::Transpose(a.id), "transpose")
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        assert_eq!(
            (a.rows, a.cols),
            (b.rows, b.cols),
            "add: {}x{} plus {}x{}",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        );
        let value = {
            let nodes = self.nodes.borrow();
            let mut out = nodes[a.id].value.clone();
            out.add_assign_scaled(&nodes[b.id].value, 1.0);
            out
        };
        self.push(value, Op::Add(a.id, b.id), "add")
    }

    /// Add a 1xC bias row to every row of an RxC tensor. This is the only
    /// broadcast in the crate.
    pub fn add_rows(&self, x: Var, bias: Var) -> Var {
        assert_eq!(bias.rows, 1, "add_rows: bias must be a single row");
        assert_eq!(x.cols, bias.cols, "add_rows: {} cols vs bias {}", x.cols, bias.cols);
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            let bv = &nodes[bias.id].value;
            let mut out = xv.clone();
            for r in 0..out.rows() {
                for c in 0..out.cols() {
                    let v = out.get(r, c) + bv.get(0, c);
                    out.set(r, c, v);
                }
            }
            out
        };
        self.push(value, Op::AddRows(x.id, bias.id), "add_rows")
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        assert_eq!(
            (a.rows, a.cols),
            (b.rows, b.cols),
            "mul: {}x{} times {}x{} elementwise",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        );
        let value = {
            let nodes = self.nodes.borrow();
            let av = &nodes[a.id].value;
            let bv = &nodes[b.id].value;
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
            Tensor::new(a.rows, a.cols, data)
        };
        self.push(value, Op::Mul(a.id, b.id), "mul")
    }

    /// Multiply `x` by a differentiable 1x1 scalar.
    pub fn scalar_mul(&self, s: Var, x: Var) -> Var {
        assert_eq!((s.rows, s.cols), (1, 1), "scalar_mul: scale must be 1x1");
        let value = {
            let nodes = self.nodes.borrow();
            let sv = nodes[s.id].value.item();
            nodes[x.id].value.map(|v| sv * v)
        };
        self.push(value, Op::ScalarMul { s: s.id, x: x.id }, "scalar_mul")
    }

    /// Elementwise `m * x + c` with constant `m`, `c`.
    pub fn affine(&self, x: Var, m: f64, c: f64) -> Var {
        let value = self.nodes.borrow()[x.id].value.map(|v| m * v + c);
        self.push(value, Op::Affine { x: x.id, m }, "affine")
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let cols = parts[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        {
            let nodes = self.nodes.borrow();
            for p in parts {
                assert_eq!(p.cols, cols, "concat_rows: column mismatch {} vs {}", p.cols, cols);
                data.extend_from_slice(nodes[p.id].value.data());
                rows += p.rows;
            }
        }
        self.push(
            Tensor::new(rows, cols, data),
            Op::ConcatRows(parts.iter().map(|p| p.id).collect()),
            "concat_rows",
        )
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = parts[0].rows;
        let total_cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor::zeros(rows, total_cols);
        {
            let nodes = self.nodes.borrow();
            let mut offset = 0;
            for p in parts {
                assert_eq!(p.rows, rows, "concat_cols: row mismatch {} vs {}", p.rows, rows);
                let pv = &nodes[p.id].value;
                for r in 0..rows {
                    for c in 0..p.cols {
                        out.set(r, offset + c, pv.get(r, c));
                    }
                }
                offset += p.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), "concat_cols")
    }

    /// Rectangular window `[r0, r1) x [c0, c1)`.
    pub fn slice(&self, x: Var, r0: usize, r1: usize, c0: usize, c1: usize) -> Var {
        assert!(r0 < r1 && r1 <= x.rows, "slice: row range {r0}..{r1} out of {}", x.rows);
        assert!(c0 < c1 && c1 <= x.cols, "slice: col range {c0}..{c1} out of {}", x.cols);
        let mut out = Tensor::zeros(r1 - r0, c1 - c0);
        {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            for r in r0..r1 {
                for c in c0..c1 {
                    out.set(r - r0, c - c0, xv.get(r, c));
                }
            }
        }
        self.push(out, Op::Slice { x: x.id, r0, c0 }, "slice")
    }

    /// Select rows by index (duplicates allowed); gradients scatter-add back.
    pub fn gather_rows(&self, x: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "gather_rows: no indices");
        let mut out = Tensor::zeros(rows.len(), x.cols);
        {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            for (i, &r) in rows.iter().enumerate() {
                assert!(r < x.rows, "gather_rows: index {r} out of {} rows", x.rows);
                for c in 0..x.cols {
                    out.set(i, c, xv.get(r, c));
                }
            }
        }
        self.push(out, Op::Gather { x: x.id, rows: rows.to_vec() }, "gather_rows")
    }

    /// Numerically stable softmax over each row.
    pub fn softmax_rows(&self, x: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            let mut out = xv.clone();
            for r in 0..out.rows() {
                let row = xv.row_slice(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for c in 0..out.cols() {
                    let e = (xv.get(r, c) - max).exp();
                    out.set(r, c, e);
                    sum += e;
                }
                for c in 0..out.cols() {
                    out.set(r, c, out.get(r, c) / sum);
                }
            }
            out
        };
        self.push(value, Op::SoftmaxRows(x.id), "softmax_rows")
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        let value = self.nodes.borrow()[x.id].value.map(stable_sigmoid);
        self.push(value, Op::Sigmoid(x.id), "sigmoid")
    }

    pub fn tanh(&self, x: Var) -> Var {
        let value = self.nodes.borrow()[x.id].value.map(f64::tanh);
        self.push(value, Op::Tanh(x.id), "tanh")
    }

    /// Row-wise layer normalization without learned affine parameters.
    pub fn layer_norm(&self, x: Var, eps: f64) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            let n = xv.cols() as f64;
            let mut out = xv.clone();
            for r in 0..xv.rows() {
                let row = xv.row_slice(r);
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv = 1.0 / (var + eps).sqrt();
                for c in 0..xv.cols() {
                    out.set(r, c, (xv.get(r, c) - mean) * inv);
                }
            }
            out
        };
        self.push(value, Op::LayerNorm { x: x.id, eps }, "layer_norm")
    }

    /// Inverted-scaling dropout with an externally supplied {0,1} mask.
    /// In evaluation mode simply do not insert this op.
    pub fn dropout(&self, x: Var, mask: &[f64], rate: f64) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout: rate {rate} outside [0,1)");
        assert_eq!(mask.len(), x.rows * x.cols, "dropout: mask length mismatch");
        let keep = 1.0 - rate;
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            let data = xv.data().iter().zip(mask).map(|(v, m)| v * m / keep).collect();
            Tensor::new(x.rows, x.cols, data)
        };
        self.push(value, Op::Dropout { x: x.id, mask: mask.to_vec(), keep }, "dropout")
    }

    /// Mean of all entries, as a 1x1 tensor.
    pub fn mean(&self, x: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.id].value;
            Tensor::scalar(xv.data().iter().sum::<f64>() / xv.len() as f64)
        };
        self.push(value, Op::Mean(x.id), "mean")
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&self, x: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            Tensor::scalar(nodes[x.id].value.data().iter().sum::<f64>())
        };
        self.push(value, Op::Sum(x.id), "sum")
    }

    pub fn ln(&self, x: Var) -> Var {
        let value = self.nodes.borrow()[x.id].value.map(f64::ln);
        self.push(value, Op::Ln(x.id), "ln")
    }

    /// Clamp to `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&self, x: Var, lo: f64, hi: f64) -> Var {
        assert!(lo < hi, "clamp: empty interval [{lo}, {hi}]");
        let value = self.nodes.borrow()[x.id].value.map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp { x: x.id, lo, hi }, "clamp")
    }

    /// Reverse pass from a scalar node. Gradients accumulate additively, so
    /// a node feeding several consumers receives the sum of their
    /// contributions.
    pub fn backward(&self, target: Var) -> Gradients {
        assert_eq!((target.rows, target.cols), (1, 1), "backward: target must be scalar");
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[target.id] = Some(Tensor::scalar(1.0));

        for id in (0..=target.id).rev() {
            let Some(g) = grads[id].clone() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let da = g.matmul(&nodes[*b].value.transpose());
                    let db = nodes[*a].value.transpose().matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRows(x, bias) => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let v = db.get(0, c) + g.get(r, c);
                            db.set(0, c, v);
                        }
                    }
                    accumulate(&mut grads, *x, g.clone());
                    accumulate(&mut grads, *bias, db);
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let da = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
                    );
                    let db = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect(),
                    );
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::ScalarMul { s, x } => {
                    let sv = nodes[*s].value.item();
                    let xv = &nodes[*x].value;
                    let ds: f64 = g.data().iter().zip(xv.data()).map(|(gi, xi)| gi * xi).sum();
                    accumulate(&mut grads, *s, Tensor::scalar(ds));
                    accumulate(&mut grads, *x, g.map(|v| sv * v));
                }
                Op::Affine { x, m } => accumulate(&mut grads, *x, g.map(|v| m * v)),
                Op::ConcatRows(parts) => {
                    let mut r = 0;
                    for &p in parts {
                        let pr = nodes[p].value.rows();
                        let mut dp = Tensor::zeros(pr, g.cols());
                        for i in 0..pr {
                            for c in 0..g.cols() {
                                dp.set(i, c, g.get(r + i, c));
                            }
                        }
                        accumulate(&mut grads, p, dp);
                        r += pr;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let pc = nodes[p].value.cols();
                        let mut dp = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            for c in 0..pc {
                                dp.set(r, c, g.get(r, c0 + c));
                            }
                        }
                        accumulate(&mut grads, p, dp);
                        c0 += pc;
                    }
                }
                Op::Slice { x, r0, c0 } => {
                    let xv = &nodes[*x].value;
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            dx.set(r0 + r, c0 + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather { x, rows } => {
                    let xv = &nodes[*x].value;
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..g.cols() {
                            let v = dx.get(r, c) + g.get(i, c);
                            dx.set(r, c, v);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 =
                            (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = Tensor::new(
                        y.rows(),
                        y.cols(),
                        g.data()
                            .iter()
                            .zip(y.data())
                            .map(|(gi, yi)| gi * yi * (1.0 - yi))
                            .collect(),
                    );
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let dx = Tensor::new(
                        y.rows(),
                        y.cols(),
                        g.data().iter().zip(y.data()).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect(),
                    );
                    accumulate(&mut grads, *x, dx);
                }
                Op::LayerNorm { x, eps } => {
                    let xv = &nodes[*x].value;
                    let y = &node.value;
                    let n = xv.cols() as f64;
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let row = xv.row_slice(r);
                        let mean = row.iter().sum::<f64>() / n;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let g_mean: f64 = (0..xv.cols()).map(|c| g.get(r, c)).sum::<f64>() / n;
                        let gy_mean: f64 =
                            (0..xv.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum::<f64>() / n;
                        for c in 0..xv.cols() {
                            let v = inv * (g.get(r, c) - g_mean - y.get(r, c) * gy_mean);
                            dx.set(r, c, v);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout { x, mask, keep } => {
                    let dx = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask).map(|(gi, m)| gi * m / keep).collect(),
                    );
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mean(x) => {
                    let xv = &nodes[*x].value;
                    let scale = g.item() / xv.len() as f64;
                    accumulate(&mut grads, *x, Tensor::full(xv.rows(), xv.cols(), scale));
                }
                Op::Sum(x) => {
                    let xv = &nodes[*x].value;
                    accumulate(&mut grads, *x, Tensor::full(xv.rows(), xv.cols(), g.item()));
                }
                Op::Ln(x) => {
                    let xv = &nodes[*x].value;
                    let dx = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(xv.data()).map(|(gi, v)| gi / v).collect(),
                    );
                    accumulate(&mut grads, *x, dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &nodes[*x].value;
                    let dx = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(gi, v)| if *v > *lo && *v < *hi { *gi } else { 0.0 })
                            .collect(),
                    );
                    accumulate(&mut grads, *x, dx);
                }
            }
        }

        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, contribution: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign_scaled(&contribution, 1.0),
        slot @ None => *slot = Some(contribution),
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients produced by one reverse pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward target with respect to `v`. Nodes the
    /// target does not depend on get an all-zero gradient.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.id()].clone().unwrap_or_else(|| Tensor::zeros(v.rows(), v.cols()))
    }
}
