//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products into the inputs that require a gradient.
//! Constants and nodes computed only from constants never receive gradients,
//! so a frozen sub-network costs a forward pass only.

use super::tensor::{conv_backward, conv_forward, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Sinh,
    Asinh,
    /// `ln cosh(v)`, evaluated stably.
    LogCosh,
    /// `0.5 * ln(1 + v^2)`.
    HalfLog1pSq,
    Square,
}

impl Unary {
    fn apply(self, v: f64) -> f64 {
        match self {
            Unary::Tanh => v.tanh(),
            Unary::Sigmoid => sigmoid(v),
            Unary::Exp => v.exp(),
            Unary::Sinh => v.sinh(),
            Unary::Asinh => v.asinh(),
            Unary::LogCosh => log_cosh(v),
            Unary::HalfLog1pSq => 0.5 * (v * v).ln_1p(),
            Unary::Square => v * v,
        }
    }

    /// Derivative given input `v` and output `y`.
    fn deriv(self, v: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::Sinh => v.cosh(),
            Unary::Asinh => 1.0 / (1.0 + v * v).sqrt(),
            Unary::LogCosh => v.tanh(),
            Unary::HalfLog1pSq => v / (1.0 + v * v),
            Unary::Square => 2.0 * v,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn log_cosh(v: f64) -> f64 {
    let a = v.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        taps: usize,
        dilation: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Unary(Var, Unary),
    Scale(Var, f64),
    Offset(Var),
    /// `gamma[r] * x[r, c] + beta[r]`
    ChannelAffine {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    /// `w x + b` with `x` a vector.
    Linear {
        w: Var,
        x: Var,
        b: Var,
    },
    SuffixCols {
        x: Var,
        start: usize,
    },
    Column {
        x: Var,
        col: usize,
    },
    Index {
        x: Var,
        i: usize,
    },
    Slice {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Sum(Var),
    /// Scalar with externally supplied gradient with respect to each input.
    External {
        inputs: Vec<Var>,
        grads: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// influence the root or does not require a gradient.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
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

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.len(), 1);
        t.data[0]
    }

    /// Causal dilated convolution of `x` (`cin x n`) with `w`
    /// (`cout x cin*taps`), producing the last `out_len` columns.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, taps: usize, dilation: usize, out_len: usize) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let cin = xv.rows;
        let cout = wv.rows;
        assert_eq!(wv.cols, cin * taps, "kernel/input channel mismatch");
        assert!(out_len <= xv.cols);
        let bias = b.map(|b| self.value(b).data.as_slice());
        let y = conv_forward(&xv.data, xv.cols, &wv.data, bias, cout, cin, taps, dilation, out_len);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(
            Tensor::new(cout, out_len, y),
            Op::Conv {
                x,
                w,
                b,
                taps,
                dilation,
            },
            rg,
        )
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((av.rows, av.cols), (bv.rows, bv.cols), "shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(av.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let av = self.value(a);
        let data = av.data.iter().map(|&v| f.apply(v)).collect();
        let t = Tensor::new(av.rows, av.cols, data);
        let rg = self.rg(a);
        self.push(t, Op::Unary(a, f), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let t = Tensor::new(av.rows, av.cols, av.data.iter().map(|v| v * c).collect());
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// `a + c` elementwise for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let t = Tensor::new(av.rows, av.cols, av.data.iter().map(|v| v + c).collect());
        let rg = self.rg(a);
        self.push(t, Op::Offset(a), rg)
    }

    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        assert_eq!(gv.len(), xv.rows);
        assert_eq!(bv.len(), xv.rows);
        let mut t = xv.clone();
        for r in 0..t.rows {
            let (g, b) = (gv.data[r], bv.data[r]);
            t.row_mut(r).iter_mut().for_each(|v| *v = g * *v + b);
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(t, Op::ChannelAffine { x, gamma, beta }, rg)
    }

    pub fn linear(&mut self, w: Var, x: Var, b: Var) -> Var {
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        assert_eq!(wv.cols, xv.len(), "linear input size");
        assert_eq!(wv.rows, bv.len(), "linear bias size");
        let data = (0..wv.rows)
            .map(|r| bv.data[r] + wv.row(r).iter().zip(&xv.data).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let rg = self.rg(w) || self.rg(x) || self.rg(b);
        self.push(Tensor::vector(data), Op::Linear { w, x, b }, rg)
    }

    /// Columns `start..` of `x`.
    pub fn suffix_cols(&mut self, x: Var, start: usize) -> Var {
        let xv = self.value(x);
        if start == 0 {
            return x;
        }
        let cols = xv.cols - start;
        let mut data = Vec::with_capacity(xv.rows * cols);
        for r in 0..xv.rows {
            data.extend_from_slice(&xv.row(r)[start..]);
        }
        let rg = self.rg(x);
        self.push(Tensor::new(xv.rows, cols, data), Op::SuffixCols { x, start }, rg)
    }

    pub fn column(&mut self, x: Var, col: usize) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows).map(|r| xv.get(r, col)).collect();
        let rg = self.rg(x);
        self.push(Tensor::vector(data), Op::Column { x, col }, rg)
    }

    pub fn index(&mut self, x: Var, i: usize) -> Var {
        let v = self.value(x).data[i];
        let rg = self.rg(x);
        self.push(Tensor::scalar(v), Op::Index { x, i }, rg)
    }

    /// Elements `start..start + len` of the flattened `x`, as a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let data = self.value(x).data[start..start + len].to_vec();
        let rg = self.rg(x);
        self.push(Tensor::vector(data), Op::Slice { x, start }, rg)
    }

    /// Stacks the values of `parts` into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&self.value(*p).data);
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Scalar node whose gradient with respect to `inputs[i]` is `grads[i]`.
    pub fn external(&mut self, value: f64, inputs: &[Var], grads: Vec<Vec<f64>>) -> Var {
        assert_eq!(inputs.len(), grads.len());
        for (v, g) in inputs.iter().zip(&grads) {
            assert_eq!(self.value(*v).len(), g.len());
        }
        let rg = inputs.iter().any(|p| self.rg(*p));
        self.push(
            Tensor::scalar(value),
            Op::External {
                inputs: inputs.to_vec(),
                grads,
            },
            rg,
        )
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
        }
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                x,
                w,
                b,
                taps,
                dilation,
            } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                let out_len = node.value.cols;
                let mut dx = wants(*x).then(|| vec![0.0; xv.len()]);
                let mut dw = wants(*w).then(|| vec![0.0; wv.len()]);
                let mut db = b.filter(|b| wants(*b)).map(|b| vec![0.0; nodes[b.0].value.len()]);
                conv_backward(
                    &xv.data,
                    xv.cols,
                    &wv.data,
                    g,
                    wv.rows,
                    xv.rows,
                    *taps,
                    *dilation,
                    out_len,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                for (v, d) in [(Some(*x), dx), (Some(*w), dw), (*b, db)] {
                    if let (Some(v), Some(d)) = (v, d) {
                        add_into(slot(grads, nodes, v), &d);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        add_into(slot(grads, nodes, v), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    add_into(slot(grads, nodes, *a), g);
                }
                if wants(*b) {
                    let s = slot(grads, nodes, *b);
                    s.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                if wants(*a) {
                    let s = slot(grads, nodes, *a);
                    for i in 0..g.len() {
                        s[i] += g[i] * bv[i];
                    }
                }
                if wants(*b) {
                    let s = slot(grads, nodes, *b);
                    for i in 0..g.len() {
                        s[i] += g[i] * av[i];
                    }
                }
            }
            Op::Unary(a, f) => {
                let av = &nodes[a.0].value.data;
                let yv = &node.value.data;
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    s[i] += g[i] * f.deriv(av[i], yv[i]);
                }
            }
            Op::Scale(a, c) => {
                let s = slot(grads, nodes, *a);
                s.iter_mut().zip(g).for_each(|(d, gi)| *d += c * gi);
            }
            Op::Offset(a) => add_into(slot(grads, nodes, *a), g),
            Op::ChannelAffine { x, gamma, beta } => {
                let xv = &nodes[x.0].value;
                let gv = &nodes[gamma.0].value.data;
                let cols = xv.cols;
                if wants(*x) {
                    let s = slot(grads, nodes, *x);
                    for r in 0..xv.rows {
                        for c in 0..cols {
                            s[r * cols + c] += gv[r] * g[r * cols + c];
                        }
                    }
                }
                if wants(*gamma) {
                    let s = slot(grads, nodes, *gamma);
                    for r in 0..xv.rows {
                        s[r] += (0..cols).map(|c| g[r * cols + c] * xv.data[r * cols + c]).sum::<f64>();
                    }
                }
                if wants(*beta) {
                    let s = slot(grads, nodes, *beta);
                    for r in 0..xv.rows {
                        s[r] += g[r * cols..(r + 1) * cols].iter().sum::<f64>();
                    }
                }
            }
            Op::Linear { w, x, b } => {
                let wv = &nodes[w.0].value;
                let xv = &nodes[x.0].value.data;
                if wants(*w) {
                    let s = slot(grads, nodes, *w);
                    for r in 0..wv.rows {
                        for c in 0..wv.cols {
                            s[r * wv.cols + c] += g[r] * xv[c];
                        }
                    }
                }
                if wants(*x) {
                    let s = slot(grads, nodes, *x);
                    for r in 0..wv.rows {
                        for c in 0..wv.cols {
                            s[c] += g[r] * wv.data[r * wv.cols + c];
                        }
                    }
                }
                if wants(*b) {
                    add_into(slot(grads, nodes, *b), g);
                }
            }
            Op::SuffixCols { x, start } => {
                let xv = &nodes[x.0].value;
                let cols = node.value.cols;
                let s = slot(grads, nodes, *x);
                for r in 0..xv.rows {
                    for c in 0..cols {
                        s[r * xv.cols + start + c] += g[r * cols + c];
                    }
                }
            }
            Op::Column { x, col } => {
                let xc = nodes[x.0].value.cols;
                let s = slot(grads, nodes, *x);
                for (r, gi) in g.iter().enumerate() {
                    s[r * xc + col] += gi;
                }
            }
            Op::Index { x, i } => slot(grads, nodes, *x)[*i] += g[0],
            Op::Slice { x, start } => add_into(&mut slot(grads, nodes, *x)[*start..*start + g.len()], g),
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = nodes[p.0].value.len();
                    if wants(*p) {
                        add_into(slot(grads, nodes, *p), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::Sum(a) => {
                let s = slot(grads, nodes, *a);
                s.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::External { inputs, grads: local } => {
                for (v, lg) in inputs.iter().zip(local) {
                    if wants(*v) {
                        let s = slot(grads, nodes, *v);
                        s.iter_mut().zip(lg).for_each(|(d, l)| *d += g[0] * l);
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
