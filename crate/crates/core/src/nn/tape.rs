//! Reverse-mode differentiation over a recorded sequence of matrix ops.
//!
//! Every value is a row-major `rows x cols` matrix; vectors are single rows
//! and scalars are `1 x 1`. Ops append nodes, `backward` walks them in
//! reverse.

use crate::scalar::Real;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Variance stabilizer inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        alpha: Var,
        delta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanSquare(Var),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    tracked: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`; handles to dropped
    /// nodes become invalid. Lets a caller keep bound parameters and reuse
    /// the tape across forward passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, tracked: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Input matrix. Gradients are accumulated for it only if `requires_grad`.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<T>, requires_grad: bool) -> Var {
        assert_eq!(value.len(), rows * cols, "leaf value length");
        self.push(rows, cols, value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<T>) -> Var {
        self.leaf(rows, cols, value, false)
    }

    pub fn row_vector(&mut self, value: Vec<T>, requires_grad: bool) -> Var {
        let n = value.len();
        self.leaf(1, n, value, requires_grad)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn scalar(&self, v: Var) -> T {
        assert_eq!(self.shape(v), (1, 1), "not a scalar");
        self.nodes[v.0].value[0]
    }

    pub fn row(&self, v: Var, r: usize) -> &[T] {
        let c = self.nodes[v.0].cols;
        &self.nodes[v.0].value[r * c..(r + 1) * c]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let mut out = vec![T::zero(); n * m];
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o = *o + x * y;
                }
            }
        }
        let t = self.tracked(a) || self.tracked(b);
        self.push(n, m, out, Op::MatMul(a, b), t)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dimensions {k} vs {k2}");
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bv[j * k..(j + 1) * k];
                out.push(arow.iter().zip(brow).map(|(&x, &y)| x * y).fold(T::zero(), |s, v| s + v));
            }
        }
        let t = self.tracked(a) || self.tracked(b);
        self.push(n, m, out, Op::MatMulT(a, b), t)
    }

    /// Adds a `1 x cols` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (n, m) = self.shape(x);
        assert_eq!(self.shape(row), (1, m), "broadcast row shape");
        let rv = &self.nodes[row.0].value;
        let out: Vec<T> = self.nodes[x.0]
            .value
            .iter()
            .enumerate()
            .map(|(i, &v)| v + rv[i % m])
            .collect();
        let t = self.tracked(x) || self.tracked(row);
        self.push(n, m, out, Op::AddRow(x, row), t)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let s = self.shape(a);
        assert_eq!(s, self.shape(b), "elementwise shape mismatch");
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = self.tracked(a) || self.tracked(b);
        self.push(s.0, s.1, out, op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let (n, m) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&v| v * k).collect();
        let t = self.tracked(a);
        self.push(n, m, out, Op::Scale(a, k), t)
    }

    /// `max(0, x)`; the derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let out = self.nodes[a.0]
            .value
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let t = self.tracked(a);
        self.push(n, m, out, Op::Relu(a), t)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut out = self.nodes[a.0].value.clone();
        for row in out.chunks_mut(m) {
            softmax_in_place(row);
        }
        let t = self.tracked(a);
        self.push(n, m, out, Op::SoftmaxRows(a), t)
    }

    /// Per-row standardization with population statistics, then
    /// `* alpha + delta` (both `1 x cols`).
    pub fn layer_norm(&mut self, x: Var, alpha: Var, delta: Var) -> Var {
        let (n, m) = self.shape(x);
        assert_eq!(self.shape(alpha), (1, m));
        assert_eq!(self.shape(delta), (1, m));
        let eps = T::lit(LAYER_NORM_EPS);
        let mm = T::from_usize_lossy(m);
        let xv = &self.nodes[x.0].value;
        let (av, dv) = (&self.nodes[alpha.0].value, &self.nodes[delta.0].value);
        let mut xhat = Vec::with_capacity(n * m);
        let mut inv_std = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n * m);
        for row in xv.chunks(m) {
            let mean = row.iter().copied().sum::<T>() / mm;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mm;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * av[j] + dv[j]);
            }
        }
        let t = self.tracked(x) || self.tracked(alpha) || self.tracked(delta);
        self.push(
            n,
            m,
            out,
            Op::LayerNorm {
                x,
                alpha,
                delta,
                xhat,
                inv_std,
            },
            t,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= n && len > 0, "row slice out of range");
        let out = self.nodes[a.0].value[start * m..(start + len) * m].to_vec();
        let t = self.tracked(a);
        self.push(len, m, out, Op::SliceRows(a, start), t)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= m && len > 0, "column slice out of range");
        let src = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&src[i * m + start..i * m + start + len]);
        }
        let t = self.tracked(a);
        self.push(n, len, out, Op::SliceCols(a, start), t)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.shape(parts[0]).1;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, m, "concat_rows column mismatch");
            out.extend_from_slice(&self.nodes[p.0].value);
            n += r;
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(n, m, out, Op::ConcatRows(parts.to_vec()), t)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.shape(p).0, n, "concat_cols row mismatch");
                self.shape(p).1
            })
            .collect();
        let m: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value[i * w..(i + 1) * w]);
            }
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(n, m, out, Op::ConcatCols(parts.to_vec()), t)
    }

    /// Mean of squared entries, as a scalar.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.iter().map(|&x| x * x).sum::<T>() / T::from_usize_lossy(v.len());
        let t = self.tracked(a);
        self.push(1, 1, vec![s], Op::MeanSquare(a), t)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().copied().sum::<T>();
        let t = self.tracked(a);
        self.push(1, 1, vec![s], Op::Sum(a), t)
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            if node.tracked {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (n, m) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (_, k) = self.shape(*a);
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let ga = acc(grads, *a, n * k);
                    for i in 0..n {
                        for p in 0..k {
                            let mut s = T::zero();
                            for j in 0..m {
                                s = s + g[i * m + j] * bv[p * m + j];
                            }
                            ga[i * k + p] = ga[i * k + p] + s;
                        }
                    }
                }
                if self.tracked(*b) {
                    let gb = acc(grads, *b, k * m);
                    for i in 0..n {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            let grow = &g[i * m..(i + 1) * m];
                            for (o, &y) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o = *o + x * y;
                            }
                        }
                    }
                }
            }
            Op::MatMulT(a, b) => {
                let (_, k) = self.shape(*a);
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let ga = acc(grads, *a, n * k);
                    for i in 0..n {
                        for j in 0..m {
                            let w = g[i * m + j];
                            for p in 0..k {
                                ga[i * k + p] = ga[i * k + p] + w * bv[j * k + p];
                            }
                        }
                    }
                }
                if self.tracked(*b) {
                    let gb = acc(grads, *b, m * k);
                    for i in 0..n {
                        for j in 0..m {
                            let w = g[i * m + j];
                            for p in 0..k {
                                gb[j * k + p] = gb[j * k + p] + w * av[i * k + p];
                            }
                        }
                    }
                }
            }
            Op::AddRow(x, row) => {
                if self.tracked(*x) {
                    add_into(acc(grads, *x, n * m), g);
                }
                if self.tracked(*row) {
                    let gr = acc(grads, *row, m);
                    for (i, &v) in g.iter().enumerate() {
                        gr[i % m] = gr[i % m] + v;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.tracked(v) {
                        add_into(acc(grads, v, n * m), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.tracked(*a) {
                    add_into(acc(grads, *a, n * m), g);
                }
                if self.tracked(*b) {
                    let gb = acc(grads, *b, n * m);
                    gb.iter_mut().zip(g).for_each(|(o, &v)| *o = *o - v);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).to_vec(), self.value(*b).to_vec());
                if self.tracked(*a) {
                    let ga = acc(grads, *a, n * m);
                    for i in 0..n * m {
                        ga[i] = ga[i] + g[i] * bv[i];
                    }
                }
                if self.tracked(*b) {
                    let gb = acc(grads, *b, n * m);
                    for i in 0..n * m {
                        gb[i] = gb[i] + g[i] * av[i];
                    }
                }
            }
            Op::Scale(a, k) => {
                let ga = acc(grads, *a, n * m);
                ga.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v * *k);
            }
            Op::Relu(a) => {
                let ga = acc(grads, *a, n * m);
                for ((o, &v), &y) in ga.iter_mut().zip(g).zip(&node.value) {
                    if y > T::zero() {
                        *o = *o + v;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let ga = acc(grads, *a, n * m);
                for r in 0..n {
                    let y = &node.value[r * m..(r + 1) * m];
                    let gy = &g[r * m..(r + 1) * m];
                    let dot = y.iter().zip(gy).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..m {
                        ga[r * m + j] = ga[r * m + j] + y[j] * (gy[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                alpha,
                delta,
                xhat,
                inv_std,
            } => {
                let av = self.value(*alpha).to_vec();
                if self.tracked(*alpha) {
                    let gal = acc(grads, *alpha, m);
                    for (i, &v) in g.iter().enumerate() {
                        gal[i % m] = gal[i % m] + v * xhat[i];
                    }
                }
                if self.tracked(*delta) {
                    let gd = acc(grads, *delta, m);
                    for (i, &v) in g.iter().enumerate() {
                        gd[i % m] = gd[i % m] + v;
                    }
                }
                if self.tracked(*x) {
                    let mm = T::from_usize_lossy(m);
                    let gx = acc(grads, *x, n * m);
                    for r in 0..n {
                        let dh: Vec<T> = (0..m).map(|j| g[r * m + j] * av[j]).collect();
                        let h = &xhat[r * m..(r + 1) * m];
                        let sum_dh = dh.iter().copied().sum::<T>();
                        let sum_dh_h = dh.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>();
                        for j in 0..m {
                            let v = inv_std[r] / mm * (mm * dh[j] - sum_dh - h[j] * sum_dh_h);
                            gx[r * m + j] = gx[r * m + j] + v;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let (_, am) = self.shape(*a);
                let total = self.shape(*a).0 * am;
                let ga = acc(grads, *a, total);
                add_into(&mut ga[start * am..start * am + n * m], g);
            }
            Op::SliceCols(a, start) => {
                let (an, am) = self.shape(*a);
                let ga = acc(grads, *a, an * am);
                for i in 0..n {
                    add_into(&mut ga[i * am + start..i * am + start + m], &g[i * m..(i + 1) * m]);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.tracked(p) {
                        add_into(acc(grads, p, len), &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for &p in parts {
                    let (pn, pw) = self.shape(p);
                    if self.tracked(p) {
                        let gp = acc(grads, p, pn * pw);
                        for i in 0..n {
                            add_into(&mut gp[i * pw..(i + 1) * pw], &g[i * m + col..i * m + col + pw]);
                        }
                    }
                    col += pw;
                }
            }
            Op::MeanSquare(a) => {
                let av = self.value(*a);
                let k = g[0] * T::lit(2.0) / T::from_usize_lossy(av.len());
                let ga = acc(grads, *a, av.len());
                ga.iter_mut().zip(av).for_each(|(o, &x)| *o = *o + k * x);
            }
            Op::Sum(a) => {
                let len = self.value(*a).len();
                let ga = acc(grads, *a, len);
                ga.iter_mut().for_each(|o| *o = *o + g[0]);
            }
        }
    }
}

fn acc<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / total);
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`, or `None` when nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![T::zero(); len])
    }
}
