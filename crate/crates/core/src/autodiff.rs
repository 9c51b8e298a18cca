//! Minimal reverse-mode automatic differentiation over 2-D arrays.
//!
//! A [`Tape`] records every operation eagerly; [`Tape::backward`] walks it in
//! reverse and returns gradients for every node that depends on a parameter.
//! Only the operations the encoder, decoder and policy networks need are
//! provided.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::scalar::{sorted_sum, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxCols(Var),
    LayerNormRows { x: Var, inv_std: Array1<T> },
    NormalizeRows { x: Var, sums: Array1<T> },
    RepeatRows(Var, usize),
    TileRows(Var),
    Reshape(Var),
    MixSlots { alpha: Var, feats: Var },
    Mse { pred: Var, target: Array2<T> },
    ExpectileMean { u: Var, tau: T },
    WeightedSqError { pred: Var, target: Array2<T>, weights: Array1<T> },
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<T> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
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

    fn push(&mut self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// `a + row` with `row` of shape `1 × cols` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) + self.value(row);
        let ng = self.ng(&[a, row]);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) * self.value(row);
        let ng = self.ng(&[a, row]);
        self.push(out, Op::MulRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).mapv(|v| v * c);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.ng(&[a]);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| T::one() / (T::one() + (-v).exp()));
        let ng = self.ng(&[a]);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.tanh());
        let ng = self.ng(&[a]);
        self.push(out, Op::Tanh(a), ng)
    }

    /// Softmax down each column (over the row axis).
    pub fn softmax_cols(&mut self, a: Var) -> Var {
        let out = softmax_cols(self.value(a));
        let ng = self.ng(&[a]);
        self.push(out, Op::SoftmaxCols(a), ng)
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var, eps: T) -> Var {
        let x = self.value(a);
        let d = T::from_len(x.ncols());
        let mut out = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in out.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.iter().fold(T::zero(), |acc, &v| acc + v) / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().fold(T::zero(), |acc, &v| acc + v * v) / d;
            let is = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * is);
            *s = is;
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::LayerNormRows { x: a, inv_std }, ng)
    }

    /// `(x + eps) / Σ_row (x + eps)` per row.
    pub fn normalize_rows(&mut self, a: Var, eps: T) -> Var {
        let mut out = self.value(a).mapv(|v| v + eps);
        let sums = out.sum_axis(Axis(1));
        for (mut row, &s) in out.rows_mut().into_iter().zip(sums.iter()) {
            row.mapv_inplace(|v| v / s);
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::NormalizeRows { x: a, sums }, ng)
    }

    /// Each row of `a` repeated `n` times consecutively: row `i*n + j` is `a[i]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let (r, c) = x.dim();
        let out = Array2::from_shape_fn((r * n, c), |(i, j)| x[[i / n, j]]);
        let ng = self.ng(&[a]);
        self.push(out, Op::RepeatRows(a, n), ng)
    }

    /// `a` stacked `n` times: row `k*rows + i` is `a[i]`.
    pub fn tile_rows(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let (r, c) = x.dim();
        let out = Array2::from_shape_fn((r * n, c), |(i, j)| x[[i % r, j]]);
        let ng = self.ng(&[a]);
        self.push(out, Op::TileRows(a), ng)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape size mismatch");
        let out = Array2::from_shape_vec((rows, cols), x.iter().copied().collect()).unwrap();
        let ng = self.ng(&[a]);
        self.push(out, Op::Reshape(a), ng)
    }

    /// Alpha-weighted mixture over slots.
    ///
    /// `alpha` is `n × l`, `feats` is `(n·l) × d` with slot-major rows;
    /// returns `l × d` with `out[p] = Σ_k alpha[k, p] · feats[k·l + p]`.
    pub fn mix_slots(&mut self, alpha: Var, feats: Var) -> Var {
        let a = self.value(alpha);
        let f = self.value(feats);
        let (n, l) = a.dim();
        let d = f.ncols();
        assert_eq!(f.nrows(), n * l, "mix_slots row mismatch");
        let mut out = Array2::zeros((l, d));
        for k in 0..n {
            let block = f.slice(ndarray::s![k * l..(k + 1) * l, ..]);
            Zip::from(out.rows_mut())
                .and(block.rows())
                .and(a.row(k))
                .for_each(|mut o, fr, &w| o.scaled_add(w, &fr));
        }
        let ng = self.ng(&[alpha, feats]);
        self.push(out, Op::MixSlots { alpha, feats }, ng)
    }

    /// Mean squared error against a constant target; returns a `1 × 1` node.
    pub fn mse(&mut self, pred: Var, target: &Array2<T>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.dim(), target.dim(), "mse shape mismatch");
        let n = T::from_len(p.len());
        let loss = Zip::from(p)
            .and(target)
            .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b))
            / n;
        let ng = self.ng(&[pred]);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            ng,
        )
    }

    /// Mean of `|tau - 1[u < 0]| · u²` over all entries of `u`.
    pub fn expectile_mean(&mut self, u: Var, tau: T) -> Var {
        let x = self.value(u);
        let n = T::from_len(x.len());
        let loss = x
            .iter()
            .fold(T::zero(), |acc, &v| acc + expectile_weight(v, tau) * v * v)
            / n;
        let ng = self.ng(&[u]);
        self.push(Array2::from_elem((1, 1), loss), Op::ExpectileMean { u, tau }, ng)
    }

    /// `(1 / (rows·cols)) Σ_i w_i Σ_j (pred_ij - target_ij)²`
    pub fn weighted_sq_error(&mut self, pred: Var, target: &Array2<T>, weights: &Array1<T>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.dim(), target.dim());
        assert_eq!(p.nrows(), weights.len());
        let n = T::from_len(p.len());
        let mut loss = T::zero();
        for ((pr, tr), &w) in p.rows().into_iter().zip(target.rows()).zip(weights.iter()) {
            let s = Zip::from(pr)
                .and(tr)
                .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b));
            loss = loss + w * s;
        }
        let ng = self.ng(&[pred]);
        self.push(
            Array2::from_elem((1, 1), loss / n),
            Op::WeightedSqError {
                pred,
                target: target.clone(),
                weights: weights.clone(),
            },
            ng,
        )
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[[0, 0]]
    }

    /// Reverse pass from a scalar (`1 × 1`) node.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar loss");
        grads[loss.0] = Some(Array2::from_elem((1, 1), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let d = g.dot(&self.value(*b).t());
                        self.acc(&mut grads, *a, d);
                    }
                    if self.nodes[b.0].needs_grad {
                        let d = self.value(*a).t().dot(&g);
                        self.acc(&mut grads, *b, d);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let d = g.dot(self.value(*b));
                        self.acc(&mut grads, *a, d);
                    }
                    if self.nodes[b.0].needs_grad {
                        let d = g.t().dot(self.value(*a));
                        self.acc(&mut grads, *b, d);
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *b, g.clone());
                    self.acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *b, g.mapv(|v| -v));
                    self.acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    self.acc(&mut grads, *a, &g * self.value(*b));
                    self.acc(&mut grads, *b, &g * self.value(*a));
                }
                Op::AddRow(a, row) => {
                    self.acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    self.acc(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    if self.nodes[row.0].needs_grad {
                        let d = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.acc(&mut grads, *row, d);
                    }
                    self.acc(&mut grads, *a, &g * self.value(*row));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    self.acc(&mut grads, *a, g.mapv(|v| v * c));
                }
                Op::Relu(a) => {
                    let d = Zip::from(&g)
                        .and(y)
                        .map_collect(|&g, &y| if y > T::zero() { g } else { T::zero() });
                    self.acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = Zip::from(&g)
                        .and(y)
                        .map_collect(|&g, &y| g * y * (T::one() - y));
                    self.acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = Zip::from(&g)
                        .and(y)
                        .map_collect(|&g, &y| g * (T::one() - y * y));
                    self.acc(&mut grads, *a, d);
                }
                Op::SoftmaxCols(a) => {
                    let mut d = &g * y;
                    let dots = d.sum_axis(Axis(0));
                    Zip::from(&mut d)
                        .and(y)
                        .and_broadcast(&dots.insert_axis(Axis(0)))
                        .for_each(|d, &y, &s| *d = *d - y * s);
                    self.acc(&mut grads, *a, d);
                }
                Op::LayerNormRows { x, inv_std } => {
                    let d_cols = T::from_len(y.ncols());
                    let mut d = g.clone();
                    for ((mut dr, yr), &is) in d.rows_mut().into_iter().zip(y.rows()).zip(inv_std.iter()) {
                        let mean_g = dr.iter().fold(T::zero(), |acc, &v| acc + v) / d_cols;
                        let mean_gy = Zip::from(&dr)
                            .and(&yr)
                            .fold(T::zero(), |acc, &a, &b| acc + a * b)
                            / d_cols;
                        Zip::from(&mut dr)
                            .and(&yr)
                            .for_each(|dv, &yv| *dv = is * (*dv - mean_g - yv * mean_gy));
                    }
                    self.acc(&mut grads, *x, d);
                }
                Op::NormalizeRows { x, sums } => {
                    let mut d = g.clone();
                    for ((mut dr, yr), &s) in d.rows_mut().into_iter().zip(y.rows()).zip(sums.iter()) {
                        let dot = Zip::from(&dr)
                            .and(&yr)
                            .fold(T::zero(), |acc, &a, &b| acc + a * b);
                        dr.mapv_inplace(|v| (v - dot) / s);
                    }
                    self.acc(&mut grads, *x, d);
                }
                Op::RepeatRows(a, n) => {
                    let (r, c) = self.value(*a).dim();
                    let mut d = Array2::zeros((r, c));
                    for (i, gr) in g.rows().into_iter().enumerate() {
                        let mut dr = d.row_mut(i / n);
                        dr += &gr;
                    }
                    self.acc(&mut grads, *a, d);
                }
                Op::TileRows(a) => {
                    let (r, c) = self.value(*a).dim();
                    let mut d = Array2::zeros((r, c));
                    for (i, gr) in g.rows().into_iter().enumerate() {
                        let mut dr = d.row_mut(i % r);
                        dr += &gr;
                    }
                    self.acc(&mut grads, *a, d);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).dim();
                    let d = Array2::from_shape_vec(shape, g.iter().copied().collect()).unwrap();
                    self.acc(&mut grads, *a, d);
                }
                Op::MixSlots { alpha, feats } => {
                    let av = self.value(*alpha);
                    let fv = self.value(*feats);
                    let (n, l) = av.dim();
                    if self.nodes[alpha.0].needs_grad {
                        let mut da = Array2::zeros((n, l));
                        for k in 0..n {
                            for p in 0..l {
                                da[[k, p]] = g.row(p).dot(&fv.row(k * l + p));
                            }
                        }
                        self.acc(&mut grads, *alpha, da);
                    }
                    if self.nodes[feats.0].needs_grad {
                        let mut df = Array2::zeros(fv.dim());
                        for k in 0..n {
                            for p in 0..l {
                                let w = av[[k, p]];
                                let mut row = df.row_mut(k * l + p);
                                row.scaled_add(w, &g.row(p));
                            }
                        }
                        self.acc(&mut grads, *feats, df);
                    }
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let c = g[[0, 0]] * T::lit(2.0) / T::from_len(p.len());
                    let d = Zip::from(p).and(target).map_collect(|&a, &b| c * (a - b));
                    self.acc(&mut grads, *pred, d);
                }
                Op::ExpectileMean { u, tau } => {
                    let x = self.value(*u);
                    let c = g[[0, 0]] * T::lit(2.0) / T::from_len(x.len());
                    let d = x.mapv(|v| c * expectile_weight(v, *tau) * v);
                    self.acc(&mut grads, *u, d);
                }
                Op::WeightedSqError {
                    pred,
                    target,
                    weights,
                } => {
                    let p = self.value(*pred);
                    let c = g[[0, 0]] * T::lit(2.0) / T::from_len(p.len());
                    let mut d = p - target;
                    for (mut row, &w) in d.rows_mut().into_iter().zip(weights.iter()) {
                        row.mapv_inplace(|v| c * w * v);
                    }
                    self.acc(&mut grads, *pred, d);
                }
            }
        }
        Grads { grads }
    }

    fn acc(&self, grads: &mut [Option<Array2<T>>], v: Var, d: Array2<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => *g += &d,
            slot @ None => *slot = Some(d),
        }
    }
}

/// Asymmetric weight `|tau - 1[u < 0]|` of the expectile loss.
#[inline]
pub fn expectile_weight<T: Real>(u: T, tau: T) -> T {
    if u < T::zero() {
        T::one() - tau
    } else {
        tau
    }
}

/// Column-wise softmax with an order-independent normalizer, so permuting
/// rows of the input permutes rows of the output bit-for-bit.
pub fn softmax_cols<T: Real>(x: &Array2<T>) -> Array2<T> {
    let mut out = x.clone();
    let mut buf = Vec::with_capacity(x.nrows());
    for mut col in out.columns_mut() {
        let max = col.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        buf.clear();
        buf.extend(col.iter().copied());
        let s = sorted_sum(&mut buf);
        col.mapv_inplace(|v| v / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn rand_arr(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of d(loss)/d(param) for a graph builder.
    fn check<F>(shape: (usize, usize), seed: u64, build: F)
    where
        F: Fn(&mut Tape<f64>, Var) -> Var,
    {
        let x0 = rand_arr(shape.0, shape.1, seed);
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let loss = build(&mut tape, x);
        let g = tape.backward(loss).get_or_zeros(x, shape);
        let h = 1e-5;
        for idx in 0..x0.len() {
            let (i, j) = (idx / shape.1, idx % shape.1);
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp[[i, j]] += delta;
                let mut t = Tape::new();
                let v = t.param(xp);
                let l = build(&mut t, v);
                t.scalar(l)
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (num - g[[i, j]]).abs() / num.abs().max(g[[i, j]].abs()).max(1e-6);
            assert!(err < 1e-5, "grad mismatch at ({i},{j}): {num} vs {}", g[[i, j]]);
        }
    }

    #[test]
    fn grad_matmul_chain() {
        let w = rand_arr(4, 3, 9);
        let t = rand_arr(5, 3, 10);
        check((5, 4), 1, |tape, x| {
            let wv = tape.constant(w.clone());
            let y = tape.matmul(x, wv);
            let y = tape.tanh(y);
            tape.mse(y, &t)
        });
        let a = rand_arr(3, 4, 11);
        check((5, 4), 2, |tape, x| {
            let av = tape.constant(a.clone());
            let y = tape.matmul_t(x, av);
            let y = tape.sigmoid(y);
            tape.mse(y, &Array2::zeros((5, 3)))
        });
    }

    #[test]
    fn grad_normalizers() {
        let t = rand_arr(4, 6, 12);
        check((4, 6), 3, |tape, x| {
            let y = tape.softmax_cols(x);
            tape.mse(y, &t)
        });
        check((4, 6), 4, |tape, x| {
            let y = tape.layer_norm_rows(x, 1e-5);
            tape.mse(y, &t)
        });
        check((4, 6), 5, |tape, x| {
            let y = tape.sigmoid(x);
            let y = tape.normalize_rows(y, 1e-8);
            tape.mse(y, &t)
        });
    }

    #[test]
    fn grad_broadcast_and_mix() {
        let t = rand_arr(3, 2, 13);
        let pos = rand_arr(3, 2, 14);
        check((2, 2), 6, |tape, x| {
            let p = tape.constant(pos.clone());
            let rep = tape.repeat_rows(x, 3);
            let til = tape.tile_rows(p, 2);
            let h = tape.add(rep, til);
            let h = tape.mul(h, h);
            let logits = tape.reshape(h, 2, 6);
            let logits = tape.scale(logits, 0.5);
            let alpha = tape.softmax_cols(logits);
            let alpha = tape.reshape(alpha, 2, 6);
            let feats = tape.reshape(alpha, 6, 2);
            let mix_alpha = tape.constant(rand_arr(2, 3, 15).mapv(f64::abs));
            let m = tape.mix_slots(mix_alpha, feats);
            tape.mse(m, &t)
        });
        let feats = rand_arr(6, 2, 16);
        check((2, 3), 7, |tape, x| {
            let f = tape.constant(feats.clone());
            let a = tape.softmax_cols(x);
            let m = tape.mix_slots(a, f);
            tape.mse(m, &t)
        });
    }

    #[test]
    fn grad_rows_and_losses() {
        let b = rand_arr(1, 3, 17);
        let tgt = rand_arr(4, 3, 18);
        let w = Array1::from(vec![0.5, 2.0, 1.0, 3.0]);
        check((4, 3), 8, |tape, x| {
            let bv = tape.constant(b.clone());
            let y = tape.add_row(x, bv);
            let y = tape.mul_row(y, bv);
            let y = tape.relu(y);
            tape.weighted_sq_error(y, &tgt, &w)
        });
        check((1, 3), 19, |tape, x| {
            let a = tape.constant(tgt.clone());
            let y = tape.mul_row(a, x);
            let y2 = tape.add_row(a, x);
            let y = tape.sub(y, y2);
            tape.mse(y, &Array2::zeros((4, 3)))
        });
        check((5, 1), 20, |tape, x| tape.expectile_mean(x, 0.8));
    }

    #[test]
    fn softmax_cols_sums_to_one() {
        let x = rand_arr(7, 5, 21).mapv(|v| v * 30.0);
        let y = softmax_cols(&x);
        for c in y.columns() {
            assert!((c.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(rand_arr(2, 2, 1));
        let p = tape.param(rand_arr(2, 2, 2));
        let y = tape.matmul(c, p);
        let l = tape.mse(y, &Array2::zeros((2, 2)));
        let g = tape.backward(l);
        assert!(g.get(c).is_none());
        assert!(g.get(p).is_some());
    }
}
