//! Scalar reference implementations for tests.
//!
//! Everything here is plain `f64` over nested `Vec`s, written for clarity
//! rather than speed, and shares no code with the production crates.

pub type Matrix = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Matrix {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    let mut out = zeros(a.len(), cols);
    for i in 0..a.len() {
        assert_eq!(a[i].len(), inner);
        for j in 0..cols {
            let mut s = 0.0;
            for t in 0..inner {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn add_bias(x: &mut Matrix, b: &[f64]) {
    for row in x.iter_mut() {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- merging

/// Result of [`merge_exhaustive`].
#[derive(Debug, Clone)]
pub struct Merge {
    pub members: Vec<Vec<usize>>,
    pub slots: Matrix,
    pub masks: Vec<Vec<f64>>,
}

fn cosine_distances(x: &Matrix) -> Option<Matrix> {
    let n = x.len();
    let mut norms = Vec::new();
    for row in x {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        norms.push(if norm < 1e-10 { norm + 1e-12 } else { norm });
    }
    let mut d = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
                d[i][j] = 1.0 - dot / (norms[i] * norms[j]);
            }
        }
    }
    Some(d)
}

/// Average-linkage clustering that recomputes every cluster distance from
/// scratch as the mean of the original pairwise cosine distances.
///
/// Each round evaluates all cluster pairs; pairs within `1e-12` of the best
/// distance tie, and the tie goes to the smallest `(min member, min member)`.
/// Masks are flattened per slot. Returns `None` for a zero-norm slot or an
/// unreachable `k`.
pub fn merge_exhaustive(slots: &Matrix, masks: &[Vec<f64>], k: usize) -> Option<Merge> {
    let n = slots.len();
    if k == 0 || k > n {
        return None;
    }
    let base = cosine_distances(slots)?;
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while groups.len() > k {
        let mut dists = Vec::new();
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let mut total = 0.0;
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        total += base[i][j];
                    }
                }
                let d = total / (groups[a].len() * groups[b].len()) as f64;
                dists.push((d, groups[a][0].min(groups[b][0]), groups[a][0].max(groups[b][0]), a, b));
            }
        }
        let best = dists.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let (_, _, _, a, b) = dists
            .into_iter()
            .filter(|t| t.0 <= best + 1e-12)
            .min_by_key(|t| (t.1, t.2))
            .unwrap();
        let moved = groups.remove(b);
        groups[a].extend(moved);
        groups[a].sort();
        groups.sort_by_key(|g| g[0]);
    }
    let d = slots[0].len();
    let cells = masks[0].len();
    let mut out_slots = Vec::new();
    let mut out_masks = Vec::new();
    for g in &groups {
        let mut s = vec![0.0; d];
        let mut m = vec![0.0; cells];
        for &i in g {
            for c in 0..d {
                s[c] += slots[i][c];
            }
            for c in 0..cells {
                m[c] += masks[i][c];
            }
        }
        for v in s.iter_mut() {
            *v /= g.len() as f64;
        }
        out_slots.push(s);
        out_masks.push(m);
    }
    Some(Merge {
        members: groups,
        slots: out_slots,
        masks: out_masks,
    })
}

// ---------------------------------------------------------- representation

/// Bilinear value at output cell `(i, j)` computed independently per cell,
/// with half-pixel centers and edge clamping.
pub fn resize_bilinear(mask: &Matrix, out_h: usize, out_w: usize) -> Matrix {
    let in_h = mask.len();
    let in_w = mask[0].len();
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let mut s = (o as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
        if s < 0.0 {
            s = 0.0;
        }
        if s > (n_in - 1) as f64 {
            s = (n_in - 1) as f64;
        }
        let lo = s.floor() as usize;
        let hi = if lo + 1 < n_in { lo + 1 } else { lo };
        (lo, hi, s - lo as f64)
    };
    let mut out = zeros(out_h, out_w);
    for i in 0..out_h {
        let (y0, y1, wy) = coord(i, in_h, out_h);
        for j in 0..out_w {
            let (x0, x1, wx) = coord(j, in_w, out_w);
            out[i][j] = mask[y0][x0] * (1.0 - wy) * (1.0 - wx)
                + mask[y0][x1] * (1.0 - wy) * wx
                + mask[y1][x0] * wy * (1.0 - wx)
                + mask[y1][x1] * wy * wx;
        }
    }
    out
}

pub fn scaled_softmax(values: &[f64], scale: f64) -> Vec<f64> {
    let max = values.iter().map(|v| v * scale).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| (v * scale - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Resize to `out_h × out_w`, flatten row-major and softmax jointly.
pub fn where_vector(mask: &Matrix, out_h: usize, out_w: usize, scale: f64) -> Vec<f64> {
    let r = resize_bilinear(mask, out_h, out_w);
    let flat: Vec<f64> = r.into_iter().flatten().collect();
    scaled_softmax(&flat, scale)
}

// ---------------------------------------------------------- slot attention

/// Parameters of the slot-attention module in plain matrices. Bias vectors
/// and norm gains are stored as single rows.
#[derive(Debug, Clone)]
pub struct SlotAttentionParams {
    pub in_norm: (Vec<f64>, Vec<f64>),
    pub slot_norm: (Vec<f64>, Vec<f64>),
    pub mlp_norm: (Vec<f64>, Vec<f64>),
    pub proj_q: Matrix,
    pub proj_k: Matrix,
    pub proj_v: Matrix,
    /// `(w_i, w_h, b_i, b_h)` for gates r, z, n.
    pub gru: [(Matrix, Matrix, Vec<f64>, Vec<f64>); 3],
    /// `(w, b)` per MLP layer, ReLU between layers.
    pub mlp: Vec<(Matrix, Vec<f64>)>,
}

fn layer_norm(x: &Matrix, gb: &(Vec<f64>, Vec<f64>)) -> Matrix {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mean) * inv * gb.0[c] + gb.1[c])
                .collect()
        })
        .collect()
}

/// Output of [`slot_attention`].
#[derive(Debug, Clone)]
pub struct SlotAttentionTrace {
    pub slots: Matrix,
    /// Per iteration, `n_slots × locations` attention after the softmax over
    /// slots.
    pub attention: Vec<Matrix>,
}

/// Iterative slot attention on `locations × feature_dim` inputs.
pub fn slot_attention(p: &SlotAttentionParams, inputs: &Matrix, init: &Matrix, n_iter: usize) -> SlotAttentionTrace {
    let n = init.len();
    let d = init[0].len();
    let x = layer_norm(inputs, &p.in_norm);
    let k = matmul(&x, &p.proj_k);
    let v = matmul(&x, &p.proj_v);
    let locs = k.len();
    let mut slots = init.clone();
    let mut attention = Vec::new();
    for _ in 0..n_iter {
        let prev = slots.clone();
        let q = matmul(&layer_norm(&slots, &p.slot_norm), &p.proj_q);
        let mut attn = zeros(n, locs);
        for l in 0..locs {
            let logits: Vec<f64> = (0..n)
                .map(|s| (0..d).map(|c| q[s][c] * k[l][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let sm = scaled_softmax(&logits, 1.0);
            for s in 0..n {
                attn[s][l] = sm[s];
            }
        }
        let mut updates = zeros(n, d);
        for s in 0..n {
            let total: f64 = attn[s].iter().map(|a| a + 1e-8).sum();
            for l in 0..locs {
                let w = (attn[s][l] + 1e-8) / total;
                for c in 0..d {
                    updates[s][c] += w * v[l][c];
                }
            }
        }
        attention.push(attn);

        let gate = |g: usize| {
            let (wi, wh, bi, bh) = &p.gru[g];
            let mut xi = matmul(&updates, wi);
            add_bias(&mut xi, bi);
            let mut hh = matmul(&prev, wh);
            add_bias(&mut hh, bh);
            (xi, hh)
        };
        let (xr, hr) = gate(0);
        let (xz, hz) = gate(1);
        let (xn, hn) = gate(2);
        let mut h = zeros(n, d);
        for s in 0..n {
            for c in 0..d {
                let r = sigmoid(xr[s][c] + hr[s][c]);
                let z = sigmoid(xz[s][c] + hz[s][c]);
                let cand = (xn[s][c] + r * hn[s][c]).tanh();
                h[s][c] = (1.0 - z) * cand + z * prev[s][c];
            }
        }
        let mut m = layer_norm(&h, &p.mlp_norm);
        for (i, (w, b)) in p.mlp.iter().enumerate() {
            m = matmul(&m, w);
            add_bias(&mut m, b);
            if i + 1 < p.mlp.len() {
                for row in m.iter_mut() {
                    for v in row.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
        }
        for s in 0..n {
            for c in 0..d {
                h[s][c] += m[s][c];
            }
        }
        slots = h;
    }
    SlotAttentionTrace { slots, attention }
}

// ----------------------------------------------------------- optimization

/// Minimize a unimodal `f` on `[a, b]` until the bracket is below `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    (a + b) / 2.0
}

pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - tau } else { tau };
    w * u * u
}

// -------------------------------------------------------------- tabular RL

/// Deterministic tabular MDP: `next[s][a]`, `reward[s][a]`, `done[s][a]`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub done: Vec<Vec<bool>>,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.next.len()
    }

    pub fn n_actions(&self) -> usize {
        self.next[0].len()
    }

    fn backup(&self, v: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        let cont = if self.done[s][a] { 0.0 } else { gamma * v[self.next[s][a]] };
        self.reward[s][a] + cont
    }

    /// Optimal state values by repeated Bellman optimality backups.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        loop {
            let mut delta: f64 = 0.0;
            let mut next = v.clone();
            for s in 0..self.n_states() {
                let best = (0..self.n_actions())
                    .map(|a| self.backup(&v, s, a, gamma))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                next[s] = best;
            }
            v = next;
            if delta < tol {
                return v;
            }
        }
    }

    /// State values of a deterministic policy.
    pub fn policy_value(&self, policy: &[usize], gamma: f64, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        loop {
            let next: Vec<f64> = (0..self.n_states()).map(|s| self.backup(&v, s, policy[s], gamma)).collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < tol {
                return v;
            }
        }
    }
}
