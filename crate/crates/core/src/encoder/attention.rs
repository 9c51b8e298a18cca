use ndarray::{Array2, ArrayView2};

use super::{AttentionMaps, EncoderCheckpoint, SlotSet, ATTENTION_EPS, LAYER_NORM_EPS};
use crate::autodiff::{Tape, Var};
use crate::backbone::FeatureGrid;
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, ParamVars};
use crate::scalar::Real;

/// Final slots and attention of one frame, optionally with the attention of
/// every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding<T> {
    pub slots: SlotSet<T>,
    pub attention: AttentionMaps<T>,
    pub trace: Vec<AttentionMaps<T>>,
}

/// Tape handles produced by [`slot_attention_graph`].
pub struct SlotGraph {
    pub slots: Var,
    pub attention: Var,
    pub per_iter: Vec<Var>,
}

fn affine_norm<T: Real>(tape: &mut Tape<T>, pv: &ParamVars, name: &str, x: Var) -> Var {
    let n = tape.layer_norm_rows(x, T::lit(LAYER_NORM_EPS));
    let g = pv.var(&format!("{name}.g"));
    let b = pv.var(&format!("{name}.b"));
    let n = tape.mul_row(n, g);
    tape.add_row(n, b)
}

fn gru_gate<T: Real>(tape: &mut Tape<T>, pv: &ParamVars, gate: &str, x: Var, h: Var) -> (Var, Var) {
    let wi = pv.var(&format!("gru.w_i{gate}"));
    let bi = pv.var(&format!("gru.b_i{gate}"));
    let wh = pv.var(&format!("gru.w_h{gate}"));
    let bh = pv.var(&format!("gru.b_h{gate}"));
    let xi = tape.matmul(x, wi);
    let xi = tape.add_row(xi, bi);
    let hh = tape.matmul(h, wh);
    let hh = tape.add_row(hh, bh);
    (xi, hh)
}

/// Record `n_iter` rounds of slot attention on `tape`.
///
/// `inputs` is `locations × feature_dim`; `init` is the `n_slots × d_what`
/// starting point shared by every frame of a clip. Each round normalizes the
/// slots, takes a softmax over the slot axis of the scaled query-key logits,
/// pools the values with location-renormalized weights, and applies a GRU
/// step followed by a residual MLP.
pub fn slot_attention_graph<T: Real>(tape: &mut Tape<T>, pv: &ParamVars, inputs: Var, init: Var, n_iter: usize) -> SlotGraph {
    let d = tape.value(init).ncols();
    let temperature = T::one() / T::from_len(d).sqrt();
    let x = affine_norm(tape, pv, "in_norm", inputs);
    let k = tape.matmul(x, pv.var("proj.k"));
    let v = tape.matmul(x, pv.var("proj.v"));
    let mlp_depth = 2;

    let mut slots = init;
    let mut per_iter = Vec::with_capacity(n_iter);
    let mut attention = init;
    for _ in 0..n_iter {
        let prev = slots;
        let s = affine_norm(tape, pv, "slot_norm", slots);
        let q = tape.matmul(s, pv.var("proj.q"));
        let logits = tape.matmul_t(q, k);
        let logits = tape.scale(logits, temperature);
        attention = tape.softmax_cols(logits);
        per_iter.push(attention);
        let w = tape.normalize_rows(attention, T::lit(ATTENTION_EPS));
        let updates = tape.matmul(w, v);

        let (xr, hr) = gru_gate(tape, pv, "r", updates, prev);
        let r = tape.add(xr, hr);
        let r = tape.sigmoid(r);
        let (xz, hz) = gru_gate(tape, pv, "z", updates, prev);
        let z = tape.add(xz, hz);
        let z = tape.sigmoid(z);
        let (xn, hn) = gru_gate(tape, pv, "n", updates, prev);
        let rh = tape.mul(r, hn);
        let n = tape.add(xn, rh);
        let n = tape.tanh(n);
        // h' = (1 - z) * n + z * h
        let diff = tape.sub(prev, n);
        let zd = tape.mul(z, diff);
        let h = tape.add(n, zd);

        let m = affine_norm(tape, pv, "mlp_norm", h);
        let m = mlp_forward(tape, pv, "mlp", mlp_depth, m);
        slots = tape.add(h, m);
    }
    SlotGraph {
        slots,
        attention,
        per_iter,
    }
}

fn check_inputs<T: Real>(features: &ArrayView2<'_, T>, checkpoint: &EncoderCheckpoint<T>, n_iter: usize) -> Result<()> {
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    if features.ncols() != checkpoint.arch.feature_dim {
        return Err(Error::Shape(format!(
            "features have dimension {}, checkpoint expects {}",
            features.ncols(),
            checkpoint.arch.feature_dim
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("slot attention input".into()));
    }
    Ok(())
}

/// Bind one frame's `locations × feature_dim` features laid out over `grid`.
///
/// `init` overrides the checkpoint's shared initial slots (used for
/// stochastic initialization during training).
pub fn bind_frame<T: Real>(
    features: ArrayView2<'_, T>,
    grid: (usize, usize),
    checkpoint: &EncoderCheckpoint<T>,
    n_iter: usize,
    init: Option<&Array2<T>>,
) -> Result<Binding<T>> {
    check_inputs(&features, checkpoint, n_iter)?;
    if features.nrows() != grid.0 * grid.1 {
        return Err(Error::Shape(format!(
            "{} locations do not fill a {}x{} grid",
            features.nrows(),
            grid.0,
            grid.1
        )));
    }
    let mut tape = Tape::new();
    let pv = checkpoint.params.register_frozen(&mut tape);
    let inputs = tape.constant(features.to_owned());
    let init = match init {
        Some(i) => tape.constant(i.clone()),
        None => pv.var("slots.init"),
    };
    let g = slot_attention_graph(&mut tape, &pv, inputs, init, n_iter);
    Ok(Binding {
        slots: SlotSet {
            slots: tape.value(g.slots).clone(),
        },
        attention: AttentionMaps::from_flat(tape.value(g.attention).clone(), grid),
        trace: g
            .per_iter
            .iter()
            .map(|&a| AttentionMaps::from_flat(tape.value(a).clone(), grid))
            .collect(),
    })
}

/// Bind every frame of `features`, all starting from the checkpoint's shared
/// initial slots.
pub fn bind_slots<T: Real>(features: &FeatureGrid<T>, checkpoint: &EncoderCheckpoint<T>, n_iter: usize) -> Result<Vec<Binding<T>>> {
    let grid = features.grid_shape();
    (0..features.batch())
        .map(|b| bind_frame(features.frame(b), grid, checkpoint, n_iter, None))
        .collect()
}
