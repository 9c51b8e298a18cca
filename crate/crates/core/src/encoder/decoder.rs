use ndarray::Array2;

use super::EncoderCheckpoint;
use crate::autodiff::{Tape, Var};
use crate::backbone::FeatureGrid;
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, ParamVars};
use crate::scalar::Real;

/// Fixed sinusoidal 2-D encoding, `locations × 4·freqs`.
///
/// For cell `(i, j)` with centers `y = (i + 0.5) / h`, `x = (j + 0.5) / w`,
/// frequency `f` contributes `sin(2^f π x), cos(2^f π x), sin(2^f π y),
/// cos(2^f π y)`.
pub fn positional_encoding<T: Real>(grid: (usize, usize), freqs: usize) -> Array2<T> {
    let (h, w) = grid;
    let mut out = Array2::zeros((h * w, 4 * freqs));
    for i in 0..h {
        for j in 0..w {
            let y = (i as f64 + 0.5) / h as f64;
            let x = (j as f64 + 0.5) / w as f64;
            for f in 0..freqs {
                let a = std::f64::consts::PI * (1u64 << f) as f64;
                let row = i * w + j;
                out[[row, 4 * f]] = T::lit((a * x).sin());
                out[[row, 4 * f + 1]] = T::lit((a * x).cos());
                out[[row, 4 * f + 2]] = T::lit((a * y).sin());
                out[[row, 4 * f + 3]] = T::lit((a * y).cos());
            }
        }
    }
    out
}

/// Spatial-broadcast decoding on the tape. Returns the `locations ×
/// feature_dim` reconstruction and the `n × locations` mixing weights.
pub fn decode_graph<T: Real>(tape: &mut Tape<T>, pv: &ParamVars, slots: Var, grid: (usize, usize), freqs: usize, depth: usize) -> (Var, Var) {
    let n = tape.value(slots).nrows();
    let l = grid.0 * grid.1;
    let pos = tape.constant(positional_encoding(grid, freqs));
    // First layer on [slot | pos] split into its slot and position halves.
    let s = tape.matmul(slots, pv.var("dec.slot"));
    let p = tape.matmul(pos, pv.var("dec.pos"));
    let p = tape.add_row(p, pv.var("dec.b0"));
    let s = tape.repeat_rows(s, l);
    let p = tape.tile_rows(p, n);
    let h = tape.add(s, p);
    let mut h = tape.relu(h);
    if depth > 1 {
        h = mlp_forward(tape, pv, "dec.mlp", depth - 1, h);
        h = tape.relu(h);
    }
    let feats = tape.matmul(h, pv.var("dec.out_feat"));
    let feats = tape.add_row(feats, pv.var("dec.out_feat_b"));
    let logits = tape.matmul(h, pv.var("dec.out_alpha"));
    let logits = tape.add_row(logits, pv.var("dec.out_alpha_b"));
    let logits = tape.reshape(logits, n, l);
    let alpha = tape.softmax_cols(logits);
    let recon = tape.mix_slots(alpha, feats);
    (recon, alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub reconstruction: FeatureGrid<T>,
    /// `n_slots × locations`; each column sums to one.
    pub alpha: Array2<T>,
}

/// Decode any number of `d_what`-dimensional slots back to a feature grid.
pub fn decode_slots<T: Real>(slots: &Array2<T>, grid: (usize, usize), checkpoint: &EncoderCheckpoint<T>) -> Result<Decoded<T>> {
    if slots.ncols() != checkpoint.arch.d_what {
        return Err(Error::Shape(format!(
            "slots have dimension {}, decoder expects {}",
            slots.ncols(),
            checkpoint.arch.d_what
        )));
    }
    if slots.nrows() == 0 {
        return Err(Error::Shape("no slots to decode".into()));
    }
    let mut tape = Tape::new();
    let pv = checkpoint.params.register_frozen(&mut tape);
    let s = tape.constant(slots.clone());
    let (recon, alpha) = decode_graph(
        &mut tape,
        &pv,
        s,
        grid,
        checkpoint.arch.pos_freqs,
        checkpoint.arch.decoder_layers,
    );
    Ok(Decoded {
        reconstruction: FeatureGrid::from_locations(tape.value(recon).clone(), grid)?,
        alpha: tape.value(alpha).clone(),
    })
}
