use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::{ActionChunk, PolicyArtifact, PolicyInput};
use crate::autodiff::Tape;
use crate::config::{BcConfig, Config, PolicyKind};
use crate::data::{is_success, TrajectorySource};
use crate::env::JOINTS;
use crate::error::{Error, Result};
use crate::nn::{init_mlp, mlp_depth, mlp_forward, ParamSet};
use crate::optim::Adam;
use crate::pipeline::SceneEncoder;
use crate::rng::stream;
use crate::scalar::Real;

const STD_FLOOR: f64 = 1e-6;

/// Per-feature affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Column statistics of `x`; near-constant columns keep unit scale.
    pub fn fit<T: Real>(x: &Array2<T>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            let var = col.iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m as f32);
            std.push(if s > STD_FLOOR { s as f32 } else { 1.0 });
        }
        Standardizer { mean, std }
    }

    pub fn apply<T: Real>(&self, x: &Array2<T>) -> Array2<T> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - T::of_f32(m)) / T::of_f32(s);
            }
        }
        out
    }
}

/// Supervised pairs: one row per visited state.
#[derive(Debug, Clone)]
pub struct BcSamples<T> {
    pub inputs: Array2<T>,
    /// Flattened `h × 7` chunks.
    pub targets: Array2<T>,
    pub horizon: usize,
}

/// The `h` actions starting at `t`, end-padded with the final action.
pub fn chunk_targets(actions: &Array2<f32>, t: usize, h: usize) -> Vec<f32> {
    let last = actions.nrows() - 1;
    (t..t + h)
        .flat_map(|i| actions.row(i.min(last)).to_vec())
        .collect()
}

/// Encode every successful trajectory into `(input, chunk)` pairs. Only
/// the rewards of unsuccessful trajectories are read.
pub fn bc_samples<S: TrajectorySource + ?Sized>(
    source: &S,
    encoder: &SceneEncoder<f32>,
    horizon: usize,
) -> Result<BcSamples<f32>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("bc.horizon must be at least 1".into()));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let (mut rows, mut kept, mut longest) = (0, 0, 0);
    for i in 0..source.len() {
        if !is_success(source.reward(i)) {
            continue;
        }
        let traj = source.trajectory(i);
        kept += 1;
        longest = longest.max(traj.len());
        for t in 0..traj.len() {
            let rep = encoder.encode_frame(&traj.frames[t])?;
            let joints = traj.joints.row(t).to_vec();
            inputs.extend(PolicyInput::new(&rep, &joints)?.values);
            targets.extend(chunk_targets(&traj.actions, t, horizon));
            rows += 1;
        }
    }
    if kept == 0 {
        return Err(Error::EmptyDataset("no successful trajectories to clone".into()));
    }
    if horizon > longest {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} exceeds every trajectory length (longest is {longest})"
        )));
    }
    let width = inputs.len() / rows;
    Ok(BcSamples {
        inputs: Array2::from_shape_vec((rows, width), inputs).expect("rows of equal width"),
        targets: Array2::from_shape_vec((rows, JOINTS * horizon), targets).expect("rows of 7h"),
        horizon,
    })
}

pub fn init_bc_params<T: Real>(input_dim: usize, output_dim: usize, cfg: &BcConfig, seed: u64) -> ParamSet<T> {
    let mut widths = vec![input_dim];
    widths.extend(std::iter::repeat_n(cfg.hidden, cfg.layers));
    widths.push(output_dim);
    let mut ps = ParamSet::new();
    init_mlp(&mut ps, "bc", &widths, &mut stream(seed, "bc-init"));
    ps
}

/// Mean squared chunk error of the `bc` MLP on standardized `x`, with
/// gradients aligned to `params`.
pub fn bc_loss_and_grads<T: Real>(params: &ParamSet<T>, x: &Array2<T>, y: &Array2<T>) -> (T, Vec<Array2<T>>) {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let input = tape.constant(x.clone());
    let out = mlp_forward(&mut tape, &pv, "bc", mlp_depth(params, "bc"), input);
    let loss = tape.mse(out, y);
    let grads = tape.backward(loss);
    (tape.scalar(loss), params.collect_grads(&pv, &grads))
}

/// Minibatch Adam on the chunk MSE. Returns parameters, input statistics
/// and the mean training loss of every epoch.
pub fn bc_fit<T: Real>(
    samples: &BcSamples<T>,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(ParamSet<T>, Standardizer, Vec<f64>)> {
    let n = samples.inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset("no behavior cloning samples".into()));
    }
    if samples.targets.nrows() != n {
        return Err(Error::Shape("inputs and targets differ in row count".into()));
    }
    let standardizer = Standardizer::fit(&samples.inputs);
    let x = standardizer.apply(&samples.inputs);
    let mut params = init_bc_params::<T>(x.ncols(), samples.targets.ncols(), cfg, seed);
    let mut opt = Adam::for_params(T::lit(cfg.lr), params.tensors());
    let mut rng = stream(seed, "bc-shuffle");
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.max(1);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb = samples.targets.select(Axis(0), idx);
            let (loss, grads) = bc_loss_and_grads(&params, &xb, &yb);
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    norms: params.norm_report(),
                });
            }
            opt.step(params.tensors_mut(), &grads);
            total += loss.as_f64() * idx.len() as f64;
        }
        log.push(total / n as f64);
    }
    Ok((params, standardizer, log))
}

fn to_f32(ps: &ParamSet<impl Real>) -> ParamSet<f32> {
    let mut out = ParamSet::new();
    for (n, t) in ps.iter() {
        out.push(n, t.mapv(|v| v.as_f32()));
    }
    out
}

/// Behavior cloning on the successful trajectories of `dataset`.
pub fn bc_train<S: TrajectorySource + ?Sized>(
    dataset: &S,
    encoder: &SceneEncoder<f32>,
    config: &Config,
    seed: u64,
) -> Result<PolicyArtifact> {
    let samples = bc_samples(dataset, encoder, config.bc.horizon)?;
    let (params, standardizer, log) = bc_fit(&samples, &config.bc, seed)?;
    let artifact = PolicyArtifact {
        kind: PolicyKind::Bc,
        params: to_f32(&params),
        standardizer,
        horizon: config.bc.horizon,
        input_dim: samples.inputs.ncols(),
        encoder_fingerprint: encoder.fingerprint(),
        layout: encoder.layout(),
        config_fingerprint: config.hash(),
        config: config.clone(),
        seed,
        log,
    };
    artifact.validate()?;
    Ok(artifact)
}

/// The chunk predicted by a BC artifact.
pub fn bc_predict(input: &PolicyInput, artifact: &PolicyArtifact) -> Result<ActionChunk> {
    if artifact.kind != PolicyKind::Bc {
        return Err(Error::InvalidArgument("bc_predict needs a behavior cloning artifact".into()));
    }
    artifact.act(input)
}
