use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng as _;

use super::bc::Standardizer;
use super::{PolicyArtifact, PolicyInput};
use crate::autodiff::Tape;
use crate::config::{Config, IqlConfig, PolicyKind};
use crate::data::TrajectorySource;
use crate::env::JOINTS;
use crate::error::{Error, Result};
use crate::nn::{init_mlp, mlp_depth, mlp_eval, mlp_forward, ParamSet};
use crate::optim::Adam;
use crate::pipeline::SceneEncoder;
use crate::rng::stream;
use crate::scalar::Real;

/// Offline transitions `(s, a, r, s', done)`, one row each.
#[derive(Debug, Clone)]
pub struct Transitions<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub dones: Array1<T>,
}

impl<T: Real> Transitions<T> {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Transitions {
            states: self.states.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            rewards: self.rewards.select(Axis(0), idx),
            next_states: self.next_states.select(Axis(0), idx),
            dones: self.dones.select(Axis(0), idx),
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyDataset("no transitions".into()));
        }
        if self.actions.nrows() != n || self.rewards.len() != n || self.next_states.nrows() != n || self.dones.len() != n {
            return Err(Error::Shape("transition fields differ in length".into()));
        }
        if self.next_states.ncols() != self.states.ncols() {
            return Err(Error::Shape("states and next states differ in width".into()));
        }
        Ok(())
    }
}

/// Sparse transitions from every trajectory: reward 0 except the final step,
/// which carries the trajectory reward and is terminal.
pub fn build_transitions<S: TrajectorySource + ?Sized>(source: &S, encoder: &SceneEncoder<f32>) -> Result<Transitions<f32>> {
    let (mut s, mut a, mut r, mut s2, mut d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut width = 0;
    for i in 0..source.len() {
        let traj = source.trajectory(i);
        let states = (0..traj.len())
            .map(|t| {
                let rep = encoder.encode_frame(&traj.frames[t])?;
                PolicyInput::new(&rep, traj.joints.row(t).as_slice().expect("contiguous row")).map(|p| p.values)
            })
            .collect::<Result<Vec<_>>>()?;
        for t in 0..traj.len() {
            let last = t + 1 == traj.len();
            width = states[t].len();
            s.extend_from_slice(&states[t]);
            s2.extend_from_slice(&states[if last { t } else { t + 1 }]);
            a.extend(traj.actions.row(t).iter().copied());
            r.push(if last { traj.reward } else { 0.0 });
            d.push(if last { 1.0 } else { 0.0 });
        }
    }
    let n = r.len();
    if n == 0 {
        return Err(Error::EmptyDataset("no trajectories for offline RL".into()));
    }
    Ok(Transitions {
        states: Array2::from_shape_vec((n, width), s).expect("state rows"),
        actions: Array2::from_shape_vec((n, JOINTS), a).expect("action rows"),
        rewards: Array1::from(r),
        next_states: Array2::from_shape_vec((n, width), s2).expect("next-state rows"),
        dones: Array1::from(d),
    })
}

/// Twin critics with target copies, a state-value network and the actor.
#[derive(Debug, Clone, PartialEq)]
pub struct IqlNets<T> {
    pub q1: ParamSet<T>,
    pub q2: ParamSet<T>,
    pub q1_target: ParamSet<T>,
    pub q2_target: ParamSet<T>,
    pub v: ParamSet<T>,
    pub pi: ParamSet<T>,
}

fn net<T: Real>(prefix: &str, input: usize, output: usize, cfg: &IqlConfig, seed: u64) -> ParamSet<T> {
    let mut widths = vec![input];
    widths.extend(std::iter::repeat_n(cfg.hidden, cfg.layers));
    widths.push(output);
    let mut ps = ParamSet::new();
    init_mlp(&mut ps, prefix, &widths, &mut stream(seed, &format!("iql-init-{prefix}")));
    ps
}

fn renamed<T: Real>(ps: &ParamSet<T>, from: &str, to: &str) -> ParamSet<T> {
    let mut out = ParamSet::new();
    for (n, t) in ps.iter() {
        out.push(format!("{to}{}", &n[from.len()..]), t.clone());
    }
    out
}

impl<T: Real> IqlNets<T> {
    pub fn new(state_dim: usize, action_dim: usize, cfg: &IqlConfig, seed: u64) -> Self {
        let q1 = net("q1", state_dim + action_dim, 1, cfg, seed);
        let q2 = net("q2", state_dim + action_dim, 1, cfg, seed);
        IqlNets {
            q1_target: renamed(&q1, "q1", "q1t"),
            q2_target: renamed(&q2, "q2", "q2t"),
            q1,
            q2,
            v: net("v", state_dim, 1, cfg, seed),
            pi: net("pi", state_dim, action_dim, cfg, seed),
        }
    }

    pub fn all(&self) -> [&ParamSet<T>; 6] {
        [&self.pi, &self.q1, &self.q2, &self.v, &self.q1_target, &self.q2_target]
    }

    pub fn is_finite(&self) -> bool {
        self.all().iter().all(|p| p.is_finite())
    }

    /// `min(Q1t, Q2t)(s, a)` on already standardized states.
    pub fn target_q(&self, states: &Array2<T>, actions: &Array2<T>) -> Array2<T> {
        let sa = concatenate![Axis(1), *states, *actions];
        let a = mlp_eval(&self.q1_target, "q1t", &sa);
        let b = mlp_eval(&self.q2_target, "q2t", &sa);
        ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y))
    }

    /// `min(Q1, Q2)(s, a)` on already standardized states.
    pub fn q_min(&self, states: &Array2<T>, actions: &Array2<T>) -> Array2<T> {
        let sa = concatenate![Axis(1), *states, *actions];
        let a = mlp_eval(&self.q1, "q1", &sa);
        let b = mlp_eval(&self.q2, "q2", &sa);
        ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y))
    }

    pub fn value(&self, states: &Array2<T>) -> Array2<T> {
        mlp_eval(&self.v, "v", states)
    }

    fn norm_report(&self) -> String {
        self.all().iter().map(|p| p.norm_report()).collect::<Vec<_>>().join(", ")
    }
}

/// Networks plus their optimizers.
#[derive(Debug, Clone)]
pub struct IqlState<T> {
    pub nets: IqlNets<T>,
    opt_q1: Adam<T>,
    opt_q2: Adam<T>,
    opt_v: Adam<T>,
    opt_pi: Adam<T>,
    pub updates: usize,
}

impl<T: Real> IqlState<T> {
    pub fn new(nets: IqlNets<T>, lr: f64) -> Self {
        let lr = T::lit(lr);
        IqlState {
            opt_q1: Adam::for_params(lr, nets.q1.tensors()),
            opt_q2: Adam::for_params(lr, nets.q2.tensors()),
            opt_v: Adam::for_params(lr, nets.v.tensors()),
            opt_pi: Adam::for_params(lr, nets.pi.tensors()),
            nets,
            updates: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IqlLosses {
    pub value: f64,
    pub q1: f64,
    pub q2: f64,
    pub policy: f64,
}

impl IqlLosses {
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.q1.is_finite() && self.q2.is_finite() && self.policy.is_finite()
    }
}

fn step_net<T: Real>(
    params: &mut ParamSet<T>,
    opt: &mut Adam<T>,
    build: impl FnOnce(&mut Tape<T>, &crate::nn::ParamVars) -> crate::autodiff::Var,
) -> T {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let loss = build(&mut tape, &pv);
    let grads = tape.backward(loss);
    let grads = params.collect_grads(&pv, &grads);
    let value = tape.scalar(loss);
    if value.is_finite() {
        opt.step(params.tensors_mut(), &grads);
    }
    value
}

fn polyak<T: Real>(target: &mut ParamSet<T>, main: &ParamSet<T>, rate: T) {
    let keep = T::one() - rate;
    for (t, m) in target.tensors_mut().iter_mut().zip(main.tensors()) {
        ndarray::Zip::from(t).and(m).for_each(|t, &m| *t = keep * *t + rate * m);
    }
}

/// One gradient step each on V, Q1, Q2 and the actor, then a Polyak update
/// of the target critics. States must already be standardized.
pub fn iql_update<T: Real>(batch: &Transitions<T>, state: &mut IqlState<T>, cfg: &IqlConfig) -> Result<IqlLosses> {
    batch.check()?;
    let tau = cfg.tau;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("iql.tau must be in (0, 1), got {tau}")));
    }
    let n = batch.len();
    let nets = &mut state.nets;
    let q_t = nets.target_q(&batch.states, &batch.actions);

    let v_depth = mlp_depth(&nets.v, "v");
    let v_loss = step_net(&mut nets.v, &mut state.opt_v, |tape, pv| {
        let s = tape.constant(batch.states.clone());
        let v = mlp_forward(tape, pv, "v", v_depth, s);
        let q = tape.constant(q_t.clone());
        let u = tape.sub(q, v);
        tape.expectile_mean(u, T::lit(tau))
    });

    let v_next = nets.value(&batch.next_states);
    let gamma = T::lit(cfg.gamma);
    let y = Array2::from_shape_fn((n, 1), |(i, _)| {
        batch.rewards[i] + gamma * (T::one() - batch.dones[i]) * v_next[[i, 0]]
    });
    let sa = concatenate![Axis(1), batch.states, batch.actions];
    let q1_depth = mlp_depth(&nets.q1, "q1");
    let q1_loss = step_net(&mut nets.q1, &mut state.opt_q1, |tape, pv| {
        let x = tape.constant(sa.clone());
        let q = mlp_forward(tape, pv, "q1", q1_depth, x);
        tape.mse(q, &y)
    });
    let q2_depth = mlp_depth(&nets.q2, "q2");
    let q2_loss = step_net(&mut nets.q2, &mut state.opt_q2, |tape, pv| {
        let x = tape.constant(sa.clone());
        let q = mlp_forward(tape, pv, "q2", q2_depth, x);
        tape.mse(q, &y)
    });

    let v_now = nets.value(&batch.states);
    let beta = T::lit(cfg.beta);
    let cap = T::lit(cfg.weight_clip);
    let weights = Array1::from_shape_fn(n, |i| (beta * (q_t[[i, 0]] - v_now[[i, 0]])).exp().min(cap));
    let pi_depth = mlp_depth(&nets.pi, "pi");
    let pi_loss = step_net(&mut nets.pi, &mut state.opt_pi, |tape, pv| {
        let s = tape.constant(batch.states.clone());
        let a = mlp_forward(tape, pv, "pi", pi_depth, s);
        tape.weighted_sq_error(a, &batch.actions, &weights)
    });

    let losses = IqlLosses {
        value: v_loss.as_f64(),
        q1: q1_loss.as_f64(),
        q2: q2_loss.as_f64(),
        policy: pi_loss.as_f64(),
    };
    if !losses.is_finite() || !nets.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            batch: state.updates,
            norms: format!("losses {losses:?}; {}", nets.norm_report()),
        });
    }
    let rate = T::lit(cfg.polyak);
    polyak(&mut nets.q1_target, &nets.q1, rate);
    polyak(&mut nets.q2_target, &nets.q2, rate);
    state.updates += 1;
    Ok(losses)
}

/// Run `cfg.steps` updates on uniformly resampled minibatches. Rewards are
/// multiplied by `cfg.reward_scale`; states are standardized with statistics
/// that are returned alongside the trained state. The log holds the value
/// loss of the first update and then one mean per hundredth of training.
pub fn iql_fit<T: Real>(data: &Transitions<T>, cfg: &IqlConfig, seed: u64) -> Result<(IqlState<T>, Standardizer, Vec<f64>)> {
    data.check()?;
    let standardizer = Standardizer::fit(&data.states);
    let scaled = Transitions {
        states: standardizer.apply(&data.states),
        actions: data.actions.clone(),
        rewards: data.rewards.mapv(|r| r * T::lit(cfg.reward_scale)),
        next_states: standardizer.apply(&data.next_states),
        dones: data.dones.clone(),
    };
    let nets = IqlNets::new(scaled.states.ncols(), scaled.actions.ncols(), cfg, seed);
    let mut state = IqlState::new(nets, cfg.lr);
    let mut rng = stream(seed, "iql-batch");
    let n = scaled.len();
    let every = (cfg.steps / 100).max(1);
    let mut log = Vec::new();
    let mut acc = 0.0;
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch.max(1)).map(|_| rng.random_range(0..n)).collect();
        let losses = iql_update(&scaled.select(&idx), &mut state, cfg)?;
        if step == 0 {
            log.push(losses.value);
        }
        acc += losses.value;
        if (step + 1) % every == 0 {
            log.push(acc / every as f64);
            acc = 0.0;
        }
    }
    Ok((state, standardizer, log))
}

/// Offline RL on every trajectory of `dataset`, failures included.
pub fn iql_train<S: TrajectorySource + ?Sized>(
    dataset: &S,
    encoder: &SceneEncoder<f32>,
    config: &Config,
    seed: u64,
) -> Result<PolicyArtifact> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("offline RL needs at least one trajectory".into()));
    }
    let data = build_transitions(dataset, encoder)?;
    let (state, standardizer, log) = iql_fit(&data, &config.iql, seed)?;
    let mut params = ParamSet::new();
    for ps in state.nets.all() {
        for (n, t) in ps.iter() {
            params.push(n, t.clone());
        }
    }
    let artifact = PolicyArtifact {
        kind: PolicyKind::Iql,
        params,
        standardizer,
        horizon: 1,
        input_dim: data.states.ncols(),
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

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IqlConfig {
        IqlConfig {
            hidden: 8,
            batch: 4,
            ..Default::default()
        }
    }

    fn one_state(reward: f64, done: f64) -> Transitions<f64> {
        Transitions {
            states: Array2::ones((1, 2)),
            actions: Array2::zeros((1, 3)),
            rewards: Array1::from(vec![reward]),
            next_states: Array2::ones((1, 2)),
            dones: Array1::from(vec![done]),
        }
    }

    #[test]
    fn zero_polyak_freezes_targets() {
        let c = IqlConfig { polyak: 0.0, ..cfg() };
        let mut st = IqlState::new(IqlNets::<f64>::new(2, 3, &c, 1), c.lr);
        let before = st.nets.clone();
        for _ in 0..5 {
            iql_update(&one_state(1.0, 0.0), &mut st, &c).unwrap();
        }
        assert_eq!(st.nets.q1_target, before.q1_target);
        assert_eq!(st.nets.q2_target, before.q2_target);
        assert_ne!(st.nets.q1, before.q1);
    }

    #[test]
    fn zero_discount_targets_reward() {
        let c = IqlConfig {
            gamma: 0.0,
            lr: 1e-2,
            polyak: 0.05,
            ..cfg()
        };
        let mut st = IqlState::new(IqlNets::<f64>::new(2, 3, &c, 2), c.lr);
        for _ in 0..3000 {
            iql_update(&one_state(0.7, 0.0), &mut st, &c).unwrap();
        }
        let b = one_state(0.7, 0.0);
        let q = st.nets.q_min(&b.states, &b.actions)[[0, 0]];
        assert!((q - 0.7).abs() < 1e-3, "q = {q}");
    }

    #[test]
    fn awr_weights_are_capped() {
        let c = IqlConfig { beta: 1e6, ..cfg() };
        let mut st = IqlState::new(IqlNets::<f64>::new(2, 3, &c, 3), c.lr);
        let losses = iql_update(&one_state(1e3, 1.0), &mut st, &c).unwrap();
        assert!(losses.policy.is_finite());
    }

    #[test]
    fn invalid_tau_and_empty_batch() {
        let c = IqlConfig { tau: 1.0, ..cfg() };
        let mut st = IqlState::new(IqlNets::<f64>::new(2, 3, &c, 0), 1e-3);
        assert!(iql_update(&one_state(0.0, 1.0), &mut st, &c).is_err());
        let empty = one_state(0.0, 1.0).select(&[]);
        assert!(iql_update(&empty, &mut st, &cfg()).is_err());
    }

    #[test]
    fn seeded_fit_repeats() {
        let c = IqlConfig { steps: 3, ..cfg() };
        let a = iql_fit(&one_state(1.0, 1.0), &c, 9).unwrap();
        let b = iql_fit(&one_state(1.0, 1.0), &c, 9).unwrap();
        assert_eq!(a.2, b.2);
        assert_eq!(a.0.nets, b.0.nets);
    }
}
