//! Desk-scale pouring task: a kinematic cup tipping beads into a container.
//!
//! The world is the unit square, `x` to the right and `y` up. Actions are
//! 7-d joint-target vectors: dims 0..3 are targets for the cup's `(x, y,
//! tilt)`, approached at a bounded speed; dims 3..7 are inert and exist so
//! policy shapes match a 7-DoF arm.

use ndarray::Array3;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::rng::{stream, Rng};

pub const JOINTS: usize = 7;
pub type Action = [f32; JOINTS];

pub const X_RANGE: (f64, f64) = (0.05, 0.95);
pub const Y_RANGE: (f64, f64) = (0.3, 0.9);
pub const TILT_RANGE: (f64, f64) = (0.0, 2.2);
pub const MAX_SPEED: [f64; 3] = [0.05, 0.05, 0.25];
pub const POUR_TILT: f64 = 1.2;
pub const LIP_REACH: f64 = 0.06;
pub const CONTAINER_HALF_WIDTH: f64 = 0.11;
pub const CONTAINER_TOP: f64 = 0.25;
pub const FLOOR: f64 = 0.05;
const CUP_HALF: (f64, f64) = (0.04, 0.06);
const BEAD_RADIUS: f64 = 0.012;

const BACKGROUND: [u8; 3] = [30, 30, 40];
const FLOOR_COLOR: [u8; 3] = [90, 70, 50];
const CONTAINER_COLOR: [u8; 3] = [40, 110, 230];
const CUP_COLOR: [u8; 3] = [220, 70, 60];
const BEAD_COLOR: [u8; 3] = [250, 210, 40];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeadState {
    InCup,
    Deposited,
    Spilled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bead {
    pub state: BeadState,
    /// Horizontal landing position once out of the cup.
    pub landed_x: f64,
    /// Order among beads that have left the cup.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Cup `(x, y, tilt)`.
    pub cup: [f64; 3],
    pub container_x: f64,
    pub beads: Vec<Bead>,
    pub step: usize,
}

impl EnvState {
    pub fn in_cup(&self) -> usize {
        self.beads.iter().filter(|b| b.state == BeadState::InCup).count()
    }

    pub fn deposited(&self) -> usize {
        self.beads.iter().filter(|b| b.state == BeadState::Deposited).count()
    }

    pub fn lip(&self) -> (f64, f64) {
        let [x, y, t] = self.cup;
        (x + LIP_REACH * t.sin(), y + LIP_REACH * t.cos())
    }

    pub fn joints(&self) -> Action {
        let [x, y, t] = self.cup;
        [x as f32, y as f32, t as f32, 0.0, 0.0, 0.0, 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub deposited_now: usize,
    pub spilled_now: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct SpritePourEnv {
    config: EnvConfig,
    state: EnvState,
}

impl SpritePourEnv {
    /// Environment reset to the random start drawn from `seed`.
    pub fn new(config: &EnvConfig, seed: u64) -> Self {
        let mut env = SpritePourEnv {
            config: config.clone(),
            state: EnvState {
                cup: [0.0; 3],
                container_x: 0.0,
                beads: Vec::new(),
                step: 0,
            },
        };
        env.reset(seed);
        env
    }

    pub fn reset(&mut self, seed: u64) {
        let mut rng = stream(seed, "env-reset");
        self.state = EnvState {
            cup: [rng.random_range(0.1..0.45), rng.random_range(0.4..0.7), 0.0],
            container_x: rng.random_range(0.6..0.85),
            beads: vec![
                Bead {
                    state: BeadState::InCup,
                    landed_x: 0.0,
                    rank: 0,
                };
                self.config.n_beads
            ],
            step: 0,
        };
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn joints(&self) -> Action {
        self.state.joints()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.t_max || self.state.in_cup() == 0
    }

    /// Percentage of beads deposited, in `[0, 100]`.
    pub fn reward(&self) -> f32 {
        (100.0 * self.state.deposited() as f64 / self.config.n_beads as f64) as f32
    }

    pub fn step(&mut self, action: &Action) -> StepOutcome {
        let ranges = [X_RANGE, Y_RANGE, TILT_RANGE];
        let s = &mut self.state;
        for d in 0..3 {
            let target = if action[d].is_finite() { action[d] as f64 } else { s.cup[d] };
            let target = target.clamp(ranges[d].0, ranges[d].1);
            let v = (target - s.cup[d]).clamp(-MAX_SPEED[d], MAX_SPEED[d]);
            s.cup[d] = (s.cup[d] + v).clamp(ranges[d].0, ranges[d].1);
        }
        let (mut deposited_now, mut spilled_now) = (0, 0);
        let tilt = s.cup[2];
        if tilt > POUR_TILT {
            let rate = 1 + ((tilt - POUR_TILT) / 0.2).floor() as usize;
            let (lip_x, _) = s.lip();
            let inside = (lip_x - s.container_x).abs() <= CONTAINER_HALF_WIDTH;
            let mut rank = s.beads.iter().filter(|b| b.state != BeadState::InCup).count();
            for bead in s.beads.iter_mut().filter(|b| b.state == BeadState::InCup).take(rate) {
                bead.landed_x = lip_x;
                bead.rank = rank;
                rank += 1;
                if inside {
                    bead.state = BeadState::Deposited;
                    deposited_now += 1;
                } else {
                    bead.state = BeadState::Spilled;
                    spilled_now += 1;
                }
            }
        }
        s.step += 1;
        StepOutcome {
            deposited_now,
            spilled_now,
            done: self.is_done(),
        }
    }

    pub fn render(&self) -> Array3<f32> {
        render_state(&self.state, &self.config)
    }
}

/// Rasterize `state` to `render_height × render_width × 3`, values `k/255`.
pub fn render_state(state: &EnvState, config: &EnvConfig) -> Array3<f32> {
    let (h, w) = (config.render_height, config.render_width);
    let mut img = vec![BACKGROUND; h * w];
    let to_world = |r: usize, c: usize| ((c as f64 + 0.5) / w as f64, 1.0 - (r as f64 + 0.5) / h as f64);
    let kx = state.container_x;
    let [cx, cy, tilt] = state.cup;
    let (sin_t, cos_t) = tilt.sin_cos();
    for r in 0..h {
        for c in 0..w {
            let (x, y) = to_world(r, c);
            let px = &mut img[r * w + c];
            if y < FLOOR {
                *px = FLOOR_COLOR;
            }
            if (x - kx).abs() <= CONTAINER_HALF_WIDTH && (FLOOR..=CONTAINER_TOP).contains(&y) {
                *px = CONTAINER_COLOR;
            }
            let (dx, dy) = (x - cx, y - cy);
            let lx = dx * cos_t - dy * sin_t;
            let ly = dx * sin_t + dy * cos_t;
            if lx.abs() <= CUP_HALF.0 && ly.abs() <= CUP_HALF.1 {
                *px = CUP_COLOR;
            }
        }
    }
    let mut disc = |bx: f64, by: f64| {
        let r0 = (((1.0 - by - BEAD_RADIUS) * h as f64).floor().max(0.0)) as usize;
        let r1 = (((1.0 - by + BEAD_RADIUS) * h as f64).ceil() as usize).min(h);
        let c0 = (((bx - BEAD_RADIUS) * w as f64).floor().max(0.0)) as usize;
        let c1 = (((bx + BEAD_RADIUS) * w as f64).ceil() as usize).min(w);
        for r in r0..r1 {
            for c in c0..c1 {
                let (x, y) = to_world(r, c);
                if (x - bx).powi(2) + (y - by).powi(2) <= BEAD_RADIUS * BEAD_RADIUS {
                    img[r * w + c] = BEAD_COLOR;
                }
            }
        }
    };
    let mut in_cup = 0usize;
    for bead in &state.beads {
        match bead.state {
            BeadState::InCup => {
                let (col, row) = ((in_cup % 3) as f64, (in_cup / 3) as f64);
                let (lx, ly) = (-0.022 + 0.022 * col, -0.045 + 0.022 * row);
                disc(cx + lx * cos_t + ly * sin_t, cy - lx * sin_t + ly * cos_t);
                in_cup += 1;
            }
            BeadState::Deposited => {
                let i = bead.rank;
                disc(kx - 0.08 + 0.032 * (i % 6) as f64, FLOOR + 0.02 + 0.03 * (i / 6) as f64);
            }
            BeadState::Spilled => {
                disc(bead.landed_x.clamp(0.0, 1.0), FLOOR / 2.0);
            }
        }
    }
    Array3::from_shape_fn((h, w, 3), |(r, c, k)| img[r * w + c][k] as f32 / 255.0)
}

/// Scripted proportional controller: carry the cup over the container, then
/// tilt until empty.
#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    pub gain: f64,
    /// Added to the ideal pouring x; large offsets miss the container.
    pub aim_offset: f64,
    pub noise_std: f64,
    pouring: bool,
    rng: Rng,
}

pub const POUR_HEIGHT: f64 = 0.55;
pub const POUR_GOAL_TILT: f64 = 2.0;

impl ScriptedExpert {
    pub fn new(aim_offset: f64, noise_std: f64, seed: u64) -> Self {
        ScriptedExpert {
            gain: 0.8,
            aim_offset,
            noise_std,
            pouring: false,
            rng: stream(seed, "expert-noise"),
        }
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, 0.0, 0)
    }

    pub fn act(&mut self, state: &EnvState) -> Action {
        let goal_x = state.container_x - LIP_REACH * 1.7f64.sin() + self.aim_offset;
        let [x, y, t] = state.cup;
        if !self.pouring && (x - goal_x).abs() < 0.02 && (y - POUR_HEIGHT).abs() < 0.03 {
            self.pouring = true;
        }
        let goal_t = if self.pouring { POUR_GOAL_TILT } else { 0.0 };
        let mut target = [
            x + self.gain * (goal_x - x),
            y + self.gain * (POUR_HEIGHT - y),
            t + self.gain * (goal_t - t),
        ];
        if self.noise_std > 0.0 {
            let n = Normal::new(0.0, self.noise_std).expect("valid std");
            for v in target.iter_mut().take(2) {
                *v += n.sample(&mut self.rng);
            }
        }
        [target[0] as f32, target[1] as f32, target[2] as f32, 0.0, 0.0, 0.0, 0.0]
    }
}

/// Uniformly random joint targets over the reachable ranges.
pub fn random_action(rng: &mut Rng) -> Action {
    [
        rng.random_range(0.0..1.0),
        rng.random_range(Y_RANGE.0 as f32..Y_RANGE.1 as f32),
        rng.random_range(TILT_RANGE.0 as f32..TILT_RANGE.1 as f32),
        0.0,
        0.0,
        0.0,
        0.0,
    ]
}
