//! Adaptive-moment gradient descent with optional global-norm clipping.

use ndarray::{Array2, Zip};

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub clip_norm: Option<T>,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|s| (Array2::zeros(s), Array2::zeros(s)))
            .unzip();
        Adam {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            clip_norm: None,
            m,
            v,
            t: 0,
        }
    }

    pub fn for_params(lr: T, params: &[Array2<T>]) -> Self {
        Self::new(lr, params.iter().map(|p| p.dim()))
    }

    pub fn with_clip(mut self, max_norm: T) -> Self {
        self.clip_norm = Some(max_norm);
        self
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Apply one update. Returns the global gradient norm before clipping.
    pub fn step(&mut self, params: &mut [Array2<T>], grads: &[Array2<T>]) -> T {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let norm = global_norm(grads);
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => T::one(),
        };
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t);
        let bc2 = T::one() - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g * scale;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
        }
        norm
    }
}

pub fn global_norm<T: Real>(grads: &[Array2<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt()
}
