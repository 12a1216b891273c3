//! Ascent steps on the logit matrix.

use std::fmt;
use std::str::FromStr;

use crate::scalar::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain gradient ascent with a fixed learning rate.
    Sgd,
    /// Adam with decoupled weight decay.
    AdamW,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::AdamW => "adamw",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adamw" | "adam" => Ok(Self::AdamW),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    weight_decay: T,
    first: Vec<T>,
    second: Vec<T>,
    steps: i32,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T, weight_decay: T) -> Self {
        Self {
            kind,
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    /// Moves `params` uphill along `grad`.
    pub fn ascend(&mut self, params: &mut Matrix<T>, grad: &Matrix<T>) {
        let params = params.as_mut_slice();
        let grad = grad.as_slice();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += self.lr * *g;
                }
            }
            OptimizerKind::AdamW => {
                if self.first.len() != params.len() {
                    self.first = vec![T::zero(); params.len()];
                    self.second = vec![T::zero(); params.len()];
                }
                self.steps += 1;
                let c1 = T::one() - self.beta1.powi(self.steps);
                let c2 = T::one() - self.beta2.powi(self.steps);
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    *m = self.beta1 * *m + (T::one() - self.beta1) * g;
                    *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
                    *p = *p - self.lr * self.weight_decay * *p + self.lr * update;
                }
            }
        }
    }
}
