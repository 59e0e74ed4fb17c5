//! First-order optimizers over [`Params`].

use serde::{Deserialize, Serialize};

use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "momentum" => Ok(Self::Momentum),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer `{other}` (sgd|momentum|adam)")),
        }
    }
}

const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    first: Option<Params>,
    second: Option<Params>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, like: &Params) -> Self {
        let first = (kind != OptimizerKind::Sgd).then(|| like.zeros_like());
        let second = (kind == OptimizerKind::Adam).then(|| like.zeros_like());
        Self {
            kind,
            lr,
            step: 0,
            first,
            second,
        }
    }

    /// Applies one update with gradient `g`.
    pub fn step(&mut self, params: &mut Params, g: &Params) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.groups.iter_mut().zip(&g.groups) {
                    for (x, dx) in p.data.iter_mut().zip(&g.data) {
                        *x -= lr * dx;
                    }
                }
            }
            OptimizerKind::Momentum => {
                let v = self.first.as_mut().expect("momentum state");
                for ((p, g), v) in params.groups.iter_mut().zip(&g.groups).zip(&mut v.groups) {
                    for ((x, dx), vx) in p.data.iter_mut().zip(&g.data).zip(&mut v.data) {
                        *vx = MOMENTUM * *vx + dx;
                        *x -= lr * *vx;
                    }
                }
            }
            OptimizerKind::Adam => {
                let m = self.first.as_mut().expect("adam state");
                let v = self.second.as_mut().expect("adam state");
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for (((p, g), m), v) in params
                    .groups
                    .iter_mut()
                    .zip(&g.groups)
                    .zip(&mut m.groups)
                    .zip(&mut v.groups)
                {
                    for (((x, dx), mx), vx) in p
                        .data
                        .iter_mut()
                        .zip(&g.data)
                        .zip(&mut m.data)
                        .zip(&mut v.data)
                    {
                        *mx = BETA1 * *mx + (1.0 - BETA1) * dx;
                        *vx = BETA2 * *vx + (1.0 - BETA2) * dx * dx;
                        *x -= lr * (*mx / c1) / ((*vx / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Rescales `g` so its global norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm(g: &mut Params, max_norm: f64) -> f64 {
    let norm = g.norm();
    if norm > max_norm && norm.is_finite() {
        g.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Activation, ModelConfig};

    fn params(v: f64) -> Params {
        let cfg = ModelConfig {
            embedding_dim: 1,
            hidden_dim: 1,
            attention_dim: None,
            generator_dims: [1, 1],
            activation: Activation::Relu,
            max_words: 1,
        };
        let mut p = Params::zeros(&cfg, 1, 1);
        p.groups
            .iter_mut()
            .for_each(|t| t.data.iter_mut().for_each(|x| *x = v));
        p
    }

    #[test]
    fn sgd_and_momentum_steps() {
        let mut p = params(1.0);
        let g = params(0.5);
        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 0.1, &p);
        sgd.step(&mut p, &g);
        assert!((p.groups[0].data[0] - 0.95).abs() < 1e-15);

        let mut p = params(1.0);
        let mut mom = Optimizer::new(OptimizerKind::Momentum, 0.1, &p);
        mom.step(&mut p, &g);
        mom.step(&mut p, &g);
        // v1 = 0.5, v2 = 0.95; 1 - 0.1 (0.5 + 0.95)
        assert!((p.groups[3].data[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = params(1.0);
        let g = params(-3.0);
        let mut adam = Optimizer::new(OptimizerKind::Adam, 0.01, &p);
        adam.step(&mut p, &g);
        assert!((p.groups[0].data[0] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        for kind in [
            OptimizerKind::Sgd,
            OptimizerKind::Momentum,
            OptimizerKind::Adam,
        ] {
            let mut p = params(0.3);
            let before = p.clone();
            let mut opt = Optimizer::new(kind, 0.0, &p);
            for _ in 0..5 {
                opt.step(&mut p, &params(1.7));
            }
            assert_eq!(p, before);
        }
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = params(1.0);
        let n = clip_global_norm(&mut g, 1.0);
        assert!((n - (g.len() as f64).sqrt()).abs() < 1e-12);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }
}
