use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[serde(rename = "adamw")]
    AdamW,
    SgdWd,
    SgdMomentumWd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adamw" => Ok(OptimizerKind::AdamW),
            "sgd-wd" => Ok(OptimizerKind::SgdWd),
            "sgd-momentum-wd" => Ok(OptimizerKind::SgdMomentumWd),
            other => Err(Error::arg(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Update-rule constants; the learning rate and weight decay come from the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub momentum: f64,
}

impl Hyper {
    pub fn adamw() -> Self {
        Hyper {
            kind: OptimizerKind::AdamW,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            momentum: 0.0,
        }
    }

    pub fn sgd() -> Self {
        Hyper {
            kind: OptimizerKind::SgdWd,
            beta1: 0.0,
            beta2: 0.0,
            adam_epsilon: 1e-8,
            momentum: 0.0,
        }
    }

    pub fn sgd_momentum(momentum: f64) -> Self {
        Hyper {
            kind: OptimizerKind::SgdMomentumWd,
            momentum,
            ..Hyper::sgd()
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub hyper: Hyper,
    pub run: RunConfig,
    pub rng_seed: u64,
}

impl OptimizerConfig {
    pub fn new(hyper: Hyper, run: RunConfig, rng_seed: u64) -> Self {
        OptimizerConfig { hyper, run, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let unit = |name: &str, x: f64| {
            if (0.0..1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1), got {x}")))
            }
        };
        unit("beta1", h.beta1)?;
        unit("beta2", h.beta2)?;
        unit("momentum", h.momentum)?;
        // Zero is allowed: components whose second moment is still zero get a zero direction.
        if !(h.adam_epsilon >= 0.0 && h.adam_epsilon.is_finite()) {
            return Err(Error::Config(format!("adam_epsilon must be >= 0, got {}", h.adam_epsilon)));
        }
        self.run.validate()
    }
}

/// Mutable optimizer state for one parameter vector.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    hyper: Hyper,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(hyper: Hyper, dim: usize) -> Self {
        let second = if hyper.kind == OptimizerKind::AdamW { vec![0.0; dim] } else { Vec::new() };
        let first = if hyper.kind == OptimizerKind::SgdWd { Vec::new() } else { vec![0.0; dim] };
        OptimizerState {
            hyper,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One decoupled update. `grad` must be evaluated at the incoming `theta`.
    /// First `theta <- (1 - gamma * lr) * theta`, then `theta <- theta + u`
    /// with `u = -lr * g_hat`, written into `update`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, gamma: f64, update: &mut [f64]) -> Result<()> {
        debug_assert_eq!(theta.len(), grad.len());
        debug_assert_eq!(theta.len(), update.len());
        self.step += 1;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                step: self.step,
                what: format!("gradient component {i} = {}", grad[i]),
            });
        }
        self.direction(grad, update);
        let keep = 1.0 - gamma * lr;
        for (th, u) in theta.iter_mut().zip(update.iter_mut()) {
            *u *= -lr;
            *th = *th * keep + *u;
        }
        Ok(())
    }

    // Writes the adaptive gradient g_hat into `out`.
    fn direction(&mut self, grad: &[f64], out: &mut [f64]) {
        let h = self.hyper;
        match h.kind {
            OptimizerKind::SgdWd => out.copy_from_slice(grad),
            OptimizerKind::SgdMomentumWd => {
                for ((buf, &g), o) in self.first.iter_mut().zip(grad).zip(out.iter_mut()) {
                    *buf = h.momentum * *buf + g;
                    *o = *buf;
                }
            }
            OptimizerKind::AdamW => {
                let t = self.step as i32;
                let c1 = 1.0 - h.beta1.powi(t);
                let c2 = 1.0 - h.beta2.powi(t);
                for (((m, v), &g), o) in self
                    .first
                    .iter_mut()
                    .zip(self.second.iter_mut())
                    .zip(grad)
                    .zip(out.iter_mut())
                {
                    *m = h.beta1 * *m + (1.0 - h.beta1) * g;
                    *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    let denom = v_hat.sqrt() + h.adam_epsilon;
                    *o = if denom == 0.0 { 0.0 } else { m_hat / denom };
                }
            }
        }
    }
}

/// Single AdamW step on a state; see [`OptimizerState::step`].
pub fn step_adamw(state: &mut OptimizerState, theta: &mut [f64], grad: &[f64], lr: f64, gamma: f64) -> Result<Vec<f64>> {
    let mut update = vec![0.0; theta.len()];
    state.step(theta, grad, lr, gamma, &mut update)?;
    Ok(update)
}
