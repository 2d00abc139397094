//! Two-stage forgetting experiment with orthogonal gradients.
//!
//! Coordinates are split into three blocks: contaminated-sample losses only
//! depend on block A, clean-sample losses only on block B, and the initial
//! weights live in block C. Stage one runs plain SGD (no weight decay) over
//! the contaminated samples; stage two runs the configured optimizer with
//! weight decay over the clean samples. Because no stage-two gradient touches
//! block A, the projection of the weights onto the contamination direction can
//! only shrink through weight decay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::optimizer::{Hyper, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingProbe {
    /// Sum of the stage-one updates.
    pub theta_cont: Vec<f64>,
    /// `(clean step, |theta^T theta_cont| / |theta_cont|^2)`, starting with
    /// step 0 at the stage boundary.
    pub ratio_series: Vec<(u64, f64)>,
}

impl ForgettingProbe {
    /// First clean-stage step whose ratio is at or below `epsilon`.
    pub fn first_step_below(&self, epsilon: f64) -> Option<u64> {
        self.ratio_series.iter().find(|r| r.1 <= epsilon).map(|r| r.0)
    }
}

#[derive(Clone, Debug)]
struct Blocks {
    cont: std::ops::Range<usize>,
    clean: std::ops::Range<usize>,
    init: std::ops::Range<usize>,
}

impl Blocks {
    fn split(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::arg(format!(
                "orthogonal construction needs dim >= 3 (one coordinate per block), got {dim}"
            )));
        }
        let a = (dim - 1) / 2;
        Ok(Blocks {
            cont: 0..a,
            clean: a..dim - 1,
            init: dim - 1..dim,
        })
    }
}

/// Least-squares sample `0.5 * |theta[block] - target|^2`.
fn sample_grad(theta: &[f64], block: &std::ops::Range<usize>, target: &[f64], grad: &mut [f64]) {
    grad.fill(0.0);
    for (i, t) in block.clone().zip(target) {
        grad[i] = theta[i] - t;
    }
}

/// Runs the experiment. `opt.run` describes the clean stage (its length is
/// `n_clean`); stage one uses `contamination_lr`.
pub fn orthogonal_forgetting_experiment(
    dim: usize,
    n_cont: usize,
    n_clean: usize,
    contamination_lr: f64,
    opt: &OptimizerConfig,
) -> Result<ForgettingProbe> {
    let blocks = Blocks::split(dim)?;
    if n_cont == 0 {
        return Err(Error::arg("need at least one contaminated sample"));
    }
    if opt.run.total_steps != n_clean as u64 {
        return Err(Error::arg(format!(
            "clean stage has {n_clean} steps but the run config has {}",
            opt.run.total_steps
        )));
    }
    opt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.rng_seed);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };

    let cont_targets: Vec<Vec<f64>> = (0..n_cont).map(|_| normal(blocks.cont.len())).collect();
    let clean_pool = n_clean.clamp(1, 64);
    let clean_targets: Vec<Vec<f64>> = (0..clean_pool).map(|_| normal(blocks.clean.len())).collect();

    let mut theta = vec![0.0; dim];
    for (i, v) in blocks.init.clone().zip(normal(blocks.init.len())) {
        theta[i] = v;
    }
    let theta_init = theta.clone();
    let mut grad = vec![0.0; dim];
    let mut update = vec![0.0; dim];

    let mut sgd = OptimizerState::new(Hyper::sgd(), dim);
    for target in &cont_targets {
        sample_grad(&theta, &blocks.cont, target, &mut grad);
        sgd.step(&mut theta, &grad, contamination_lr, 0.0, &mut update)?;
    }
    let theta_cont: Vec<f64> = theta.iter().zip(&theta_init).map(|(a, b)| a - b).collect();
    let norm2: f64 = theta_cont.iter().map(|x| x * x).sum();
    if norm2 == 0.0 {
        return Err(Error::arg("contamination stage produced no update"));
    }
    let ratio = |theta: &[f64]| theta.iter().zip(&theta_cont).map(|(a, b)| a * b).sum::<f64>().abs() / norm2;

    let mut ratio_series = Vec::with_capacity(n_clean + 1);
    ratio_series.push((0, ratio(&theta)));
    let mut state = OptimizerState::new(opt.hyper, dim);
    for (i, lr) in opt.run.schedule.rates().into_iter().enumerate() {
        let target = &clean_targets[i % clean_pool];
        sample_grad(&theta, &blocks.clean, target, &mut grad);
        state.step(&mut theta, &grad, lr, opt.run.weight_decay, &mut update)?;
        ratio_series.push((i as u64 + 1, ratio(&theta)));
    }
    Ok(ForgettingProbe {
        theta_cont,
        ratio_series,
    })
}
