use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimizer::{OptimizerConfig, OptimizerState};
use super::problem::SimProblem;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ledger::DecayPrefix;

/// Runs abort when the weight norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e12;

pub const SIMT_MAGIC: [u8; 4] = *b"SIMT";
pub const SIMT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub example_id: u64,
    /// Loss at the pre-update weights.
    pub loss: f64,
    /// Signed update `u_t = -lr_t * g_hat_t`.
    pub update: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub theta_init: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub theta_final: Vec<f64>,
}

impl SimTrace {
    pub fn dim(&self) -> usize {
        self.theta_init.len()
    }

    pub fn steps(&self) -> u64 {
        self.records.len() as u64
    }

    /// Per-step summary: `step,lambda,update_norm,example_id`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,lambda,update_norm,example_id")?;
        for r in &self.records {
            let norm = r.update.iter().map(|u| u * u).sum::<f64>().sqrt();
            writeln!(w, "{},{:e},{:e},{}", r.step, r.lr, norm, r.example_id)?;
        }
        Ok(())
    }

    /// Binary sidecar with every update vector: 16-byte header (`SIMT`,
    /// version, T, D as little-endian u32) then `T * D` little-endian f64,
    /// row-major by step.
    pub fn write_updates<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (t, d) = (self.records.len(), self.dim());
        let too_big = || io::Error::new(io::ErrorKind::InvalidInput, "trace too large for u32 header");
        w.write_all(&SIMT_MAGIC)?;
        w.write_all(&SIMT_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(t).map_err(|_| too_big())?.to_le_bytes())?;
        w.write_all(&u32::try_from(d).map_err(|_| too_big())?.to_le_bytes())?;
        for r in &self.records {
            for u in &r.update {
                w.write_all(&u.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a sidecar written by [`SimTrace::write_updates`]; returns the update
/// rows.
pub fn read_updates<R: Read>(mut r: R) -> Result<Vec<Vec<f64>>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != SIMT_MAGIC {
        return Err(Error::format("bad SIMT magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != SIMT_VERSION {
        return Err(Error::format(format!("unsupported SIMT version {}", word(4))));
    }
    let (t, d) = (word(8) as usize, word(12) as usize);
    let mut rows = Vec::with_capacity(t);
    let mut buf = [0u8; 8];
    for _ in 0..t {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut buf)?;
            row.push(f64::from_le_bytes(buf));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs the optimizer for `opt.run.total_steps` steps, recording every update.
pub fn run_sim<P: SimProblem + ?Sized>(problem: &P, opt: &OptimizerConfig) -> Result<SimTrace> {
    opt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.rng_seed);
    let theta_init = problem.init(&mut rng);
    run_from(problem, opt, theta_init)
}

/// As [`run_sim`] but with explicit initial weights.
pub fn run_from<P: SimProblem + ?Sized>(problem: &P, opt: &OptimizerConfig, theta_init: Vec<f64>) -> Result<SimTrace> {
    let d = problem.dim();
    if theta_init.len() != d {
        return Err(Error::arg(format!("initial weights have length {}, problem has {d}", theta_init.len())));
    }
    let run = &opt.run;
    let mut state = OptimizerState::new(opt.hyper, d);
    let mut theta = theta_init.clone();
    let mut grad = vec![0.0; d];
    let mut records = Vec::with_capacity(run.total_steps as usize);
    for (i, lr) in run.schedule.rates().into_iter().enumerate() {
        let step = i as u64 + 1;
        let example_id = problem.example_at(step);
        let loss = problem.loss_grad(&theta, example_id, &mut grad);
        let mut update = vec![0.0; d];
        state.step(&mut theta, &grad, lr, run.weight_decay, &mut update)?;
        let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { step, norm });
        }
        records.push(StepRecord {
            step,
            lr,
            example_id,
            loss,
            update,
        });
    }
    Ok(SimTrace {
        theta_init,
        records,
        theta_final: theta,
    })
}

/// Rebuilds the final weights from the decomposition
/// `W(0, T) * theta_0 + sum_t W(t, T) * u_t`.
pub fn reconstruct_theta(trace: &SimTrace, run: &RunConfig) -> Result<Vec<f64>> {
    if trace.steps() != run.total_steps {
        return Err(Error::arg(format!(
            "trace has {} steps, run has {}",
            trace.steps(),
            run.total_steps
        )));
    }
    if trace.records.iter().any(|r| r.update.len() != trace.dim()) {
        return Err(Error::arg("update vector length mismatch"));
    }
    let prefix = DecayPrefix::build(run)?;
    let total = run.total_steps;
    let init_w = prefix.survival_unchecked(0, total);
    let mut theta: Vec<f64> = trace.theta_init.iter().map(|x| init_w * x).collect();
    for r in &trace.records {
        let w = prefix.survival_unchecked(r.step, total);
        for (th, u) in theta.iter_mut().zip(&r.update) {
            *th += w * u;
        }
    }
    Ok(theta)
}

/// `max_k |a_k - b_k| / max_k |b_k|` (absolute when `b` is all zeros).
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}
