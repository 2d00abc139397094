//! Bigram-model contamination demo: memorize a small set of sequences inside
//! a step window, then watch the loss gap to a holdout set decay.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::optimizer::{Hyper, OptimizerConfig, OptimizerKind};
use crate::config::RunConfig;
use crate::contamination::{build_plan, inject, synth_corpus_with, PlanRequest, Placement, SynthOptions, TokenStream};
use crate::dedup::QuestionRecord;
use crate::error::{Error, Result};
use crate::ledger::DecayPrefix;
use crate::schedule::ScheduleSpec;
use crate::sim::trace::DIVERGENCE_NORM;

pub const DEFAULT_STEPS: u64 = 200_000;
pub const DEFAULT_LR: f64 = 2.2e-4;
pub const DEFAULT_REPEAT_BLOCK: usize = 4096;

/// What the model trains on after the contamination window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Continuation {
    /// Unseen data from the source until the end.
    Fresh,
    /// The first `block_tokens` clean tokens after the window, cycled.
    Repeated { block_tokens: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToySettings {
    pub vocab: usize,
    pub batch_tokens: usize,
    /// Contamination window as fractions of the total steps.
    pub window: (f64, f64),
    pub contaminated_seqs: usize,
    pub holdout_seqs: usize,
    pub seq_len: usize,
    /// Share of the window's training tokens taken by injected sequences;
    /// 0 runs the null experiment.
    pub contamination_share: f64,
    pub continuation: Continuation,
    pub checkpoint_every: u64,
    pub concentration: f64,
}

impl Default for ToySettings {
    fn default() -> Self {
        ToySettings {
            vocab: 256,
            batch_tokens: 64,
            window: (0.2, 0.4),
            contaminated_seqs: 32,
            holdout_seqs: 1024,
            seq_len: 26,
            contamination_share: 0.25,
            continuation: Continuation::Fresh,
            checkpoint_every: 500,
            concentration: 1.0,
        }
    }
}

/// AdamW (beta2 0.95 as in LLM pretraining, epsilon 0) over the bigram table
/// with a constant rate after a short warmup.
pub fn toy_optimizer(total_steps: u64, lr: f64, weight_decay: f64, seed: u64) -> OptimizerConfig {
    let mut schedule = ScheduleSpec::constant(lr, total_steps);
    schedule.warmup_steps = (total_steps / 100).min(2000);
    let mut run = RunConfig::new("toy-bigram", weight_decay, schedule);
    run.total_steps = total_steps;
    let hyper = Hyper { beta2: 0.95, adam_epsilon: 0.0, ..Hyper::adamw() };
    OptimizerConfig::new(hyper, run, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub step: u64,
    /// Mean CE on contaminated sequences minus mean CE on holdout sequences.
    pub gap: f64,
    /// Standard error of `gap` from the per-sequence spread of both sets.
    pub sigma: f64,
    pub contaminated_ce: f64,
    pub holdout_ce: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapSeries {
    pub points: Vec<GapPoint>,
    pub window_steps: (u64, u64),
    pub repetitions: u32,
    pub weight_decay: f64,
}

impl GapSeries {
    pub fn final_point(&self) -> &GapPoint {
        self.points.last().expect("series has a checkpoint")
    }

    /// Checkpoint with the largest |gap|.
    pub fn peak(&self) -> &GapPoint {
        self.points
            .iter()
            .max_by(|a, b| a.gap.abs().total_cmp(&b.gap.abs()))
            .expect("series has a checkpoint")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,gap_ce")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.step, p.gap)?;
        }
        Ok(())
    }

    /// `(step, remaining, theory)` after the peak: remaining = |gap| / |peak gap|,
    /// theory = the cumulative decay factor from the peak step.
    pub fn decay_comparison(&self, prefix: &DecayPrefix) -> Result<Vec<(u64, f64, f64)>> {
        let peak = *self.peak();
        self.points
            .iter()
            .filter(|p| p.step > peak.step)
            .map(|p| Ok((p.step, p.gap.abs() / peak.gap.abs(), prefix.survival(peak.step, p.step)?)))
            .collect()
    }
}

/// Synthetic source, training stream and evaluation sets for one experiment.
#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub stream: TokenStream,
    pub contaminated: Vec<Vec<u32>>,
    pub holdout: Vec<Vec<u32>>,
    pub window_steps: (u64, u64),
    pub repetitions: u32,
}

fn encode_seq(seq: &[u32]) -> String {
    seq.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn decode_seq(text: &str) -> Vec<u32> {
    text.split_whitespace().map(|t| t.parse().expect("encoded token")).collect()
}

impl ToyCorpus {
    /// Builds a stream of exactly `total_steps * batch_tokens + 1` tokens with
    /// the contaminated sequences injected inside the step window.
    pub fn build(settings: &ToySettings, total_steps: u64, seed: u64) -> Result<Self> {
        let s = settings;
        let (w0, w1) = s.window;
        if !(0.0..1.0).contains(&w0) || !(w0 < w1 && w1 <= 1.0) {
            return Err(Error::arg(format!("window [{w0}, {w1}] must satisfy 0 <= start < end <= 1")));
        }
        if s.batch_tokens == 0 || total_steps == 0 {
            return Err(Error::arg("batch_tokens and total_steps must be positive"));
        }
        if !(0.0..1.0).contains(&s.contamination_share) {
            return Err(Error::arg(format!("contamination_share must be in [0, 1), got {}", s.contamination_share)));
        }
        let window_steps = ((w0 * total_steps as f64).round() as u64, (w1 * total_steps as f64).round() as u64);
        if window_steps.0 >= window_steps.1 {
            return Err(Error::arg("contamination window covers no steps"));
        }
        let total = total_steps as usize * s.batch_tokens + 1;
        let window_tokens = ((window_steps.1 - window_steps.0) as usize * s.batch_tokens) as f64;
        let span = s.seq_len + 2;
        let repetitions = if s.contamination_share > 0.0 && s.contaminated_seqs > 0 {
            ((s.contamination_share * window_tokens / (s.contaminated_seqs * span) as f64).round() as u32).max(1)
        } else {
            0
        };
        let injected = repetitions as usize * s.contaminated_seqs * span;
        if injected >= total {
            return Err(Error::arg("injected tokens exceed the training stream"));
        }
        let clean_len = total - injected;
        let opts = SynthOptions {
            concentration: s.concentration,
            pool_size: s.contaminated_seqs + s.holdout_seqs,
            sequence_len: s.seq_len,
        };
        let corpus = synth_corpus_with(s.vocab, clean_len, seed, opts)?;
        let records: Vec<QuestionRecord> = corpus
            .pool
            .iter()
            .enumerate()
            .map(|(i, seq)| {
                let mut r = QuestionRecord::new(format!("seq{i:05}"), "synthetic", "", vec![String::new()], 0);
                r.contamination_text = encode_seq(seq);
                r
            })
            .collect();
        let seq_of = |id: &String| decode_seq(&records[id[3..].parse::<usize>().unwrap()].contamination_text);

        // Clean-stream fractions whose insertion points land on the window's
        // first and last token once the spans are in place.
        let start = window_steps.0 as f64 * s.batch_tokens as f64 / clean_len as f64;
        let end = (window_steps.1 as f64 * s.batch_tokens as f64 - injected as f64) / clean_len as f64;
        let (subset_sizes, reps) = if repetitions > 0 { (vec![s.contaminated_seqs], vec![repetitions]) } else { (vec![s.contaminated_seqs], vec![1]) };
        let plan = build_plan(
            &records,
            &PlanRequest {
                subset_sizes,
                repetitions: reps,
                holdout_size: s.holdout_seqs,
                placement: Placement::Window { start_fraction: start.clamp(0.0, 1.0), end_fraction: end.clamp(0.0, 1.0) },
                seed,
                weights: None,
            },
        )?;
        let contaminated: Vec<Vec<u32>> = plan.subsets[0].question_ids.iter().map(seq_of).collect();
        let holdout: Vec<Vec<u32>> = plan.holdout_ids.iter().map(seq_of).collect();
        let mut stream = if repetitions > 0 {
            inject(&corpus.stream, &plan, &records, &|t: &str| decode_seq(t))?
        } else {
            corpus.stream.clone()
        };
        debug_assert_eq!(stream.len(), total);
        if let Continuation::Repeated { block_tokens } = s.continuation {
            if block_tokens == 0 {
                return Err(Error::arg("repeated block must hold at least one token"));
            }
            let from = window_steps.1 as usize * s.batch_tokens;
            let block: Vec<u32> = stream.tokens[from..(from + block_tokens).min(total)].to_vec();
            for (i, t) in stream.tokens[from..].iter_mut().enumerate() {
                *t = block[i % block.len()];
            }
            stream.provenance.clear();
        }
        Ok(ToyCorpus { stream, contaminated, holdout, window_steps, repetitions })
    }
}

/// AdamW (or SGD with weight decay) over a row-major table where each step
/// touches only a few rows. Idle rows are advanced in closed form when next
/// needed: with a zero gradient and `adam_epsilon = 0` the Adam direction of
/// every component in the row is a common scalar times `m / sqrt(v)` from
/// the last touch, so the lazy result matches the dense update.
struct RowOptimizer {
    kind: OptimizerKind,
    beta1: f64,
    beta2: f64,
    size: usize,
    lr: Vec<f64>,
    keep: Vec<f64>,
    bias: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    current: Vec<u64>,
}

impl RowOptimizer {
    fn new(opt: &OptimizerConfig, size: usize) -> Result<Self> {
        let h = opt.hyper;
        match h.kind {
            OptimizerKind::AdamW if h.adam_epsilon != 0.0 => {
                return Err(Error::Config("the bigram demo's row-lazy AdamW needs adam_epsilon = 0".into()))
            }
            OptimizerKind::SgdMomentumWd => {
                return Err(Error::Config("the bigram demo supports adamw and sgd-wd".into()))
            }
            _ => {}
        }
        let lr = opt.run.schedule.rates();
        let gamma = opt.run.weight_decay;
        let keep: Vec<f64> = lr.iter().map(|l| 1.0 - gamma * l).collect();
        // index s-1 holds sqrt(1 - beta2^s) / (1 - beta1^s)
        let bias = (1..=lr.len() as i32)
            .map(|s| (1.0 - h.beta2.powi(s)).sqrt() / (1.0 - h.beta1.powi(s)))
            .collect();
        let adam = h.kind == OptimizerKind::AdamW;
        Ok(RowOptimizer {
            kind: h.kind,
            beta1: h.beta1,
            beta2: h.beta2,
            size,
            lr,
            keep,
            bias,
            m: if adam { vec![0.0; size * size] } else { Vec::new() },
            v: if adam { vec![0.0; size * size] } else { Vec::new() },
            current: vec![0; size],
        })
    }

    /// Applies zero-gradient steps to row `a` until it reflects step `to`.
    fn catch_up(&mut self, theta: &mut [f64], a: usize, to: u64) {
        let from = self.current[a];
        if from >= to {
            return;
        }
        self.current[a] = to;
        let row = a * self.size..(a + 1) * self.size;
        let mut scale = 1.0;
        let mut drift = 0.0;
        if self.kind == OptimizerKind::AdamW {
            let rho = self.beta1 / self.beta2.sqrt();
            let mut pw = 1.0;
            for s in from + 1..=to {
                let i = s as usize - 1;
                pw *= rho;
                scale *= self.keep[i];
                drift = self.keep[i] * drift + self.lr[i] * pw * self.bias[i];
            }
            let n = (to - from) as i32;
            let (d1, d2) = (self.beta1.powi(n), self.beta2.powi(n));
            for ((th, m), v) in theta[row.clone()].iter_mut().zip(&mut self.m[row.clone()]).zip(&mut self.v[row]) {
                let dir = if *v > 0.0 { *m / v.sqrt() } else { 0.0 };
                *th = scale * *th - drift * dir;
                *m *= d1;
                *v *= d2;
            }
        } else {
            for s in from + 1..=to {
                scale *= self.keep[s as usize - 1];
            }
            theta[row].iter_mut().for_each(|th| *th *= scale);
        }
    }

    /// Step `step` for row `a`, which must be current through `step - 1`.
    fn update_row(&mut self, theta: &mut [f64], a: usize, grad: &[f64], step: u64) {
        debug_assert_eq!(self.current[a] + 1, step);
        self.current[a] = step;
        let i = step as usize - 1;
        let (lr, keep) = (self.lr[i], self.keep[i]);
        let row = a * self.size..(a + 1) * self.size;
        if self.kind == OptimizerKind::AdamW {
            let (b1, b2) = (self.beta1, self.beta2);
            let t = step as i32;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            for (((th, m), v), &g) in
                theta[row.clone()].iter_mut().zip(&mut self.m[row.clone()]).zip(&mut self.v[row]).zip(grad)
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let denom = (*v / c2).sqrt();
                let dir = if denom == 0.0 { 0.0 } else { (*m / c1) / denom };
                *th = keep * *th - lr * dir;
            }
        } else {
            for (th, &g) in theta[row].iter_mut().zip(grad) {
                *th = keep * *th - lr * g;
            }
        }
    }
}

struct Bigram {
    size: usize,
    logits: Vec<f64>,
}

impl Bigram {
    fn row(&self, a: u32) -> &[f64] {
        &self.logits[a as usize * self.size..(a as usize + 1) * self.size]
    }

    /// One training step on the next-token pairs of `window` (mean CE).
    fn train_step(&mut self, opt: &mut RowOptimizer, window: &[u32], step: u64, pairs: &mut Vec<(u32, u32)>, probs: &mut [f64], grad: &mut [f64]) {
        let scale = 1.0 / (window.len() - 1) as f64;
        pairs.clear();
        pairs.extend(window.windows(2).map(|p| (p[0], p[1])));
        pairs.sort_unstable();
        let mut i = 0;
        while i < pairs.len() {
            let a = pairs[i].0;
            let mut j = i;
            while j < pairs.len() && pairs[j].0 == a {
                j += 1;
            }
            opt.catch_up(&mut self.logits, a as usize, step - 1);
            softmax(self.row(a), probs);
            let count = (j - i) as f64 * scale;
            for (g, &p) in grad.iter_mut().zip(probs.iter()) {
                *g = count * p;
            }
            for &(_, b) in &pairs[i..j] {
                grad[b as usize] -= scale;
            }
            opt.update_row(&mut self.logits, a as usize, grad, step);
            i = j;
        }
    }

    fn log_softmax_table(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.logits.len()];
        for (row, o) in self.logits.chunks(self.size).zip(out.chunks_mut(self.size)) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&z| (z - mx).exp()).sum::<f64>().ln();
            for (oi, &z) in o.iter_mut().zip(row) {
                *oi = z - lse;
            }
        }
        out
    }
}

fn softmax(row: &[f64], out: &mut [f64]) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - mx).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Per-sequence mean next-token CE under a log-softmax table.
fn sequence_ces(table: &[f64], size: usize, seqs: &[Vec<u32>]) -> Vec<f64> {
    seqs.iter()
        .map(|s| {
            let n = (s.len() - 1) as f64;
            -s.windows(2).map(|p| table[p[0] as usize * size + p[1] as usize]).sum::<f64>() / n
        })
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Trains the bigram model on `corpus.stream`, `batch_tokens` next-token pairs
/// per step, and records the contaminated-minus-holdout CE gap at checkpoints.
pub fn toy_contamination_run(corpus: &ToyCorpus, settings: &ToySettings, opt: &OptimizerConfig) -> Result<GapSeries> {
    opt.validate()?;
    let total_steps = opt.run.total_steps;
    let b = settings.batch_tokens;
    if corpus.stream.len() < total_steps as usize * b + 1 {
        return Err(Error::arg(format!(
            "stream of {} tokens is too short for {total_steps} steps of {b} tokens",
            corpus.stream.len()
        )));
    }
    if corpus.window_steps.1 > total_steps {
        return Err(Error::arg("contamination window extends past the run"));
    }
    if corpus.contaminated.is_empty() || corpus.holdout.is_empty() {
        return Err(Error::arg("need at least one contaminated and one holdout sequence"));
    }
    let size = corpus
        .stream
        .tokens
        .iter()
        .chain(corpus.contaminated.iter().flatten())
        .chain(corpus.holdout.iter().flatten())
        .copied()
        .max()
        .unwrap_or(0) as usize
        + 1;
    let mut model = Bigram { size, logits: vec![0.0; size * size] };
    let mut rows = RowOptimizer::new(opt, size)?;
    let mut grad = vec![0.0; size];
    let mut probs = vec![0.0; size];
    let mut pairs = Vec::with_capacity(b);
    let every = settings.checkpoint_every.max(1);
    let gamma = opt.run.weight_decay;

    let checkpoint = |model: &Bigram, step: u64| {
        let table = model.log_softmax_table();
        let (c, vc) = mean_var(&sequence_ces(&table, size, &corpus.contaminated));
        let (h, vh) = mean_var(&sequence_ces(&table, size, &corpus.holdout));
        GapPoint {
            step,
            gap: c - h,
            sigma: (vc / corpus.contaminated.len() as f64 + vh / corpus.holdout.len() as f64).sqrt(),
            contaminated_ce: c,
            holdout_ce: h,
        }
    };
    let mut points = vec![checkpoint(&model, 0)];
    for step in 1..=total_steps {
        let from = (step as usize - 1) * b;
        model.train_step(&mut rows, &corpus.stream.tokens[from..from + b + 1], step, &mut pairs, &mut probs, &mut grad);
        if step % every == 0 || step == total_steps {
            for a in 0..size {
                rows.catch_up(&mut model.logits, a, step);
            }
            let norm = model.logits.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence { step, norm });
            }
            if let Some(i) = model.logits.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numeric { step, what: format!("logit {i} is not finite") });
            }
            points.push(checkpoint(&model, step));
        }
    }
    Ok(GapSeries { points, window_steps: corpus.window_steps, repetitions: corpus.repetitions, weight_decay: gamma })
}

/// Builds the corpus and runs the demo in one call.
pub fn run_toy(settings: &ToySettings, opt: &OptimizerConfig) -> Result<GapSeries> {
    let corpus = ToyCorpus::build(settings, opt.run.total_steps, opt.rng_seed)?;
    toy_contamination_run(&corpus, settings, opt)
}
