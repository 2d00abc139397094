//! Cumulative weight-decay bookkeeping.
//!
//! With decoupled weight decay, the weights after `T` steps unroll to
//!
//! ```text
//! theta_T = W(0, T) * theta_0 + sum_t W(t, T) * u_t,   W(t, T) = prod_{i=t+1..T} (1 - gamma * lr_i)
//! ```
//!
//! where `u_t = -lr_t * g_t` is the signed gradient update of step `t`. The
//! product is exclusive of step `t` itself: the update made at step `t` is
//! applied after that step's decay, so it is first decayed at step `t + 1`.
//! Origin `0` denotes the initial weights.
//!
//! Products are never multiplied out. [`DecayPrefix`] stores prefix sums of
//! `ln(1 - gamma * lr_i)` so that any window is one subtraction and one `exp`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::sig17;

/// Decay factors above this make `ln(1 - x) ~ -x` visibly inaccurate.
pub const SMALL_DECAY_LIMIT: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct DecayPrefix {
    run_name: String,
    gamma: f64,
    rates: Vec<f64>,
    log_cum: Vec<f64>,
}

impl DecayPrefix {
    pub fn build(run: &RunConfig) -> Result<Self> {
        if run.total_steps != run.schedule.total_steps {
            return Err(Error::Config("total_steps disagrees with schedule".into()));
        }
        run.schedule.validate()?;
        Self::from_rates(&run.name, run.weight_decay, run.schedule.rates())
    }

    /// Builds a prefix directly from per-step rates (`rates[t - 1]` is the
    /// rate of step `t`).
    pub fn from_rates(name: &str, gamma: f64, rates: Vec<f64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::arg(format!("weight decay must be >= 0, got {gamma}")));
        }
        let mut log_cum = Vec::with_capacity(rates.len() + 1);
        log_cum.push(0.0);
        // Neumaier-compensated running sum; T can reach 10^6 terms.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (i, &lr) in rates.iter().enumerate() {
            let step = i as u64 + 1;
            let x = gamma * lr;
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Validation {
                    step,
                    reason: format!("invalid learning rate {lr}"),
                });
            }
            if x >= 1.0 {
                return Err(Error::Validation {
                    step,
                    reason: format!("weight_decay * lr = {x} >= 1"),
                });
            }
            let term = (-x).ln_1p();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            log_cum.push(sum + comp);
        }
        Ok(DecayPrefix {
            run_name: name.to_string(),
            gamma,
            rates,
            log_cum,
        })
    }

    pub fn run_name(&self) -> &str {
        &self.run_name
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn total_steps(&self) -> u64 {
        self.rates.len() as u64
    }

    /// Learning rate at a 1-based step.
    pub fn rate(&self, step: u64) -> f64 {
        self.rates[step as usize - 1]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `log_cum[t] = sum_{i=1..t} ln(1 - gamma * lr_i)`.
    pub fn log_cum(&self) -> &[f64] {
        &self.log_cum
    }

    fn check_step(&self, what: &'static str, t: u64) -> Result<()> {
        if t > self.total_steps() {
            return Err(Error::range(what, format!("{t} not in 0..={}", self.total_steps())));
        }
        Ok(())
    }

    /// Survival coefficient of the update made at `origin` when observed after
    /// step `step`: `prod_{i=origin+1..step} (1 - gamma * lr_i)`.
    pub fn survival(&self, origin: u64, step: u64) -> Result<f64> {
        self.check_step("origin", origin)?;
        self.check_step("step", step)?;
        if step < origin {
            return Err(Error::range("step", format!("{step} precedes origin {origin}")));
        }
        Ok(self.survival_unchecked(origin, step))
    }

    #[inline]
    pub(crate) fn survival_unchecked(&self, origin: u64, step: u64) -> f64 {
        (self.log_cum[step as usize] - self.log_cum[origin as usize]).exp()
    }

    /// Inclusive product `prod_{i=t1..t2} (1 - gamma * lr_i)`, for `1 <= t1 <= t2 + 1`.
    pub fn window(&self, t1: u64, t2: u64) -> Result<f64> {
        if t1 == 0 {
            return Err(Error::range("t1", "inclusive windows start at step 1"));
        }
        self.survival(t1 - 1, t2)
    }
}

pub fn build_prefix(run: &RunConfig) -> Result<DecayPrefix> {
    DecayPrefix::build(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub origin_step: u64,
    /// `(step, weight)` pairs with strictly increasing steps.
    pub samples: Vec<(u64, f64)>,
}

impl DecayCurve {
    pub fn final_weight(&self) -> f64 {
        self.samples.last().map(|s| s.1).unwrap_or(1.0)
    }
}

/// Samples `W(origin, t)` at `t = origin, origin + stride, ..., T`. The final
/// step is always included.
pub fn forgetting_curve(prefix: &DecayPrefix, origin_step: u64, sample_stride: u64) -> Result<DecayCurve> {
    prefix.check_step("origin", origin_step)?;
    if sample_stride == 0 {
        return Err(Error::arg("sample stride must be >= 1"));
    }
    let total = prefix.total_steps();
    let mut samples: Vec<(u64, f64)> = (origin_step..=total)
        .step_by(sample_stride as usize)
        .map(|t| (t, prefix.survival_unchecked(origin_step, t)))
        .collect();
    if samples.last().map(|s| s.0) != Some(total) {
        samples.push((total, prefix.survival_unchecked(origin_step, total)));
    }
    Ok(DecayCurve {
        origin_step,
        samples,
    })
}

/// Origins of the ten decile curves: the initial weights (origin 0) and the
/// boundary step `d * T / 10` for `d = 1..9`.
pub fn decile_origins(total_steps: u64) -> Vec<u64> {
    (0..10).map(|d| d * total_steps / 10).collect()
}

/// Approximate steps for a past update to shrink below `epsilon`:
/// `ceil(ln(1/epsilon) / (gamma * lambda_avg))`.
pub fn forgetting_time_bound(gamma: f64, lambda_avg: f64, epsilon: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::arg(format!("gamma must be > 0, got {gamma}")));
    }
    if !(lambda_avg > 0.0 && lambda_avg.is_finite()) {
        return Err(Error::arg(format!("average learning rate must be > 0, got {lambda_avg}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::arg(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let steps = ((1.0 / epsilon).ln() / (gamma * lambda_avg)).ceil();
    Ok((steps as u64).max(1))
}

/// Message for callers when the small-decay approximation behind
/// [`forgetting_time_bound`] is questionable.
pub fn bound_warning(gamma: f64, lambda_avg: f64) -> Option<String> {
    let x = gamma * lambda_avg;
    (x > SMALL_DECAY_LIMIT).then(|| {
        format!("gamma * lambda_avg = {x:.3e} > {SMALL_DECAY_LIMIT:e}; ln(1 - x) ~ -x is loose, bound underestimates decay")
    })
}

/// First step `t >= origin` with `W(origin, t) <= epsilon`, or `None` if the
/// run ends first. Exact: no `ln(1 - x) ~ -x` approximation.
pub fn exact_forgetting_time(prefix: &DecayPrefix, origin_step: u64, epsilon: f64) -> Result<Option<u64>> {
    prefix.check_step("origin", origin_step)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::arg(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let target = epsilon.ln();
    let base = prefix.log_cum[origin_step as usize];
    // log_cum is non-increasing, so the crossing is a partition point.
    let tail = &prefix.log_cum[origin_step as usize..];
    let idx = tail.partition_point(|&l| l - base > target);
    if idx == tail.len() {
        return Ok(None);
    }
    // Guard the boundary against the exp/log round trip used by `survival`.
    let mut step = origin_step + idx as u64;
    while step > origin_step && prefix.survival_unchecked(origin_step, step - 1) <= epsilon {
        step -= 1;
    }
    while prefix.survival_unchecked(origin_step, step) > epsilon {
        step += 1;
        if step > prefix.total_steps() {
            return Ok(None);
        }
    }
    Ok(Some(step))
}

/// Average learning rate over steps `origin+1..=step`.
pub fn average_rate(prefix: &DecayPrefix, origin_step: u64, step: u64) -> Result<f64> {
    prefix.check_step("origin", origin_step)?;
    prefix.check_step("step", step)?;
    if step <= origin_step {
        return Err(Error::arg("empty averaging window"));
    }
    let window = &prefix.rates[origin_step as usize..step as usize];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    GradientTermsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub decile_fractions: [f64; 10],
    /// Coefficient of the initial weights, `W(0, T)`, not normalized.
    pub init_share: f64,
    pub normalization: Normalization,
}

/// Share of `sum_t lr_t * W(t, T)` contributed by each tenth of the run.
pub fn composition_report(prefix: &DecayPrefix) -> Result<CompositionReport> {
    let total_steps = prefix.total_steps();
    if total_steps < 10 {
        return Err(Error::arg(format!("composition needs >= 10 steps, run has {total_steps}")));
    }
    let mut sums = [0.0f64; 10];
    for t in 1..=total_steps {
        let decile = ((t - 1) * 10 / total_steps) as usize;
        sums[decile] += prefix.rate(t) * prefix.survival_unchecked(t, total_steps);
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0) {
        return Err(Error::arg("all gradient terms vanish; composition undefined"));
    }
    let mut decile_fractions = [0.0; 10];
    for (f, s) in decile_fractions.iter_mut().zip(sums) {
        *f = s / total;
    }
    Ok(CompositionReport {
        decile_fractions,
        init_share: prefix.survival_unchecked(0, total_steps),
        normalization: Normalization::GradientTermsOnly,
    })
}

pub fn write_curves_csv<W: Write>(mut w: W, curves: &[DecayCurve]) -> io::Result<()> {
    writeln!(w, "origin_step,step,weight")?;
    for c in curves {
        for &(step, weight) in &c.samples {
            writeln!(w, "{},{},{}", c.origin_step, step, sig17(weight))?;
        }
    }
    Ok(())
}

pub fn write_composition_csv<W: Write>(mut w: W, report: &CompositionReport) -> io::Result<()> {
    writeln!(w, "decile,fraction")?;
    for (i, f) in report.decile_fractions.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, sig17(*f))?;
    }
    writeln!(w, "init_share,{}", sig17(report.init_share))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleSpec;

    fn constant_run(gamma: f64, lr: f64, steps: u64) -> DecayPrefix {
        DecayPrefix::build(&RunConfig::new("c", gamma, ScheduleSpec::constant(lr, steps))).unwrap()
    }

    #[test]
    fn no_decay_without_weight_decay() {
        let p = constant_run(0.0, 1e-3, 1000);
        assert!(p.log_cum().iter().all(|&l| l == 0.0));
        assert_eq!(p.survival(0, 1000).unwrap(), 1.0);
        let c = forgetting_curve(&p, 1, 7).unwrap();
        assert!(c.samples.iter().all(|s| s.1 == 1.0));
        assert_eq!(exact_forgetting_time(&p, 1, 0.5).unwrap(), None);
    }

    #[test]
    fn constant_factor_closed_form() {
        let p = constant_run(0.5, 0.1, 200);
        let expected = 0.95f64.powi(200);
        let got = p.window(1, 200).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn worked_threshold_crossing() {
        let p = constant_run(0.1, 1e-3, 46_050);
        assert!(p.window(1, 46_050).unwrap() <= 0.01);
        assert!(p.window(1, 46_049).unwrap() > 0.01);
    }

    #[test]
    fn curve_sample_after_hundred_decays() {
        let p = constant_run(0.1, 1e-3, 1000);
        let c = forgetting_curve(&p, 1, 100).unwrap();
        assert_eq!(c.samples[1].0, 101);
        let direct = (1.0f64 - 1e-4).powi(100);
        assert!((c.samples[1].1 - direct).abs() < 1e-14);
        assert!((c.samples[1].1 - 0.990049).abs() < 1e-6);
    }

    #[test]
    fn curve_from_final_step_is_one_sample() {
        let p = constant_run(0.1, 1e-3, 50);
        let c = forgetting_curve(&p, 50, 3).unwrap();
        assert_eq!(c.samples, vec![(50, 1.0)]);
        assert_eq!(exact_forgetting_time(&p, 50, 0.5).unwrap(), None);
        assert!(forgetting_curve(&p, 51, 1).is_err());
        assert!(forgetting_curve(&p, 1, 0).is_err());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(forgetting_time_bound(0.1, 1e-3, 0.01).unwrap(), 46_052);
        assert_eq!(forgetting_time_bound(0.1, 1e-3, 0.999_999).unwrap(), 1);
        let a = forgetting_time_bound(0.1, 1e-3, 1e-3).unwrap();
        let b = forgetting_time_bound(0.2, 1e-3, 1e-3).unwrap();
        assert!((a as f64 / b as f64 - 2.0).abs() < 1e-3);
        assert!(forgetting_time_bound(0.0, 1e-3, 0.1).is_err());
        assert!(forgetting_time_bound(0.1, -1.0, 0.1).is_err());
        assert!(forgetting_time_bound(0.1, 1e-3, 1.0).is_err());
        assert!(bound_warning(0.1, 1e-3).is_none());
        assert!(bound_warning(0.5, 0.1).is_some());
    }

    #[test]
    fn exact_time_worked_case() {
        let p = constant_run(0.1, 1e-3, 60_000);
        // 46,050 decay factors are needed; counting from the initial weights
        // that is step 46,050, from the update of step 1 it is step 46,051.
        assert_eq!(exact_forgetting_time(&p, 0, 0.01).unwrap(), Some(46_050));
        assert_eq!(exact_forgetting_time(&p, 1, 0.01).unwrap(), Some(46_051));
        // threshold above the first sample
        assert_eq!(exact_forgetting_time(&p, 10, 0.999_999_999).unwrap(), Some(11));
    }

    #[test]
    fn composition_uniform_without_decay() {
        let p = constant_run(0.0, 1e-3, 1000);
        let r = composition_report(&p).unwrap();
        for f in r.decile_fractions {
            assert!((f - 0.1).abs() < 1e-12);
        }
        assert_eq!(r.init_share, 1.0);
    }

    #[test]
    fn composition_increasing_with_decay() {
        let p = constant_run(0.1, 1e-2, 10_000);
        let r = composition_report(&p).unwrap();
        assert!(r.decile_fractions.windows(2).all(|w| w[1] > w[0]));
        assert!(composition_report(&constant_run(0.1, 1e-3, 9)).is_err());
    }

    #[test]
    fn cosine_composition_peaks_inside() {
        let run = RunConfig::new("cos", 0.1, ScheduleSpec::cosine(1000, 8e-5, 8e-7, 1_200_000));
        let r = composition_report(&DecayPrefix::build(&run).unwrap()).unwrap();
        let (peak_idx, peak) = r
            .decile_fractions
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |a, (i, f)| if f > a.1 { (i, f) } else { a });
        assert!(peak_idx > 0 && peak_idx < 9, "{:?}", r.decile_fractions);
        assert!(r.decile_fractions[9] < peak);
    }

    #[test]
    fn csv_layout() {
        let p = constant_run(0.1, 1e-3, 20);
        let c = forgetting_curve(&p, 0, 10).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[c]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "origin_step,step,weight");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,1.0000000000000000e0"));

        let mut buf = Vec::new();
        write_composition_csv(&mut buf, &composition_report(&p).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.lines().last().unwrap().starts_with("init_share,"));
    }
}
