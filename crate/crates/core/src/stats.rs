//! Percentile-bootstrap confidence intervals and accuracy-gap reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOLDOUT_LABEL: &str = "holdout";
pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.90;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resampled proportion of `successes` out of `n` draws with replacement.
/// The resampled count of a boolean sample is exactly Binomial(n, successes/n).
fn resample_rate(n: u64, successes: u64, rng: &mut ChaCha8Rng) -> f64 {
    if successes == 0 || successes == n {
        return successes as f64 / n as f64;
    }
    let b = Binomial::new(n, successes as f64 / n as f64).expect("p in (0, 1)");
    b.sample(rng) as f64 / n as f64
}

/// Independent RNG for resample `index`; results do not depend on thread count.
fn resample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn percentile_interval(mean: f64, mut stats: Vec<f64>, level: f64) -> Interval {
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        mean,
        // The percentile interval can in principle miss the point estimate; keep it bracketed.
        ci_low: quantile(&stats, tail).min(mean),
        ci_high: quantile(&stats, 1.0 - tail).max(mean),
    }
}

pub fn bootstrap_ci(outcomes: &[bool], resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    let n = outcomes.len() as u64;
    let k = outcomes.iter().filter(|&&b| b).count() as u64;
    bootstrap_ci_counts(n, k, resamples, level, seed)
}

pub fn bootstrap_ci_counts(n: u64, successes: u64, resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    if n == 0 {
        return Err(Error::arg("bootstrap needs at least one outcome"));
    }
    if resamples == 0 {
        return Err(Error::arg("resamples must be >= 1"));
    }
    check_level(level)?;
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|i| resample_rate(n, successes, &mut resample_rng(seed, i)))
        .collect();
    Ok(percentile_interval(successes as f64 / n as f64, stats, level))
}

/// Bootstrap interval of `rate(a) - rate(b)`, resampling both groups
/// independently in every replicate.
pub fn bootstrap_diff_ci(a: (u64, u64), b: (u64, u64), resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    if a.0 == 0 || b.0 == 0 {
        return Err(Error::arg("bootstrap needs at least one outcome per group"));
    }
    if resamples == 0 {
        return Err(Error::arg("resamples must be >= 1"));
    }
    check_level(level)?;
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = resample_rng(seed, i);
            let ra = resample_rate(a.0, a.1, &mut rng);
            ra - resample_rate(b.0, b.1, &mut rng)
        })
        .collect();
    let mean = a.1 as f64 / a.0 as f64 - b.1 as f64 / b.0 as f64;
    Ok(percentile_interval(mean, stats, level))
}

/// Percentage-point difference between two accuracies given as proportions.
pub fn gap_pp(accuracy: f64, holdout_accuracy: f64) -> f64 {
    100.0 * (accuracy - holdout_accuracy)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub question_id: String,
    pub label: String,
    pub correct: bool,
}

/// Reads `question_id,label,correct` CSV (header optional; correct as
/// 0/1/true/false).
pub fn read_outcomes<R: BufRead>(r: R) -> Result<Vec<EvalOutcome>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("question_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::format(format!("line {}: expected 3 fields, got {}", n + 1, fields.len())));
        }
        let correct = match fields[2].to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::format(format!("line {}: bad correctness value {other:?}", n + 1))),
        };
        out.push(EvalOutcome { question_id: fields[0].into(), label: fields[1].into(), correct });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub label: String,
    pub n: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub gap_pp: f64,
    pub gap_ci_low: f64,
    pub gap_ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub seed: u64,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Holdout first, then the other labels in sorted order.
    pub rows: Vec<GapRow>,
    pub bootstrap: BootstrapSettings,
}

impl GapReport {
    pub fn row(&self, label: &str) -> Option<&GapRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "label,accuracy,ci_low,ci_high,gap_pp,gap_ci_low,gap_ci_high")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.label, r.accuracy, r.ci_low, r.ci_high, r.gap_pp, r.gap_ci_low, r.gap_ci_high
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn gap_report(evals: &[EvalOutcome], level: f64, resamples: usize, seed: u64) -> Result<GapReport> {
    check_level(level)?;
    let mut groups: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    for e in evals {
        if !seen.insert((e.label.as_str(), e.question_id.as_str())) {
            return Err(Error::arg(format!("question {} evaluated twice under label {}", e.question_id, e.label)));
        }
        let g = groups.entry(e.label.as_str()).or_insert((0, 0));
        g.0 += 1;
        g.1 += e.correct as u64;
    }
    let holdout = *groups
        .get(HOLDOUT_LABEL)
        .ok_or_else(|| Error::arg(format!("no outcomes labelled {HOLDOUT_LABEL:?}")))?;

    let mut labels: Vec<&str> = vec![HOLDOUT_LABEL];
    labels.extend(groups.keys().copied().filter(|&l| l != HOLDOUT_LABEL));
    let mut rows = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let counts = groups[label];
        let label_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let acc = bootstrap_ci_counts(counts.0, counts.1, resamples, level, label_seed)?;
        let gap = if label == HOLDOUT_LABEL {
            Interval { mean: 0.0, ci_low: 0.0, ci_high: 0.0 }
        } else {
            let d = bootstrap_diff_ci(counts, holdout, resamples, level, label_seed ^ 0xD1FF)?;
            Interval { mean: 100.0 * d.mean, ci_low: 100.0 * d.ci_low, ci_high: 100.0 * d.ci_high }
        };
        rows.push(GapRow {
            label: label.to_string(),
            n: counts.0,
            accuracy: acc.mean,
            ci_low: acc.ci_low,
            ci_high: acc.ci_high,
            gap_pp: gap.mean,
            gap_ci_low: gap.ci_low,
            gap_ci_high: gap.ci_high,
        });
    }
    Ok(GapReport { rows, bootstrap: BootstrapSettings { resamples, seed, level } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            bootstrap_ci(&[true; 50], 200, 0.9, 1).unwrap(),
            Interval { mean: 1.0, ci_low: 1.0, ci_high: 1.0 }
        );
        let one = bootstrap_ci(&[false], 200, 0.9, 1).unwrap();
        assert_eq!((one.ci_low, one.ci_high), (0.0, 0.0));
        assert!(bootstrap_ci(&[], 200, 0.9, 1).is_err());
        assert!(bootstrap_ci(&[true], 200, 1.0, 1).is_err());
    }

    #[test]
    fn fair_coin_half_width_near_normal() {
        let outcomes: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let ci = bootstrap_ci(&outcomes, DEFAULT_RESAMPLES, 0.90, 7).unwrap();
        let analytic = 1.645 * (0.25f64 / 1000.0).sqrt();
        let half = (ci.ci_high - ci.ci_low) / 2.0;
        assert!((half / analytic - 1.0).abs() < 0.2, "{half} vs {analytic}");
    }

    #[test]
    fn deterministic_and_wider_at_higher_level() {
        let a = bootstrap_ci_counts(800, 300, 2000, 0.90, 3).unwrap();
        assert_eq!(a, bootstrap_ci_counts(800, 300, 2000, 0.90, 3).unwrap());
        let b = bootstrap_ci_counts(800, 300, 2000, 0.99, 3).unwrap();
        assert!(b.ci_low <= a.ci_low && b.ci_high >= a.ci_high);
    }

    #[test]
    fn table_gap_arithmetic() {
        assert!((gap_pp(0.4814, 0.4222) - 5.92).abs() < 1e-9);
    }

    fn outcomes(label: &str, n: usize, k: usize) -> Vec<EvalOutcome> {
        (0..n)
            .map(|i| EvalOutcome { question_id: format!("{label}{i}"), label: label.into(), correct: i < k })
            .collect()
    }

    #[test]
    fn identical_groups_give_zero_gap() {
        let mut ev = outcomes(HOLDOUT_LABEL, 400, 170);
        ev.extend(outcomes("4x", 400, 170));
        let rep = gap_report(&ev, 0.9, 2000, 11).unwrap();
        let h = rep.row(HOLDOUT_LABEL).unwrap();
        assert_eq!((h.gap_pp, h.gap_ci_low, h.gap_ci_high), (0.0, 0.0, 0.0));
        let c = rep.row("4x").unwrap();
        assert_eq!(c.gap_pp, 0.0);
        assert!(c.gap_ci_low < 0.0 && c.gap_ci_high > 0.0);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("label,accuracy,ci_low,ci_high,gap_pp,gap_ci_low,gap_ci_high\nholdout,"));
    }

    #[test]
    fn missing_holdout_and_duplicates_rejected() {
        assert!(gap_report(&outcomes("4x", 10, 3), 0.9, 100, 0).is_err());
        let mut ev = outcomes(HOLDOUT_LABEL, 3, 1);
        ev.push(ev[0].clone());
        assert!(gap_report(&ev, 0.9, 100, 0).is_err());
    }

    #[test]
    fn outcome_csv_parses() {
        let text = "question_id,label,correct\nq1,holdout,1\nq2,4x,false\n";
        let ev = read_outcomes(text.as_bytes()).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev[0].correct && !ev[1].correct);
        assert!(read_outcomes("q1,holdout,maybe\n".as_bytes()).is_err());
    }
}
