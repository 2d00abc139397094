use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dedup::QuestionRecord;
use crate::error::{Error, Result};

pub const DEFAULT_REPETITIONS: [u32; 4] = [4, 12, 36, 144];

/// Reference benchmark mix in percent. PiQA is set to
/// 19.77% so the seven weights sum to 100.
pub const REFERENCE_MIX: [(&str, f64); 7] = [
    ("hellaswag", 19.58),
    ("piqa", 19.77),
    ("social_i_qa", 8.27),
    ("boolq", 6.48),
    ("mmlu", 21.82),
    ("winogrande", 18.16),
    ("arc_easy", 5.92),
];

pub fn reference_weights() -> BTreeMap<String, f64> {
    REFERENCE_MIX.iter().map(|&(b, w)| (b.to_string(), w / 100.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    UniformRandom,
    Window { start_fraction: f64, end_fraction: f64 },
}

impl Placement {
    pub fn validate(&self) -> Result<()> {
        if let Placement::Window { start_fraction: s, end_fraction: e } = *self {
            if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&e) || !(s < e) {
                return Err(Error::arg(format!("placement window [{s}, {e}] must satisfy 0 <= start < end <= 1")));
            }
        }
        Ok(())
    }

    /// Insertion-point range `[lo, hi]` for a stream of `len` tokens.
    pub(crate) fn bounds(&self, len: u64) -> Result<(u64, u64)> {
        self.validate()?;
        match *self {
            Placement::UniformRandom => Ok((0, len)),
            Placement::Window { start_fraction, end_fraction } => {
                let lo = (start_fraction * len as f64).ceil() as u64;
                let hi = (end_fraction * len as f64).floor() as u64;
                if lo > hi || len == 0 {
                    return Err(Error::arg(format!("placement window is empty for a stream of {len} tokens")));
                }
                Ok((lo, hi))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub subset_id: String,
    pub question_ids: Vec<String>,
    pub repetitions: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPlan {
    pub subsets: Vec<Subset>,
    pub benchmark_weights: BTreeMap<String, f64>,
    pub placement: Placement,
    pub seed: u64,
    pub holdout_ids: Vec<String>,
}

/// One planned insertion: question `question_id`, `repetition`-th copy, at
/// insertion point `position` of the original stream (0 = before the first
/// token, `len` = after the last).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub question_id: String,
    pub repetition: u32,
    pub position: u64,
}

impl ContaminationPlan {
    pub fn empty(seed: u64) -> Self {
        ContaminationPlan {
            subsets: Vec::new(),
            benchmark_weights: BTreeMap::new(),
            placement: Placement::UniformRandom,
            seed,
            holdout_ids: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.placement.validate()?;
        let holdout: BTreeSet<&String> = self.holdout_ids.iter().collect();
        for s in &self.subsets {
            if s.repetitions == 0 {
                return Err(Error::arg(format!("subset {} has zero repetitions", s.subset_id)));
            }
            if let Some(id) = s.question_ids.iter().find(|id| holdout.contains(id)) {
                return Err(Error::arg(format!("holdout question {id} appears in subset {}", s.subset_id)));
            }
        }
        Ok(())
    }

    pub fn total_insertions(&self) -> u64 {
        self.subsets.iter().map(|s| s.question_ids.len() as u64 * s.repetitions as u64).sum()
    }

    /// Draws insertion points for every (question, repetition). Deterministic
    /// in the plan seed and stream length; sorted by position, ties kept in
    /// draw order.
    pub fn resolve_insertions(&self, stream_len: u64) -> Result<Vec<Insertion>> {
        if self.total_insertions() == 0 {
            return Ok(Vec::new());
        }
        let (lo, hi) = self.placement.bounds(stream_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut out = Vec::with_capacity(self.total_insertions() as usize);
        for s in &self.subsets {
            for id in &s.question_ids {
                for rep in 0..s.repetitions {
                    out.push(Insertion {
                        question_id: id.clone(),
                        repetition: rep,
                        position: rng.random_range(lo..=hi),
                    });
                }
            }
        }
        out.sort_by_key(|i| i.position);
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: ContaminationPlan = serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Splits `n` into per-benchmark counts by largest remainder: every count is
/// the floor or ceiling of `n * weight`, and counts sum to `n`.
pub fn apportion(n: usize, weights: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    let total: f64 = weights.values().sum();
    let mut rows: Vec<(&String, usize, f64)> = weights
        .iter()
        .map(|(b, w)| {
            let exact = n as f64 * w / total;
            (b, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = rows.iter().map(|r| r.1).sum();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].2.total_cmp(&rows[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        rows[i].1 += 1;
    }
    rows.into_iter().map(|(b, c, _)| (b.clone(), c)).collect()
}

#[derive(Clone, Debug)]
pub struct PlanRequest {
    pub subset_sizes: Vec<usize>,
    pub repetitions: Vec<u32>,
    pub holdout_size: usize,
    pub placement: Placement,
    pub seed: u64,
    /// Mix weights; derived from the records' benchmark shares when `None`.
    pub weights: Option<BTreeMap<String, f64>>,
}

/// Stratified random partition of `records` into a holdout and contamination
/// subsets, each matching the benchmark weights to within one question.
pub fn build_plan(records: &[QuestionRecord], req: &PlanRequest) -> Result<ContaminationPlan> {
    if req.subset_sizes.len() != req.repetitions.len() {
        return Err(Error::arg(format!(
            "{} subset sizes but {} repetition counts",
            req.subset_sizes.len(),
            req.repetitions.len()
        )));
    }
    if let Some(r) = req.repetitions.iter().find(|&&r| r == 0) {
        return Err(Error::arg(format!("repetition count must be >= 1, got {r}")));
    }
    req.placement.validate()?;
    let needed: usize = req.subset_sizes.iter().sum::<usize>() + req.holdout_size;
    if needed > records.len() {
        return Err(Error::arg(format!("plan needs {needed} questions but only {} records given", records.len())));
    }

    let mut pools: BTreeMap<String, Vec<&QuestionRecord>> = BTreeMap::new();
    for r in records {
        pools.entry(r.benchmark.clone()).or_default().push(r);
    }
    let weights = match &req.weights {
        Some(w) => {
            if let Some(b) = w.keys().find(|b| !pools.contains_key(*b)) {
                return Err(Error::arg(format!("no records for weighted benchmark {b}")));
            }
            w.clone()
        }
        None => pools.iter().map(|(b, p)| (b.clone(), p.len() as f64 / records.len() as f64)).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    for pool in pools.values_mut() {
        pool.shuffle(&mut rng);
    }
    let mut cursor: BTreeMap<&String, usize> = weights.keys().map(|b| (b, 0)).collect();
    let mut draw = |n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<String>> {
        let mut ids = Vec::with_capacity(n);
        for (bench, count) in apportion(n, &weights) {
            let pool = &pools[&bench];
            let start = cursor[&bench];
            if start + count > pool.len() {
                return Err(Error::arg(format!(
                    "benchmark {bench} has {} questions, stratification needs {}",
                    pool.len(),
                    start + count
                )));
            }
            ids.extend(pool[start..start + count].iter().map(|r| r.id.clone()));
            *cursor.get_mut(&bench).unwrap() += count;
        }
        ids.shuffle(rng);
        Ok(ids)
    };

    let holdout_ids = draw(req.holdout_size, &mut rng)?;
    let mut subsets = Vec::with_capacity(req.subset_sizes.len());
    for (i, (&size, &reps)) in req.subset_sizes.iter().zip(&req.repetitions).enumerate() {
        subsets.push(Subset {
            subset_id: format!("s{i}-{reps}x"),
            question_ids: draw(size, &mut rng)?,
            repetitions: reps,
        });
    }
    let plan = ContaminationPlan {
        subsets,
        benchmark_weights: weights,
        placement: req.placement,
        seed: req.seed,
        holdout_ids,
    };
    plan.validate()?;
    Ok(plan)
}

/// Per-benchmark question counts of a list of ids.
pub fn benchmark_counts(ids: &[String], records: &[QuestionRecord]) -> BTreeMap<String, usize> {
    let by_id: BTreeMap<&str, &str> = records.iter().map(|r| (r.id.as_str(), r.benchmark.as_str())).collect();
    let mut counts = BTreeMap::new();
    for id in ids {
        if let Some(b) = by_id.get(id.as_str()) {
            *counts.entry(b.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(per_bench: &[(&str, usize)]) -> Vec<QuestionRecord> {
        let mut out = Vec::new();
        for &(b, n) in per_bench {
            for i in 0..n {
                out.push(QuestionRecord::new(format!("{b}-{i}"), b, format!("q {i}"), vec!["x".into()], 0));
            }
        }
        out
    }

    #[test]
    fn apportion_is_exact_and_close() {
        let w = reference_weights();
        let c = apportion(10_000, &w);
        assert_eq!(c.values().sum::<usize>(), 10_000);
        for (b, n) in &c {
            assert!((*n as f64 - 10_000.0 * w[b]).abs() <= 1.0);
        }
    }

    #[test]
    fn whole_set_as_one_subset_is_permutation() {
        let rs = records(&[("a", 30), ("b", 20)]);
        let req = PlanRequest {
            subset_sizes: vec![50],
            repetitions: vec![1],
            holdout_size: 0,
            placement: Placement::UniformRandom,
            seed: 1,
            weights: None,
        };
        let plan = build_plan(&rs, &req).unwrap();
        let mut ids = plan.subsets[0].question_ids.clone();
        ids.sort();
        let mut all: Vec<String> = rs.iter().map(|r| r.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
    }

    #[test]
    fn seeds_change_partition_not_counts() {
        let rs = records(&[("a", 300), ("b", 200), ("c", 100)]);
        let mk = |seed| PlanRequest {
            subset_sizes: vec![100, 50],
            repetitions: vec![4, 12],
            holdout_size: 120,
            placement: Placement::UniformRandom,
            seed,
            weights: None,
        };
        let p1 = build_plan(&rs, &mk(5)).unwrap();
        assert_eq!(p1, build_plan(&rs, &mk(5)).unwrap());
        let p2 = build_plan(&rs, &mk(6)).unwrap();
        assert_ne!(p1.holdout_ids, p2.holdout_ids);
        assert_eq!(benchmark_counts(&p1.holdout_ids, &rs), benchmark_counts(&p2.holdout_ids, &rs));
        for (a, b) in p1.subsets.iter().zip(&p2.subsets) {
            assert_eq!(benchmark_counts(&a.question_ids, &rs), benchmark_counts(&b.question_ids, &rs));
        }
    }

    #[test]
    fn infeasible_stratification_names_benchmark() {
        let rs = records(&[("big", 500), ("tiny", 5)]);
        let req = PlanRequest {
            subset_sizes: vec![100],
            repetitions: vec![4],
            holdout_size: 100,
            placement: Placement::UniformRandom,
            seed: 0,
            weights: Some([("big".to_string(), 0.5), ("tiny".to_string(), 0.5)].into()),
        };
        let err = build_plan(&rs, &req).unwrap_err().to_string();
        assert!(err.contains("tiny"), "{err}");
    }

    #[test]
    fn insertions_respect_window() {
        let rs = records(&[("a", 10)]);
        let req = PlanRequest {
            subset_sizes: vec![5],
            repetitions: vec![3],
            holdout_size: 2,
            placement: Placement::Window { start_fraction: 0.2, end_fraction: 0.4 },
            seed: 9,
            weights: None,
        };
        let plan = build_plan(&rs, &req).unwrap();
        let ins = plan.resolve_insertions(1000).unwrap();
        assert_eq!(ins.len(), 15);
        assert!(ins.iter().all(|i| (200..=400).contains(&i.position)));
        assert!(ins.windows(2).all(|w| w[0].position <= w[1].position));
        let bad = Placement::Window { start_fraction: 0.5, end_fraction: 0.5 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let rs = records(&[("a", 10), ("b", 10)]);
        let req = PlanRequest {
            subset_sizes: vec![4],
            repetitions: vec![2],
            holdout_size: 4,
            placement: Placement::Window { start_fraction: 0.1, end_fraction: 0.9 },
            seed: 3,
            weights: None,
        };
        let plan = build_plan(&rs, &req).unwrap();
        assert_eq!(ContaminationPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
    }
}
