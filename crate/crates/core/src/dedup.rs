//! Near-duplicate filtering of benchmark questions by length-normalized
//! Levenshtein distance.
//!
//! Filtering runs in two passes: first within each benchmark, then across all
//! benchmarks on the survivors. In each pass duplicate pairs form a graph and
//! every connected component keeps exactly one randomly chosen member.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub benchmark: String,
    pub prompt: String,
    pub choices: Vec<String>,
    pub gold_index: usize,
    /// Prompt plus gold completion; both what gets inserted into training
    /// data and what similarity is measured on. Rendered from the prompt and
    /// gold choice when absent from the input.
    #[serde(default)]
    pub contamination_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl QuestionRecord {
    pub fn new(id: impl Into<String>, benchmark: impl Into<String>, prompt: impl Into<String>, choices: Vec<String>, gold_index: usize) -> Self {
        let mut r = QuestionRecord {
            id: id.into(),
            benchmark: benchmark.into(),
            prompt: prompt.into(),
            choices,
            gold_index,
            contamination_text: String::new(),
            split: None,
        };
        r.contamination_text = r.render();
        r
    }

    pub fn render(&self) -> String {
        match self.choices.get(self.gold_index) {
            Some(gold) if !self.prompt.is_empty() => format!("{} {}", self.prompt, gold),
            Some(gold) => gold.clone(),
            None => self.prompt.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gold_index >= self.choices.len() {
            return Err(Error::format(format!(
                "record {}: gold_index {} but {} choices",
                self.id,
                self.gold_index,
                self.choices.len()
            )));
        }
        if self.contamination_text.is_empty() {
            return Err(Error::format(format!("record {}: empty contamination text", self.id)));
        }
        Ok(())
    }
}

/// Reads line-delimited JSON records, filling in missing contamination text.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<QuestionRecord>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: QuestionRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        if rec.contamination_text.is_empty() {
            rec.contamination_text = rec.render();
        }
        rec.validate()?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::format(format!("duplicate record id {}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[QuestionRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Denominator used to normalize the raw edit distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthNorm {
    #[default]
    Max,
    Mean,
    Min,
}

impl LengthNorm {
    fn denom(self, a: usize, b: usize) -> f64 {
        match self {
            LengthNorm::Max => a.max(b) as f64,
            LengthNorm::Mean => (a + b) as f64 / 2.0,
            LengthNorm::Min => a.min(b) as f64,
        }
    }
}

impl std::str::FromStr for LengthNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(LengthNorm::Max),
            "mean" => Ok(LengthNorm::Mean),
            "min" => Ok(LengthNorm::Min),
            other => Err(Error::arg(format!("unknown length normalization {other:?}"))),
        }
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    bounded_levenshtein(&a, &b, usize::MAX).unwrap_or(usize::MAX)
}

/// Edit distance if it is at most `limit`, else `None`. Stops as soon as a
/// whole DP row exceeds the limit.
fn bounded_levenshtein(a: &[char], b: &[char], limit: usize) -> Option<usize> {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if a.len() - b.len() > limit {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= limit).then_some(d)
}

pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    normalized_levenshtein_with(a, b, LengthNorm::Max)
}

pub fn normalized_levenshtein_with(a: &str, b: &str, norm: LengthNorm) -> f64 {
    let (la, lb) = (a.chars().count(), b.chars().count());
    if la == 0 && lb == 0 {
        return 0.0;
    }
    let denom = norm.denom(la, lb);
    if denom == 0.0 {
        // min-normalization with one empty side
        return 1.0;
    }
    levenshtein(a, b) as f64 / denom
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    WithinBenchmark,
    CrossBenchmark,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub id_a: String,
    pub id_b: String,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DedupOptions {
    pub threshold: f64,
    pub norm: LengthNorm,
}

impl Default for DedupOptions {
    fn default() -> Self {
        DedupOptions {
            threshold: DEFAULT_THRESHOLD,
            norm: LengthNorm::Max,
        }
    }
}

struct Prepared {
    chars: Vec<Vec<char>>,
}

impl Prepared {
    fn new(records: &[QuestionRecord]) -> Self {
        Prepared {
            chars: records.iter().map(|r| r.contamination_text.chars().collect()).collect(),
        }
    }

    /// Normalized distance if it is below the threshold.
    fn close(&self, i: usize, j: usize, opts: DedupOptions) -> Option<f64> {
        let (a, b) = (&self.chars[i], &self.chars[j]);
        if a.is_empty() && b.is_empty() {
            return (0.0 < opts.threshold).then_some(0.0);
        }
        let denom = opts.norm.denom(a.len(), b.len());
        if denom == 0.0 {
            return None;
        }
        // distance / denom < threshold implies distance <= ceil(threshold * denom);
        // one unit of slack absorbs rounding in the product, the exact test is below.
        let limit = (opts.threshold * denom).ceil() as usize;
        // length band: the edit distance is at least the length difference
        if a.len().abs_diff(b.len()) > limit {
            return None;
        }
        let d = bounded_levenshtein(a, b, limit)?;
        let nd = d as f64 / denom;
        (nd < opts.threshold).then_some(nd)
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("threshold must be in (0, 1), got {threshold}")))
    }
}

// Index pairs (i < j) closer than the threshold, sorted.
fn duplicate_index_pairs(records: &[QuestionRecord], prepared: &Prepared, opts: DedupOptions, scope: Scope, subset: &[usize]) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = subset
        .par_iter()
        .enumerate()
        .flat_map_iter(|(pos, &i)| {
            subset[pos + 1..].iter().filter_map(move |&j| {
                let same = records[i].benchmark == records[j].benchmark;
                let wanted = match scope {
                    Scope::WithinBenchmark => same,
                    Scope::CrossBenchmark => !same,
                    Scope::Both => true,
                };
                if !wanted {
                    return None;
                }
                prepared.close(i, j, opts).map(|d| (i.min(j), i.max(j), d))
            })
        })
        .collect();
    pairs.sort_by_key(|p| (p.0, p.1));
    pairs
}

fn to_named(records: &[QuestionRecord], pairs: &[(usize, usize, f64)]) -> Vec<DuplicatePair> {
    let mut named: Vec<DuplicatePair> = pairs
        .iter()
        .map(|&(i, j, distance)| {
            let (a, b) = (&records[i].id, &records[j].id);
            let (id_a, id_b) = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            DuplicatePair { id_a, id_b, distance }
        })
        .collect();
    named.sort_by(|x, y| (&x.id_a, &x.id_b).cmp(&(&y.id_a, &y.id_b)));
    named
}

/// All unordered pairs whose normalized distance is below `threshold`,
/// sorted by id.
pub fn find_duplicates(records: &[QuestionRecord], threshold: f64, scope: Scope) -> Result<Vec<DuplicatePair>> {
    find_duplicates_with(records, DedupOptions { threshold, ..Default::default() }, scope)
}

pub fn find_duplicates_with(records: &[QuestionRecord], opts: DedupOptions, scope: Scope) -> Result<Vec<DuplicatePair>> {
    check_threshold(opts.threshold)?;
    let prepared = Prepared::new(records);
    let all: Vec<usize> = (0..records.len()).collect();
    Ok(to_named(records, &duplicate_index_pairs(records, &prepared, opts, scope, &all)))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes the root so component order is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups `members` (sorted record indices) into connected components of
/// `pairs`, each listed in index order and ordered by its smallest member.
/// Returns only components with more than one member.
fn components(n: usize, members: &[usize], pairs: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n);
    for &(i, j, _) in pairs {
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &m in members {
        let root = uf.find(m);
        groups.entry(root).or_default().push(m);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Keeps one uniformly chosen member per component; returns removed indices.
fn prune(comps: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut removed = Vec::new();
    for comp in comps {
        let keep = rng.random_range(0..comp.len());
        removed.extend(comp.iter().enumerate().filter(|(k, _)| *k != keep).map(|(_, &m)| m));
    }
    removed
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCounts {
    pub size_before: usize,
    pub filtered_within: usize,
    pub filtered_cross: usize,
    pub size_after: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub per_benchmark: BTreeMap<String, BenchmarkCounts>,
    pub threshold: f64,
    pub norm: LengthNorm,
    pub seed: u64,
    pub removed_ids: Vec<String>,
    pub duplicate_pairs: Vec<DuplicatePair>,
}

impl DedupReport {
    /// Table with one column per benchmark and rows
    /// Split / Size / Filtered / Cross-Filtered / Weight.
    pub fn render_table(&self) -> String {
        let names: Vec<&String> = self.per_benchmark.keys().collect();
        let total_after: usize = self.per_benchmark.values().map(|c| c.size_after).sum();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(10) + 2;
        let mut out = String::new();
        let row = |out: &mut String, label: &str, cells: Vec<String>| {
            let _ = write!(out, "{label:<16}");
            for c in cells {
                let _ = write!(out, "{c:>width$}");
            }
            out.push('\n');
        };
        row(&mut out, "", names.iter().map(|n| n.to_string()).collect());
        let counts: Vec<&BenchmarkCounts> = self.per_benchmark.values().collect();
        row(&mut out, "Split", counts.iter().map(|c| c.split.clone().unwrap_or_else(|| "-".into())).collect());
        row(&mut out, "Size", counts.iter().map(|c| group_digits(c.size_before)).collect());
        row(&mut out, "Filtered", counts.iter().map(|c| group_digits(c.filtered_within)).collect());
        row(&mut out, "Cross-Filtered", counts.iter().map(|c| group_digits(c.filtered_cross)).collect());
        row(
            &mut out,
            "Weight",
            counts
                .iter()
                .map(|c| {
                    let w = if total_after == 0 { 0.0 } else { 100.0 * c.size_after as f64 / total_after as f64 };
                    format!("{w:.2}%")
                })
                .collect(),
        );
        out
    }
}

fn group_digits(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn filter_duplicates(records: &[QuestionRecord], threshold: f64, seed: u64) -> Result<(Vec<QuestionRecord>, DedupReport)> {
    filter_duplicates_with(records, DedupOptions { threshold, ..Default::default() }, seed)
}

pub fn filter_duplicates_with(records: &[QuestionRecord], opts: DedupOptions, seed: u64) -> Result<(Vec<QuestionRecord>, DedupReport)> {
    check_threshold(opts.threshold)?;
    let n = records.len();
    let prepared = Prepared::new(records);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();

    let within = duplicate_index_pairs(records, &prepared, opts, Scope::WithinBenchmark, &all);
    let removed_within = prune(&components(n, &all, &within), &mut rng);

    let mut alive = vec![true; n];
    for &i in &removed_within {
        alive[i] = false;
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let cross = duplicate_index_pairs(records, &prepared, opts, Scope::Both, &survivors);
    let removed_cross = prune(&components(n, &survivors, &cross), &mut rng);
    for &i in &removed_cross {
        alive[i] = false;
    }

    let mut per_benchmark: BTreeMap<String, BenchmarkCounts> = BTreeMap::new();
    for r in records {
        let c = per_benchmark.entry(r.benchmark.clone()).or_default();
        c.size_before += 1;
        if c.split.is_none() {
            c.split = r.split.clone();
        }
    }
    for &i in &removed_within {
        per_benchmark.get_mut(&records[i].benchmark).unwrap().filtered_within += 1;
    }
    for &i in &removed_cross {
        per_benchmark.get_mut(&records[i].benchmark).unwrap().filtered_cross += 1;
    }
    for c in per_benchmark.values_mut() {
        c.size_after = c.size_before - c.filtered_within - c.filtered_cross;
    }

    let mut removed_ids: Vec<String> = removed_within
        .iter()
        .chain(&removed_cross)
        .map(|&i| records[i].id.clone())
        .collect();
    removed_ids.sort();
    let mut pairs = within;
    pairs.extend(cross);
    let report = DedupReport {
        per_benchmark,
        threshold: opts.threshold,
        norm: opts.norm,
        seed,
        removed_ids,
        duplicate_pairs: to_named(records, &pairs),
    };
    let kept = records.iter().zip(&alive).filter(|(_, &a)| a).map(|(r, _)| r.clone()).collect();
    Ok((kept, report))
}

/// Accuracy in percent with a confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCi {
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AccuracyCi {
    pub fn new(accuracy: f64, ci_low: f64, ci_high: f64) -> Self {
        AccuracyCi { accuracy, ci_low, ci_high }
    }

    fn validate(&self, which: &str) -> Result<()> {
        if !(self.ci_low <= self.ci_high) {
            return Err(Error::arg(format!("{which}: CI low {} > high {}", self.ci_low, self.ci_high)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideEffectVerdict {
    pub pass: bool,
    pub cis_overlap: bool,
    /// Contaminated minus clean, percentage points.
    pub difference_pp: f64,
    pub margin_pp: f64,
    pub holdout_size: usize,
}

pub const DEFAULT_SIDE_EFFECT_MARGIN_PP: f64 = 1.0;

/// Holdout check for hidden duplicates: a heavily contaminated model must
/// score like a clean model on questions neither has seen. Passes iff the
/// two CIs overlap and the accuracies differ by less than `margin_pp`.
pub fn verify_no_side_effects(holdout: &[QuestionRecord], contaminated: AccuracyCi, clean: AccuracyCi, margin_pp: f64) -> Result<SideEffectVerdict> {
    contaminated.validate("contaminated model")?;
    clean.validate("clean model")?;
    let cis_overlap = contaminated.ci_low <= clean.ci_high && clean.ci_low <= contaminated.ci_high;
    let difference_pp = contaminated.accuracy - clean.accuracy;
    Ok(SideEffectVerdict {
        pass: cis_overlap && difference_pp.abs() < margin_pp,
        cis_overlap,
        difference_pp,
        margin_pp,
        holdout_size: holdout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, bench: &str, text: &str) -> QuestionRecord {
        let mut r = QuestionRecord::new(id, bench, "", vec![text.to_string()], 0);
        r.contamination_text = text.to_string();
        r
    }

    #[test]
    fn distance_examples() {
        assert_eq!(normalized_levenshtein("abc", "abc"), 0.0);
        assert_eq!(normalized_levenshtein("", "abc"), 1.0);
        assert_eq!(normalized_levenshtein("", ""), 0.0);
        assert_eq!(normalized_levenshtein("kitten", "sitting"), 3.0 / 7.0);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(normalized_levenshtein_with("ab", "abcd", LengthNorm::Min), 1.0);
        assert_eq!(normalized_levenshtein_with("ab", "abcd", LengthNorm::Mean), 2.0 / 3.0);
    }

    #[test]
    fn pairs_under_threshold() {
        let rs = vec![rec("a", "x", "abcd"), rec("b", "x", "abce")];
        let p = find_duplicates(&rs, 0.3, Scope::Both).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].distance, 0.25);
        let rs = vec![rec("a", "x", "abcd"), rec("b", "x", "wxyz")];
        assert!(find_duplicates(&rs, 0.3, Scope::Both).unwrap().is_empty());
        assert!(find_duplicates(&rs, 1.0, Scope::Both).is_err());
    }

    #[test]
    fn tiny_threshold_finds_only_exact_copies() {
        let rs = vec![rec("a", "x", "same text"), rec("b", "y", "same text"), rec("c", "x", "same texts")];
        let p = find_duplicates(&rs, 1e-9, Scope::Both).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].id_a.as_str(), p[0].id_b.as_str()), ("a", "b"));
    }

    #[test]
    fn scope_restricts_pairs() {
        let rs = vec![rec("a", "x", "abcd"), rec("b", "y", "abcd"), rec("c", "x", "abcd")];
        assert_eq!(find_duplicates(&rs, 0.1, Scope::WithinBenchmark).unwrap().len(), 1);
        assert_eq!(find_duplicates(&rs, 0.1, Scope::CrossBenchmark).unwrap().len(), 2);
        assert_eq!(find_duplicates(&rs, 0.1, Scope::Both).unwrap().len(), 3);
    }

    #[test]
    fn component_keeps_one() {
        let rs = vec![rec("a", "x", "abcd"), rec("b", "x", "abce"), rec("c", "x", "abcf"), rec("d", "x", "zzzzzz")];
        let (kept, report) = filter_duplicates(&rs, 0.3, 1).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().any(|r| r.id == "d"));
        let c = &report.per_benchmark["x"];
        assert_eq!((c.size_before, c.filtered_within, c.filtered_cross, c.size_after), (4, 2, 0, 2));
        for id in &report.removed_ids {
            assert!(report.duplicate_pairs.iter().any(|p| &p.id_a == id || &p.id_b == id));
        }
    }

    #[test]
    fn cross_pass_counts_separately() {
        let rs = vec![rec("a", "x", "question one"), rec("b", "y", "question one"), rec("c", "y", "other thing")];
        let (kept, report) = filter_duplicates(&rs, 0.2, 3).unwrap();
        assert_eq!(kept.len(), 2);
        let cross: usize = report.per_benchmark.values().map(|c| c.filtered_cross).sum();
        let within: usize = report.per_benchmark.values().map(|c| c.filtered_within).sum();
        assert_eq!((within, cross), (0, 1));
        let table = report.render_table();
        assert!(table.contains("Cross-Filtered"));
        assert!(table.contains("Weight"));
    }

    #[test]
    fn nothing_to_remove() {
        let rs = vec![rec("a", "x", "aaaa"), rec("b", "x", "bbbb")];
        let (kept, report) = filter_duplicates(&rs, 0.2, 0).unwrap();
        assert_eq!(kept, rs);
        assert!(report.removed_ids.is_empty());
        assert_eq!(report.per_benchmark["x"].filtered_within, 0);
    }

    #[test]
    fn side_effect_verdicts() {
        let v = verify_no_side_effects(&[], AccuracyCi::new(42.2, 41.2, 43.2), AccuracyCi::new(41.9, 41.0, 42.9), 1.0).unwrap();
        assert!(v.pass);
        assert!((v.difference_pp - 0.3).abs() < 1e-12);
        let v = verify_no_side_effects(&[], AccuracyCi::new(50.0, 49.5, 50.5), AccuracyCi::new(42.0, 41.5, 42.5), 1.0).unwrap();
        assert!(!v.pass);
        let same = AccuracyCi::new(40.0, 39.0, 41.0);
        let v = verify_no_side_effects(&[], same, same, 1.0).unwrap();
        assert!(v.pass && v.difference_pp == 0.0);
        assert!(verify_no_side_effects(&[], AccuracyCi::new(40.0, 41.0, 39.0), same, 1.0).is_err());
    }

    #[test]
    fn jsonl_fills_text_and_rejects_bad_gold() {
        let input = "{\"id\":\"q1\",\"benchmark\":\"piqa\",\"prompt\":\"Q?\",\"choices\":[\"a\",\"b\"],\"gold_index\":1}\n";
        let rs = read_records(input.as_bytes()).unwrap();
        assert_eq!(rs[0].contamination_text, "Q? b");
        let bad = "{\"id\":\"q1\",\"benchmark\":\"piqa\",\"prompt\":\"Q?\",\"choices\":[\"a\"],\"gold_index\":3}\n";
        assert!(matches!(read_records(bad.as_bytes()), Err(Error::Format(_))));
        let mut out = Vec::new();
        write_records(&mut out, &rs).unwrap();
        assert_eq!(read_records(&out[..]).unwrap(), rs);
    }
}
