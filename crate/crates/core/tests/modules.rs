use std::collections::BTreeMap;

use decay_ledger::contamination::{
    build_plan, position_profile, synth_corpus, tag_counts, MarkovSource, PlanRequest, Placement, PositionTag,
};
use decay_ledger::dedup::{filter_duplicates, QuestionRecord};
use decay_ledger::stats::{gap_report, EvalOutcome, HOLDOUT_LABEL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stationary(source: &MarkovSource) -> Vec<f64> {
    let v = source.vocab();
    let mut pi = vec![1.0 / v as f64; v];
    for _ in 0..2000 {
        let mut next = vec![0.0; v];
        for (a, &pa) in pi.iter().enumerate() {
            for (b, &p) in source.row(a as u32).iter().enumerate() {
                next[b] += pa * p;
            }
        }
        pi = next;
    }
    pi
}

#[test]
fn unigram_frequencies_match_stationary_distribution() {
    let n = 1_000_000usize;
    let corpus = synth_corpus(16, n, 42).unwrap();
    let pi = stationary(&corpus.source);
    let mut counts = [0usize; 16];
    for &t in &corpus.stream.tokens {
        counts[t as usize] += 1;
    }
    for (t, (&c, &p)) in counts.iter().zip(&pi).enumerate() {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let z = (c as f64 - n as f64 * p) / sigma;
        assert!(z.abs() < 3.0, "token {t}: count {c}, expected {:.0}, z = {z:.2}", n as f64 * p);
    }
}

fn brute_tag(offsets: &[f64]) -> PositionTag {
    let mut xs = offsets.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let terciles: Vec<usize> = xs.iter().map(|&x| if x < 1.0 / 3.0 { 0 } else if x < 2.0 / 3.0 { 1 } else { 2 }).collect();
    let mut edges = vec![0.0];
    edges.extend(&xs);
    edges.push(1.0);
    let gap = edges.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if (0..3).all(|k| terciles.contains(&k)) && gap < 2.0 / xs.len() as f64 {
        return PositionTag::Uniform;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if mean < 1.0 / 3.0 {
        PositionTag::Beginning
    } else if mean < 2.0 / 3.0 {
        PositionTag::Middle
    } else {
        PositionTag::End
    }
}

#[test]
fn position_tags_match_reclassification() {
    let records: Vec<QuestionRecord> =
        (0..1000).map(|i| QuestionRecord::new(format!("q{i}"), "b", format!("{i}"), vec!["x".into()], 0)).collect();
    let plan = build_plan(
        &records,
        &PlanRequest {
            subset_sizes: vec![500, 300, 200],
            repetitions: vec![1, 3, 12],
            holdout_size: 0,
            placement: Placement::UniformRandom,
            seed: 17,
            weights: None,
        },
    )
    .unwrap();
    let profiles = position_profile(&plan, 1_000_000).unwrap();
    assert_eq!(profiles.len(), 1000);
    let mut brute: BTreeMap<PositionTag, usize> = BTreeMap::new();
    for p in profiles.values() {
        *brute.entry(brute_tag(&p.offsets)).or_insert(0) += 1;
        assert!(p.offsets.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    assert_eq!(tag_counts(&profiles), brute);
    assert!(brute.contains_key(&PositionTag::Uniform));
    assert_eq!(position_profile(&plan, 1_000_000).unwrap(), profiles);
}

#[test]
fn gap_interval_covers_known_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut covered = 0;
    for rep in 0..100u64 {
        let mut evals = Vec::with_capacity(10_000);
        for (label, p) in [(HOLDOUT_LABEL, 0.40), ("4x", 0.50)] {
            for i in 0..5000 {
                evals.push(EvalOutcome { question_id: format!("{label}-{i}"), label: label.into(), correct: rng.random_bool(p) });
            }
        }
        let r = gap_report(&evals, 0.90, 1000, rep).unwrap();
        let row = r.row("4x").unwrap();
        assert!(row.gap_ci_low <= row.gap_pp && row.gap_pp <= row.gap_ci_high);
        covered += usize::from(row.gap_ci_low <= 10.0 && 10.0 <= row.gap_ci_high);
    }
    assert!(covered >= 85, "covered {covered}/100");
}

#[test]
fn filtering_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = ["the cat sat", "a dog ran", "birds fly south", "fish swim"];
    let records: Vec<QuestionRecord> = (0..150)
        .map(|i| {
            let mut text = words[rng.random_range(0..4)].to_string();
            for _ in 0..rng.random_range(0..3) {
                text.push(['x', 'y', ' '][rng.random_range(0..3)]);
            }
            let mut r = QuestionRecord::new(format!("q{i}"), ["a", "b"][i % 2], "p", vec!["c".into()], 0);
            r.contamination_text = text;
            r
        })
        .collect();
    let (once, report) = filter_duplicates(&records, 0.2, 1).unwrap();
    assert!(once.len() < records.len());
    assert_eq!(report.removed_ids.len(), records.len() - once.len());
    let (twice, again) = filter_duplicates(&once, 0.2, 2).unwrap();
    assert_eq!(twice, once);
    assert!(again.removed_ids.is_empty());
}
