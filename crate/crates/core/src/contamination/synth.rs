use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::stream::TokenStream;
use crate::error::{Error, Result};

/// First-order Markov source over `vocab` tokens with Dirichlet-drawn rows.
#[derive(Clone, Debug)]
pub struct MarkovSource {
    vocab: usize,
    /// Row-major transition probabilities.
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl MarkovSource {
    pub fn random(vocab: usize, concentration: f64, seed: u64) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::arg(format!("vocab must be >= 2, got {vocab}")));
        }
        if !(concentration > 0.0) {
            return Err(Error::arg(format!("concentration must be positive, got {concentration}")));
        }
        let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::arg(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probs = vec![0.0; vocab * vocab];
        for row in probs.chunks_mut(vocab) {
            for p in row.iter_mut() {
                *p = gamma.sample(&mut rng).max(1e-300);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
        }
        Ok(Self::from_probs(vocab, probs))
    }

    fn from_probs(vocab: usize, probs: Vec<f64>) -> Self {
        let mut cumulative = probs.clone();
        for row in cumulative.chunks_mut(vocab) {
            let mut acc = 0.0;
            for c in row.iter_mut() {
                acc += *c;
                *c = acc;
            }
            row[vocab - 1] = f64::INFINITY;
        }
        MarkovSource { vocab, probs, cumulative }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn prob(&self, from: u32, to: u32) -> f64 {
        self.probs[from as usize * self.vocab + to as usize]
    }

    pub fn row(&self, from: u32) -> &[f64] {
        &self.probs[from as usize * self.vocab..(from as usize + 1) * self.vocab]
    }

    pub fn next(&self, from: u32, rng: &mut impl Rng) -> u32 {
        let row = &self.cumulative[from as usize * self.vocab..(from as usize + 1) * self.vocab];
        let u: f64 = rng.random();
        row.partition_point(|&c| c <= u) as u32
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> Vec<u32> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut cur = rng.random_range(0..self.vocab as u32);
        out.push(cur);
        for _ in 1..len {
            cur = self.next(cur, rng);
            out.push(cur);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub source: MarkovSource,
    pub stream: TokenStream,
    /// Held-out "benchmark" sequences from the same source, distinct from each
    /// other and never part of `stream`.
    pub pool: Vec<Vec<u32>>,
}

#[derive(Clone, Copy, Debug)]
pub struct SynthOptions {
    pub concentration: f64,
    pub pool_size: usize,
    pub sequence_len: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { concentration: 0.5, pool_size: 0, sequence_len: 32 }
    }
}

/// Markov-generated stream of `length` tokens. The EOT id is `vocab`, outside
/// the Markov alphabet.
pub fn synth_corpus(vocab: usize, length: usize, seed: u64) -> Result<SynthCorpus> {
    synth_corpus_with(vocab, length, seed, SynthOptions::default())
}

pub fn synth_corpus_with(vocab: usize, length: usize, seed: u64, opts: SynthOptions) -> Result<SynthCorpus> {
    let source = MarkovSource::random(vocab, opts.concentration, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let stream = TokenStream::new(source.sample(length, &mut rng), vocab as u32);

    let mut pool_rng = ChaCha8Rng::seed_from_u64(seed);
    pool_rng.set_stream(2);
    let mut seen = BTreeSet::new();
    let mut pool = Vec::with_capacity(opts.pool_size);
    let mut attempts = 0usize;
    while pool.len() < opts.pool_size {
        attempts += 1;
        if attempts > 100 * opts.pool_size.max(1) {
            return Err(Error::arg("cannot draw enough distinct pool sequences; raise sequence_len or vocab"));
        }
        let seq = source.sample(opts.sequence_len, &mut pool_rng);
        if seen.insert(seq.clone()) {
            pool.push(seq);
        }
    }
    Ok(SynthCorpus { source, stream, pool })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_stream() {
        assert!(synth_corpus(4, 0, 1).unwrap().stream.is_empty());
        assert!(synth_corpus(1, 10, 1).is_err());
    }

    #[test]
    fn seeded_corpus_is_identical() {
        let opts = SynthOptions { pool_size: 8, ..Default::default() };
        let a = synth_corpus_with(16, 5000, 3, opts).unwrap();
        let b = synth_corpus_with(16, 5000, 3, opts).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.pool, b.pool);
        assert_ne!(a.stream, synth_corpus_with(16, 5000, 4, opts).unwrap().stream);
        assert!(a.stream.tokens.iter().all(|&t| t < 16));
    }

    #[test]
    fn rows_are_distributions() {
        let s = MarkovSource::random(10, 0.3, 9).unwrap();
        for i in 0..10 {
            assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
