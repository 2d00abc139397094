//! Contamination plans, token streams with provenance, position profiles and
//! synthetic Markov corpora.

pub mod plan;
pub mod profile;
pub mod stream;
pub mod synth;

pub use plan::{
    apportion, benchmark_counts, build_plan, reference_weights, ContaminationPlan, Insertion, PlanRequest, Placement,
    Subset, DEFAULT_REPETITIONS, REFERENCE_MIX,
};
pub use profile::{position_profile, tag_counts, PositionProfile, PositionTag};
pub use stream::{audit_holdout, inject, injected_fraction, ByteTokenizer, Span, TokenStream, Tokenizer, CLEAN_TAG};
pub use synth::{synth_corpus, synth_corpus_with, MarkovSource, SynthCorpus, SynthOptions};
