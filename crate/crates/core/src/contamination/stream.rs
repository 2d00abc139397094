use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::ContaminationPlan;
use crate::dedup::QuestionRecord;
use crate::error::{Error, Result};

pub const TOKS_MAGIC: &[u8; 4] = b"TOKS";
pub const TOKS_VERSION: u32 = 1;
pub const CLEAN_TAG: &str = "clean";

pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<u32>;
}

impl<F: Fn(&str) -> Vec<u32>> Tokenizer for F {
    fn encode(&self, text: &str) -> Vec<u32> {
        self(text)
    }
}

/// UTF-8 bytes as token ids 0..=255; id 256 is free for an EOT marker.
#[derive(Clone, Copy, Debug, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub const EOT: u32 = 256;
}

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: u64,
    pub len: u64,
    pub tag: String,
}

impl Span {
    pub fn is_clean(&self) -> bool {
        self.tag == CLEAN_TAG
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<u32>,
    pub eot_id: u32,
    /// Tagged spans covering the stream in order; empty means all clean.
    pub provenance: Vec<Span>,
}

impl TokenStream {
    pub fn new(tokens: Vec<u32>, eot_id: u32) -> Self {
        TokenStream { tokens, eot_id, provenance: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn injected_spans(&self) -> impl Iterator<Item = &Span> {
        self.provenance.iter().filter(|s| !s.is_clean())
    }

    pub fn write_binary<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(TOKS_MAGIC)?;
        w.write_all(&TOKS_VERSION.to_le_bytes())?;
        w.write_all(&self.eot_id.to_le_bytes())?;
        w.write_all(&(self.tokens.len() as u64).to_le_bytes())?;
        for t in &self.tokens {
            w.write_all(&t.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut head = [0u8; 20];
        r.read_exact(&mut head).map_err(|_| Error::format("token stream shorter than its header"))?;
        if &head[0..4] != TOKS_MAGIC {
            return Err(Error::format("bad token stream magic"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != TOKS_VERSION {
            return Err(Error::format(format!("unsupported token stream version {version}")));
        }
        let eot_id = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let count = u64::from_le_bytes(head[12..20].try_into().unwrap());
        let mut tokens = Vec::with_capacity(count.min(1 << 28) as usize);
        let mut buf = [0u8; 4];
        for i in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| Error::format(format!("token stream truncated at token {i} of {count}")))?;
            tokens.push(u32::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::format("trailing bytes after token stream"));
        }
        Ok(TokenStream::new(tokens, eot_id))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic_with(path, |w| self.write_binary(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(std::fs::File::open(path)?)
    }

    /// Sidecar lines `start,length,tag`.
    pub fn write_provenance<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.provenance {
            writeln!(w, "{},{},{}", s.start, s.len, s.tag)?;
        }
        Ok(())
    }

    pub fn read_provenance<R: BufRead>(r: R) -> Result<Vec<Span>> {
        let mut spans = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let mut num = |what: &str| -> Result<u64> {
                parts
                    .next()
                    .and_then(|p| p.trim().parse().ok())
                    .ok_or_else(|| Error::format(format!("provenance line {}: bad {what}", n + 1)))
            };
            let start = num("start")?;
            let len = num("length")?;
            let tag = parts
                .next()
                .ok_or_else(|| Error::format(format!("provenance line {}: missing tag", n + 1)))?;
            spans.push(Span { start, len, tag: tag.to_string() });
        }
        Ok(spans)
    }
}

/// Inserts every planned (question, repetition) into a copy of `stream`, each
/// wrapped as `EOT question EOT`. Spans go between original tokens only, so
/// one injected span never lands inside another.
pub fn inject(
    stream: &TokenStream,
    plan: &ContaminationPlan,
    records: &[QuestionRecord],
    tokenizer: &dyn Tokenizer,
) -> Result<TokenStream> {
    if plan.total_insertions() == 0 {
        return Ok(stream.clone());
    }
    if stream.is_empty() {
        return Err(Error::arg("cannot inject into an empty token stream"));
    }
    plan.validate()?;
    let by_id: BTreeMap<&str, &QuestionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut encoded: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for s in &plan.subsets {
        for id in &s.question_ids {
            let rec = by_id.get(id.as_str()).ok_or_else(|| Error::arg(format!("plan references unknown question {id}")))?;
            let toks = tokenizer.encode(&rec.contamination_text);
            if toks.is_empty() {
                return Err(Error::arg(format!("question {id} tokenizes to nothing")));
            }
            encoded.insert(id.as_str(), toks);
        }
    }
    let insertions = plan.resolve_insertions(stream.len() as u64)?;
    let extra: usize = insertions.iter().map(|i| encoded[i.question_id.as_str()].len() + 2).sum();

    let src = &stream.tokens;
    let mut tokens = Vec::with_capacity(src.len() + extra);
    let mut provenance = Vec::with_capacity(2 * insertions.len() + 1);
    let mut copied = 0usize;
    let push_clean = |tokens: &mut Vec<u32>, provenance: &mut Vec<Span>, upto: usize, copied: &mut usize| {
        if upto > *copied {
            provenance.push(Span { start: tokens.len() as u64, len: (upto - *copied) as u64, tag: CLEAN_TAG.into() });
            tokens.extend_from_slice(&src[*copied..upto]);
            *copied = upto;
        }
    };
    for ins in &insertions {
        push_clean(&mut tokens, &mut provenance, ins.position as usize, &mut copied);
        let q = &encoded[ins.question_id.as_str()];
        provenance.push(Span { start: tokens.len() as u64, len: q.len() as u64 + 2, tag: ins.question_id.clone() });
        tokens.push(stream.eot_id);
        tokens.extend_from_slice(q);
        tokens.push(stream.eot_id);
    }
    push_clean(&mut tokens, &mut provenance, src.len(), &mut copied);
    debug_assert_eq!(tokens.len(), src.len() + extra);
    Ok(TokenStream { tokens, eot_id: stream.eot_id, provenance })
}

/// Injected spans whose tag is a holdout id. Empty for a sound stream.
pub fn audit_holdout<'a>(spans: &'a [Span], holdout_ids: &[String]) -> Vec<&'a Span> {
    let holdout: BTreeSet<&str> = holdout_ids.iter().map(String::as_str).collect();
    spans.iter().filter(|s| holdout.contains(s.tag.as_str())).collect()
}

/// Fraction of the final stream made up of injected tokens.
pub fn injected_fraction(injected_tokens: f64, clean_tokens: f64) -> f64 {
    injected_tokens / (clean_tokens + injected_tokens)
}
