//! Sentence- and document-level quality heuristics with retention
//! accounting.
//!
//! Per document the stages run in this order:
//!
//! 1. long non-Arabic word spans are cut out of every sentence (rule 6);
//! 2. each sentence is tested against rules 1–4 and dropped on the first hit;
//! 3. the document is dropped if fewer than `min_doc_words` words survive
//!    (rule 5) or if more than `max_removed_sentence_fraction` of its
//!    sentences were dropped in step 2 (rule 8).
//!
//! Sentence deduplication (rule 7) needs a corpus-wide index and lives in
//! [`crate::dedup`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence, Source};
use crate::error::{Error, Result};
use crate::normalizer::{self, arabic_ratio, classify_char, has_arabic_letter, CharClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_arabic_ratio: f64,
    pub min_sentence_words: usize,
    pub max_successive_punct: usize,
    pub min_doc_words: usize,
    pub max_removed_sentence_fraction: f64,
    pub nonarabic_span_min_words: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_arabic_ratio: 0.70,
            min_sentence_words: 8,
            max_successive_punct: 3,
            min_doc_words: 64,
            max_removed_sentence_fraction: 0.30,
            nonarabic_span_min_words: 5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_arabic_ratio", self.min_arabic_ratio),
            ("max_removed_sentence_fraction", self.max_removed_sentence_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("filter.{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("min_sentence_words", self.min_sentence_words),
            ("max_successive_punct", self.max_successive_punct),
            ("min_doc_words", self.min_doc_words),
            ("nonarabic_span_min_words", self.nonarabic_span_min_words),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("filter.{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Html,
    LowArabic,
    ShortSentence,
    PunctRun,
    ShortDocument,
    NonArabicSpan,
    Duplicate,
    RemovedFraction,
}

impl Rule {
    pub fn number(self) -> u8 {
        match self {
            Rule::Html => 1,
            Rule::LowArabic => 2,
            Rule::ShortSentence => 3,
            Rule::PunctRun => 4,
            Rule::ShortDocument => 5,
            Rule::NonArabicSpan => 6,
            Rule::Duplicate => 7,
            Rule::RemovedFraction => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Html => "html",
            Rule::LowArabic => "low_arabic",
            Rule::ShortSentence => "short_sentence",
            Rule::PunctRun => "punct_run",
            Rule::ShortDocument => "short_document",
            Rule::NonArabicSpan => "nonarabic_span",
            Rule::Duplicate => "duplicate",
            Rule::RemovedFraction => "removed_fraction",
        }
    }
}

const SCRIPT_SIGNATURES: [&str; 6] = ["function(", "var ", "=>", "document.", "window.", "<script"];

/// Rule 1: HTML tag, decodable entity, or a Javascript signature.
pub fn rule_has_html(sentence: &Sentence) -> bool {
    let text = sentence.text();
    normalizer::contains_tag(text)
        || normalizer::contains_entity(text)
        || SCRIPT_SIGNATURES.iter().any(|sig| text.contains(sig))
}

/// Rule 2.
pub fn rule_low_arabic(sentence: &Sentence, cfg: &FilterConfig) -> bool {
    arabic_ratio(sentence.text()) < cfg.min_arabic_ratio
}

/// Rule 3.
pub fn rule_short_sentence(sentence: &Sentence, cfg: &FilterConfig) -> bool {
    sentence.word_count() < cfg.min_sentence_words
}

/// Rule 4: a run of more than `max_successive_punct` punctuation marks once
/// every `.` is deleted. Whitespace and any other character end a run.
pub fn rule_punct_run(sentence: &Sentence, cfg: &FilterConfig) -> bool {
    let mut run = 0usize;
    for c in sentence.text().chars().filter(|&c| c != '.') {
        if classify_char(c) == CharClass::Punctuation {
            run += 1;
            if run > cfg.max_successive_punct {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Rule 6: removes each maximal run of at least `nonarabic_span_min_words`
/// consecutive words without an Arabic letter.
pub fn strip_nonarabic_spans(sentence: &Sentence, cfg: &FilterConfig) -> Sentence {
    let words = sentence.words();
    let mut keep = vec![true; words.len()];
    let mut start = 0;
    while start < words.len() {
        if has_arabic_letter(&words[start]) {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < words.len() && !has_arabic_letter(&words[end]) {
            end += 1;
        }
        if end - start >= cfg.nonarabic_span_min_words {
            keep[start..end].iter_mut().for_each(|k| *k = false);
        }
        start = end;
    }
    if keep.iter().all(|&k| k) {
        return sentence.clone();
    }
    let text = words.iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(" ");
    Sentence::new(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceVerdict {
    Kept,
    Removed(Rule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub doc_id: String,
    pub kept: bool,
    pub sentence_verdicts: Vec<SentenceVerdict>,
    /// Number of sentences rule 6 shortened.
    pub spans_stripped: usize,
    pub triggering_rule: Option<Rule>,
}

fn sentence_rule(sentence: &Sentence, cfg: &FilterConfig) -> Option<Rule> {
    if rule_has_html(sentence) {
        Some(Rule::Html)
    } else if rule_low_arabic(sentence, cfg) {
        Some(Rule::LowArabic)
    } else if rule_short_sentence(sentence, cfg) {
        Some(Rule::ShortSentence)
    } else if rule_punct_run(sentence, cfg) {
        Some(Rule::PunctRun)
    } else {
        None
    }
}

/// Applies all document-local rules. The returned document is `Some` iff
/// the decision keeps it.
pub fn filter_document(doc: &Document, cfg: &FilterConfig) -> (FilterDecision, Option<Document>) {
    let mut verdicts = Vec::with_capacity(doc.sentences.len());
    let mut survivors = Vec::with_capacity(doc.sentences.len());
    let mut spans_stripped = 0;
    for sentence in &doc.sentences {
        let stripped = strip_nonarabic_spans(sentence, cfg);
        if stripped.word_count() != sentence.word_count() {
            spans_stripped += 1;
        }
        match sentence_rule(&stripped, cfg) {
            Some(rule) => verdicts.push(SentenceVerdict::Removed(rule)),
            None => {
                verdicts.push(SentenceVerdict::Kept);
                survivors.push(stripped);
            }
        }
    }
    let total = doc.sentences.len();
    let removed = total - survivors.len();
    let surviving_words: usize = survivors.iter().map(Sentence::word_count).sum();
    let removed_fraction = if total == 0 { 0.0 } else { removed as f64 / total as f64 };

    let triggering_rule = if surviving_words < cfg.min_doc_words {
        Some(Rule::ShortDocument)
    } else if removed_fraction > cfg.max_removed_sentence_fraction {
        Some(Rule::RemovedFraction)
    } else {
        None
    };
    let decision = FilterDecision {
        doc_id: doc.id.clone(),
        kept: triggering_rule.is_none(),
        sentence_verdicts: verdicts,
        spans_stripped,
        triggering_rule,
    };
    let survivor = decision.kept.then(|| Document::new(doc.id.clone(), doc.source, survivors));
    (decision, survivor)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub documents_in: u64,
    pub documents_out: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

impl SourceCounts {
    pub fn retention(&self) -> f64 {
        if self.input_bytes == 0 {
            0.0
        } else {
            self.output_bytes as f64 / self.input_bytes as f64
        }
    }

    fn merge(&mut self, other: &SourceCounts) {
        self.documents_in += other.documents_in;
        self.documents_out += other.documents_out;
        self.input_bytes += other.input_bytes;
        self.output_bytes += other.output_bytes;
    }
}

/// Retention accounting. Sentence rules count removed sentences; document
/// rules count removed documents; `nonarabic_span` counts shortened
/// sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub sources: BTreeMap<Source, SourceCounts>,
    pub rule_counts: BTreeMap<Rule, u64>,
}

impl FilterReport {
    pub fn record(&mut self, doc: &Document, decision: &FilterDecision, survivor: Option<&Document>) {
        let row = self.sources.entry(doc.source).or_default();
        row.documents_in += 1;
        row.input_bytes += doc.byte_len() as u64;
        if let Some(kept) = survivor {
            row.documents_out += 1;
            row.output_bytes += kept.byte_len() as u64;
        }
        for verdict in &decision.sentence_verdicts {
            if let SentenceVerdict::Removed(rule) = verdict {
                *self.rule_counts.entry(*rule).or_default() += 1;
            }
        }
        if decision.spans_stripped > 0 {
            *self.rule_counts.entry(Rule::NonArabicSpan).or_default() += decision.spans_stripped as u64;
        }
        if let Some(rule) = decision.triggering_rule {
            *self.rule_counts.entry(rule).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &FilterReport) {
        for (source, counts) in &other.sources {
            self.sources.entry(*source).or_default().merge(counts);
        }
        for (rule, n) in &other.rule_counts {
            *self.rule_counts.entry(*rule).or_default() += n;
        }
    }

    pub fn total(&self) -> SourceCounts {
        let mut total = SourceCounts::default();
        for counts in self.sources.values() {
            total.merge(counts);
        }
        total
    }

    /// Columns `source, input_bytes, output_bytes, retention`, one row per
    /// source followed by a `TOTAL` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("source\tinput_bytes\toutput_bytes\tretention\n");
        let rows = self.sources.iter().map(|(s, c)| (s.as_str(), *c)).chain(std::iter::once(("TOTAL", self.total())));
        for (name, c) in rows {
            let _ = writeln!(out, "{name}\t{}\t{}\t{:.6}", c.input_bytes, c.output_bytes, c.retention());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let row = |name: &str, c: &SourceCounts| {
            serde_json::json!({
                "source": name,
                "documents_in": c.documents_in,
                "documents_out": c.documents_out,
                "input_bytes": c.input_bytes,
                "output_bytes": c.output_bytes,
                "retention": c.retention(),
            })
        };
        let sources: Vec<_> = self.sources.iter().map(|(s, c)| row(s.as_str(), c)).collect();
        let rules: serde_json::Map<String, serde_json::Value> =
            self.rule_counts.iter().map(|(r, n)| (r.name().to_owned(), (*n).into())).collect();
        serde_json::json!({
            "sources": sources,
            "total": row("TOTAL", &self.total()),
            "rule_counts": rules,
        })
    }
}

const BATCH: usize = 2048;

/// Filters a document stream, preserving input order. Batches are processed
/// on the current rayon pool; report counters are integers so the merged
/// report does not depend on the number of workers.
pub struct FilterStream<I> {
    inner: I,
    cfg: FilterConfig,
    parallel: bool,
    buffer: std::vec::IntoIter<Document>,
    report: FilterReport,
    error: Option<Error>,
}

impl<I> FilterStream<I>
where
    I: Iterator<Item = Result<Document>>,
{
    pub fn report(&self) -> &FilterReport {
        &self.report
    }

    pub fn into_report(self) -> FilterReport {
        self.report
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.error.take()
    }

    fn refill(&mut self) -> bool {
        let mut batch = Vec::with_capacity(BATCH);
        for item in self.inner.by_ref() {
            match item {
                Ok(doc) => batch.push(doc),
                Err(e) => {
                    self.error = Some(e);
                    break;
                }
            }
            if batch.len() == BATCH {
                break;
            }
        }
        if batch.is_empty() {
            return false;
        }
        let cfg = &self.cfg;
        let results: Vec<(FilterDecision, Option<Document>)> = if self.parallel {
            batch.par_iter().map(|d| filter_document(d, cfg)).collect()
        } else {
            batch.iter().map(|d| filter_document(d, cfg)).collect()
        };
        let mut kept = Vec::new();
        for (doc, (decision, survivor)) in batch.iter().zip(results) {
            self.report.record(doc, &decision, survivor.as_ref());
            kept.extend(survivor);
        }
        self.buffer = kept.into_iter();
        true
    }
}

impl<I> Iterator for FilterStream<I>
where
    I: Iterator<Item = Result<Document>>,
{
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        loop {
            if let Some(doc) = self.buffer.next() {
                return Some(doc);
            }
            if self.error.is_some() || !self.refill() {
                return None;
            }
        }
    }
}

/// Streams survivors; the report is complete once the stream is exhausted.
/// Iteration stops at the first upstream error, retrievable through
/// [`FilterStream::take_error`].
pub fn run_filter<I>(docs: I, cfg: &FilterConfig, parallel: bool) -> FilterStream<I::IntoIter>
where
    I: IntoIterator<Item = Result<Document>>,
{
    FilterStream {
        inner: docs.into_iter(),
        cfg: cfg.clone(),
        parallel,
        buffer: Vec::new().into_iter(),
        report: FilterReport::default(),
        error: None,
    }
}

/// Convenience wrapper over [`run_filter`] for in-memory corpora.
pub fn filter_all(docs: Vec<Document>, cfg: &FilterConfig, parallel: bool) -> (Vec<Document>, FilterReport) {
    let mut stream = run_filter(docs.into_iter().map(Ok), cfg, parallel);
    let out: Vec<Document> = stream.by_ref().collect();
    (out, stream.into_report())
}
