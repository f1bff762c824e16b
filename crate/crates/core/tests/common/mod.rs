//! Synthetic corpora and brute-force reference implementations shared by
//! the integration tests. The oracles deliberately avoid the library's own
//! helpers: character classes are spelled out over the generator's closed
//! alphabet and all thresholds are compared in integer arithmetic.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use arprep::corpus::{Document, Sentence, Source};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ARABIC_LETTERS: &[char] = &[
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف', 'ق', 'ك', 'ل',
    'م', 'ن', 'ه', 'و', 'ي', 'ء', 'ة', 'ى', 'أ', 'إ', 'آ',
];
const LATIN: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const PUNCT: &[char] = &['!', '?', ',', ':', '-', '"', '(', ')', '؟', '،', '؛', '.'];
const ARABIC_DIGITS: &[char] = &['٠', '١', '٢', '٣', '٤', '٥', '٦', '٧', '٨', '٩'];
const HTML_BITS: &[&str] = &[
    "<div>",
    "</p>",
    "<br/>",
    "<a href=\"x\">",
    "&amp;",
    "&#1575;",
    "&nbsp;",
    "window.location",
    "function(",
    "var x",
    "=>",
];
pub const SOURCES: [Source; 4] = [Source::Cc, Source::News, Source::Elkhair, Source::Wiki];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn arabic_word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| *ARABIC_LETTERS.choose(rng).unwrap()).collect()
}

pub fn latin_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=8);
    (0..n).map(|_| *LATIN.choose(rng).unwrap() as char).collect()
}

fn arabic_words(rng: &mut ChaCha8Rng, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let n = rng.random_range(range);
    (0..n).map(|_| arabic_word(rng, 2, 7)).collect()
}

fn latin_words(rng: &mut ChaCha8Rng, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let n = rng.random_range(range);
    (0..n).map(|_| latin_word(rng)).collect()
}

fn punct_run(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=6);
    (0..n).map(|_| *PUNCT.choose(rng).unwrap()).collect()
}

/// One sentence drawn from a mixture of clean, short, foreign, markup,
/// punctuation-heavy and borderline-ratio shapes.
pub fn synthetic_sentence(rng: &mut ChaCha8Rng) -> String {
    let kind = rng.random_range(0..100);
    let mut words = match kind {
        0..=44 => arabic_words(rng, 8..=16),
        45..=54 => arabic_words(rng, 1..=9),
        55..=61 => latin_words(rng, 4..=12),
        62..=71 => {
            let mut w = arabic_words(rng, 3..=8);
            let at = rng.random_range(0..=w.len());
            let foreign = latin_words(rng, 1..=8);
            w.splice(at..at, foreign);
            w
        }
        72..=77 => {
            let mut w = arabic_words(rng, 6..=12);
            let at = rng.random_range(0..=w.len());
            w.insert(at, HTML_BITS.choose(rng).unwrap().to_string());
            w
        }
        78..=87 => {
            let mut w = arabic_words(rng, 7..=12);
            let k = rng.random_range(1..=3);
            for _ in 0..k {
                let i = rng.random_range(0..w.len());
                let p = punct_run(rng);
                if rng.random_bool(0.5) {
                    w[i].push_str(&p);
                } else {
                    w.insert(i, p);
                }
            }
            w
        }
        88..=93 => {
            // ratios around the 70% line: words of Latin and digits
            let mut w = arabic_words(rng, 8..=10);
            for _ in 0..rng.random_range(1..=6) {
                let i = rng.random_range(0..w.len());
                let tail: String = if rng.random_bool(0.5) {
                    (0..rng.random_range(1..=3)).map(|_| *LATIN.choose(rng).unwrap() as char).collect()
                } else {
                    (0..rng.random_range(1..=3)).map(|_| *ARABIC_DIGITS.choose(rng).unwrap()).collect()
                };
                w[i].push_str(&tail);
            }
            w
        }
        _ => {
            let mut w = arabic_words(rng, 8..=12);
            w.push("....".into());
            w
        }
    };
    if rng.random_bool(0.3) {
        let last = words.len() - 1;
        words[last].push(if rng.random_bool(0.5) { '.' } else { '؟' });
    }
    words.join(" ")
}

pub fn synthetic_document(rng: &mut ChaCha8Rng, id: usize) -> Document {
    let n = rng.random_range(1..=14);
    let sentences = (0..n).map(|_| Sentence::new(synthetic_sentence(rng))).collect();
    Document::new(format!("doc-{id}"), *SOURCES.choose(rng).unwrap(), sentences)
}

pub fn synthetic_corpus(seed: u64, docs: usize) -> Vec<Document> {
    let mut r = rng(seed);
    (0..docs).map(|i| synthetic_document(&mut r, i)).collect()
}

/// Clean Arabic corpus for tokenizer and instance tests.
pub fn arabic_corpus(seed: u64, docs: usize, sentences: std::ops::RangeInclusive<usize>) -> Vec<Document> {
    let mut r = rng(seed);
    let vocab: Vec<String> = (0..3000).map(|_| arabic_word(&mut r, 2, 8)).collect();
    (0..docs)
        .map(|d| {
            let n = r.random_range(sentences.clone());
            let s = (0..n)
                .map(|_| {
                    let k = r.random_range(8..=20);
                    Sentence::new((0..k).map(|_| vocab.choose(&mut r).unwrap().as_str()).collect::<Vec<_>>().join(" "))
                })
                .collect();
            Document::new(format!("a{d}"), SOURCES[d % 4], s)
        })
        .collect()
}

// ---------------------------------------------------------------- filter

fn o_is_arabic_letter(c: char) -> bool {
    ARABIC_LETTERS.contains(&c)
}

fn o_is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '؟' | '،' | '؛')
}

fn o_words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn o_has_markup(s: &str) -> bool {
    // '<' and '&' only ever come from markup fragments in this alphabet
    const SIGNATURES: [&str; 6] = ["function(", "var ", "=>", "document.", "window.", "<script"];
    s.contains('<') || s.contains('&') || SIGNATURES.iter().any(|sig| s.contains(sig))
}

fn o_low_arabic(s: &str) -> bool {
    let total = s.chars().filter(|c| !c.is_whitespace()).count();
    let arabic = s.chars().filter(|&c| o_is_arabic_letter(c)).count();
    // arabic / total < 7 / 10
    total == 0 || arabic * 10 < total * 7
}

fn o_punct_run(s: &str) -> bool {
    let cleaned: Vec<char> = s.chars().filter(|&c| c != '.').collect();
    (0..cleaned.len()).any(|i| cleaned.len() >= i + 4 && cleaned[i..i + 4].iter().all(|&c| o_is_punct(c)))
}

fn o_strip_spans(s: &str) -> String {
    let words = o_words(s);
    let foreign: Vec<bool> = words.iter().map(|w| !w.chars().any(o_is_arabic_letter)).collect();
    let mut keep = vec![true; words.len()];
    for i in 0..words.len() {
        // grow the maximal foreign run containing i
        if !foreign[i] {
            continue;
        }
        let mut lo = i;
        while lo > 0 && foreign[lo - 1] {
            lo -= 1;
        }
        let mut hi = i;
        while hi + 1 < words.len() && foreign[hi + 1] {
            hi += 1;
        }
        if hi - lo + 1 >= 5 {
            keep[i] = false;
        }
    }
    words.iter().zip(&keep).filter(|(_, k)| **k).map(|(w, _)| *w).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OracleCounts {
    pub documents_in: u64,
    pub documents_out: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

fn joined_len(sentences: &[String]) -> u64 {
    sentences.join("\n").len() as u64
}

/// Straight-line reimplementation of the default-threshold document filter.
pub fn oracle_filter(docs: &[Document]) -> (Vec<Document>, BTreeMap<Source, OracleCounts>) {
    let mut out = Vec::new();
    let mut report: BTreeMap<Source, OracleCounts> = BTreeMap::new();
    for doc in docs {
        let original: Vec<String> = doc.sentences.iter().map(|s| s.text().to_string()).collect();
        let mut survivors = Vec::new();
        let mut removed = 0;
        for text in &original {
            let t = o_strip_spans(text);
            let drop = o_has_markup(&t) || o_low_arabic(&t) || o_words(&t).len() < 8 || o_punct_run(&t);
            if drop {
                removed += 1;
            } else {
                survivors.push(t);
            }
        }
        let words: usize = survivors.iter().map(|s| o_words(s).len()).sum();
        // removed / total > 3 / 10
        let kept = words >= 64 && removed * 10 <= original.len() * 3;
        let row = report.entry(doc.source).or_default();
        row.documents_in += 1;
        row.input_bytes += joined_len(&original);
        if kept {
            row.documents_out += 1;
            row.output_bytes += joined_len(&survivors);
            out.push(Document::new(doc.id.clone(), doc.source, survivors.into_iter().map(Sentence::new).collect()));
        }
    }
    (out, report)
}

// ----------------------------------------------------------------- dedup

pub fn oracle_key(sentence: &str) -> Option<String> {
    let is_digit = |c: char| c.is_ascii_digit() || ARABIC_DIGITS.contains(&c) || ('۰'..='۹').contains(&c);
    let q: Vec<&str> =
        sentence.split_whitespace().filter(|w| w.chars().count() >= 4 && !w.chars().any(is_digit)).collect();
    if q.is_empty() {
        None
    } else if q.len() <= 6 {
        Some(q.join(" "))
    } else {
        Some(format!("{}\u{1f}{}", q[..3].join(" "), q[q.len() - 3..].join(" ")))
    }
}

pub fn oracle_dedup(docs: &[Document]) -> Vec<Document> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for doc in docs {
        let kept: Vec<Sentence> = doc
            .sentences
            .iter()
            .filter(|s| match oracle_key(s.text()) {
                None => true,
                Some(k) => seen.insert(k),
            })
            .cloned()
            .collect();
        if !kept.is_empty() {
            out.push(Document::new(doc.id.clone(), doc.source, kept));
        }
    }
    out
}

/// Sentences with planted exact and near duplicates (same first and last
/// three qualifying words, different middle).
pub fn planted_duplicates(seed: u64, sentences: usize) -> Vec<Document> {
    let mut r = rng(seed);
    let mut pool: Vec<String> = Vec::new();
    let mut docs = Vec::new();
    let mut made = 0;
    let mut d = 0;
    while made < sentences {
        let n = r.random_range(1..=12).min(sentences - made);
        let mut s = Vec::with_capacity(n);
        for _ in 0..n {
            let roll = r.random_range(0..100);
            let text = if !pool.is_empty() && roll < 30 {
                pool.choose(&mut r).unwrap().clone()
            } else if !pool.is_empty() && roll < 40 {
                let base: Vec<String> = pool.choose(&mut r).unwrap().split(' ').map(String::from).collect();
                if base.len() > 8 {
                    let mut w = base.clone();
                    let mid = r.random_range(3..w.len() - 3);
                    w[mid] = arabic_word(&mut r, 4, 7);
                    w.join(" ")
                } else {
                    base.join(" ")
                }
            } else if roll < 45 {
                // keyless: short words and digits only
                format!("{} {} ١٢٣٤ 2024", arabic_word(&mut r, 1, 3), arabic_word(&mut r, 1, 3))
            } else {
                let k = r.random_range(1..=14);
                let t = (0..k).map(|_| arabic_word(&mut r, 2, 6)).collect::<Vec<_>>().join(" ");
                pool.push(t.clone());
                t
            };
            s.push(Sentence::new(text));
        }
        made += n;
        docs.push(Document::new(format!("p{d}"), SOURCES[d % 4], s));
        d += 1;
    }
    docs
}

// ------------------------------------------------------------------ bbpe

/// Quadratic reference BPE: recount every pair after each merge.
pub fn reference_bpe(texts: &[&str], vocab_size: usize, base_vocab: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
    for text in texts {
        // a piece is a whitespace run followed by a non-whitespace run
        let mut piece = String::new();
        let mut in_word = false;
        for c in text.chars() {
            if c.is_whitespace() && in_word {
                *counts.entry(std::mem::take(&mut piece).into_bytes()).or_default() += 1;
                in_word = false;
            }
            if !c.is_whitespace() {
                in_word = true;
            }
            piece.push(c);
        }
        if !piece.is_empty() {
            *counts.entry(piece.into_bytes()).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<Vec<u8>>, u64)> =
        counts.into_iter().map(|(w, c)| (w.into_iter().map(|b| vec![b]).collect(), c)).collect();
    let mut vocab: HashSet<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    while base_vocab + vocab.len() < vocab_size {
        let mut pairs: HashMap<(Vec<u8>, Vec<u8>), u64> = HashMap::new();
        for (w, c) in &words {
            for p in w.windows(2) {
                *pairs.entry((p[0].clone(), p[1].clone())).or_default() += c;
            }
        }
        let best = pairs.into_iter().max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((l, r), c)) = best else { break };
        if c < 2 {
            break;
        }
        let joined = [l.clone(), r.clone()].concat();
        for (w, _) in words.iter_mut() {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        vocab.insert(joined);
        merges.push((l, r));
    }
    merges
}

/// Random strings over Arabic, emoji sequences, combining marks, odd
/// whitespace and code points at UTF-8 length boundaries.
pub fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    const SPECIAL: &[char] = &[
        '\u{0}',
        '\u{7F}',
        '\u{80}',
        '\u{7FF}',
        '\u{800}',
        '\u{FFFD}',
        '\u{FFFF}',
        '\u{10000}',
        '\u{10FFFF}',
        '\u{200D}',
        '\u{200C}',
        '\u{FEFF}',
        '\u{00A0}',
        '\u{2028}',
        '\u{3000}',
        '\t',
        '\n',
        '\r',
        ' ',
        ' ',
        '\u{0640}',
        '\u{064B}',
        '\u{0670}',
        '\u{FE0F}',
        '\u{1F3FD}',
        '\u{E000}',
        '\u{D7FF}',
        '\u{E0001}',
    ];
    let len = rng.random_range(0..40);
    let mut s = String::new();
    for _ in 0..len {
        match rng.random_range(0..10) {
            0..=3 => s.push(*ARABIC_LETTERS.choose(rng).unwrap()),
            4 => s.push(char::from_u32(rng.random_range(0x1F300..0x1FAFF)).unwrap_or('x')),
            5 => s.push_str(["👨‍👩‍👧", "🏳️‍🌈", "👍🏽", "🇸🇦"][rng.random_range(0..4)]),
            6 => s.push(*SPECIAL.choose(rng).unwrap()),
            7 => s.push(*LATIN.choose(rng).unwrap() as char),
            8 => s.push(char::from_u32(rng.random_range(0..0x11_0000)).unwrap_or('\u{FFFD}')),
            _ => s.push(*ARABIC_DIGITS.choose(rng).unwrap()),
        }
    }
    s
}

// ----------------------------------------------------------------- spans

/// Rebuilds the uncorrupted sequence from input and target.
pub fn splice(input: &[u32], target: &[u32], is_sentinel: impl Fn(u32) -> bool) -> Option<Vec<u32>> {
    let mut spans: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut current: Option<u32> = None;
    for &t in target {
        if is_sentinel(t) {
            if spans.contains_key(&t) {
                return None;
            }
            spans.insert(t, Vec::new());
            current = Some(t);
        } else {
            spans.get_mut(&current?)?.push(t);
        }
    }
    let mut out = Vec::new();
    for &t in input {
        if is_sentinel(t) {
            out.extend(spans.remove(&t)?);
        } else {
            out.push(t);
        }
    }
    spans.is_empty().then_some(out)
}
