//! First-occurrence sentence deduplication.
//!
//! A sentence's key is built from its qualifying words: words longer than
//! three code points that contain no digit. Up to six qualifying words are
//! joined as-is; beyond that the first three and the last three are joined
//! around [`KEY_SEPARATOR`]. Sentences without a qualifying word have no key
//! and are never removed.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence};
use crate::normalizer::{classify_char, CharClass};

pub const KEY_SEPARATOR: char = '\u{001F}';

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DedupKey(String);

impl DedupKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn qualifies(word: &str) -> bool {
    word.chars().count() > 3 && !word.chars().any(|c| classify_char(c) == CharClass::Digit)
}

pub fn dedup_key(sentence: &Sentence) -> Option<DedupKey> {
    let q: Vec<&str> = sentence.words().iter().map(String::as_str).filter(|w| qualifies(w)).collect();
    match q.len() {
        0 => None,
        1..=6 => Some(DedupKey(q.join(" "))),
        n => {
            let mut key = q[..3].join(" ");
            key.push(KEY_SEPARATOR);
            key.push_str(&q[n - 3..].join(" "));
            Some(DedupKey(key))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub sentences_seen: u64,
    pub sentences_dropped: u64,
    pub keyless_sentences: u64,
    pub documents_seen: u64,
    pub documents_dropped: u64,
}

/// Streaming deduplicator holding the set of keys seen so far.
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashSet<DedupKey>,
    stats: DedupStats,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DedupStats {
        self.stats
    }

    /// Drops repeated sentences; returns `None` when nothing is left.
    pub fn process(&mut self, mut doc: Document) -> Option<Document> {
        self.stats.documents_seen += 1;
        let before = doc.sentences.len();
        doc.sentences.retain(|s| match dedup_key(s) {
            None => {
                self.stats.keyless_sentences += 1;
                true
            }
            Some(key) => self.seen.insert(key),
        });
        self.stats.sentences_seen += before as u64;
        self.stats.sentences_dropped += (before - doc.sentences.len()) as u64;
        if doc.sentences.is_empty() {
            self.stats.documents_dropped += 1;
            None
        } else {
            Some(doc)
        }
    }
}

/// Lazily deduplicates a document stream in order.
pub fn dedup_stream<I>(docs: I) -> DedupStream<I::IntoIter>
where
    I: IntoIterator<Item = Document>,
{
    DedupStream { inner: docs.into_iter(), dedup: Deduplicator::new() }
}

pub struct DedupStream<I> {
    inner: I,
    dedup: Deduplicator,
}

impl<I> DedupStream<I> {
    pub fn stats(&self) -> DedupStats {
        self.dedup.stats()
    }
}

impl<I: Iterator<Item = Document>> Iterator for DedupStream<I> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        for doc in self.inner.by_ref() {
            if let Some(doc) = self.dedup.process(doc) {
                return Some(doc);
            }
        }
        None
    }
}

fn shard_of(key: &DedupKey, shards: usize) -> usize {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    (h.finish() % shards as u64) as usize
}

/// Hash-sharded deduplication of an in-memory corpus. Every occurrence of a
/// key lands in the same shard and each shard walks its occurrences in
/// corpus order, so the output equals [`dedup_stream`] for any shard count.
pub fn dedup_sharded(docs: Vec<Document>, shards: usize) -> (Vec<Document>, DedupStats) {
    let shards = shards.max(1);
    // (doc index, sentence index, key) in canonical order.
    let keyed: Vec<Vec<Option<DedupKey>>> =
        docs.par_iter().map(|d| d.sentences.iter().map(dedup_key).collect()).collect();

    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); shards];
    for (di, keys) in keyed.iter().enumerate() {
        for (si, key) in keys.iter().enumerate() {
            if let Some(key) = key {
                buckets[shard_of(key, shards)].push((di, si));
            }
        }
    }
    let drops: Vec<Vec<(usize, usize)>> = buckets
        .into_par_iter()
        .map(|bucket| {
            let mut seen = HashSet::new();
            bucket.into_iter().filter(|&(di, si)| !seen.insert(keyed[di][si].as_ref().unwrap())).collect()
        })
        .collect();

    let mut dropped: Vec<Vec<bool>> = docs.iter().map(|d| vec![false; d.sentences.len()]).collect();
    for (di, si) in drops.into_iter().flatten() {
        dropped[di][si] = true;
    }

    let mut stats = DedupStats::default();
    let mut out = Vec::with_capacity(docs.len());
    for ((mut doc, flags), keys) in docs.into_iter().zip(dropped).zip(&keyed) {
        stats.documents_seen += 1;
        stats.sentences_seen += flags.len() as u64;
        stats.keyless_sentences += keys.iter().filter(|k| k.is_none()).count() as u64;
        let mut flag = flags.iter();
        doc.sentences.retain(|_| !*flag.next().unwrap());
        stats.sentences_dropped += (flags.len() - doc.sentences.len()) as u64;
        if doc.sentences.is_empty() {
            stats.documents_dropped += 1;
        } else {
            out.push(doc);
        }
    }
    (out, stats)
}
