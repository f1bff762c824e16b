//! Byte-level BPE.
//!
//! Text is pre-tokenized into *pieces*: each piece is a run of whitespace
//! followed by a run of non-whitespace, so `"a b"` becomes `"a"`, `" b"`.
//! Merges never cross piece boundaries, and concatenating the pieces gives
//! back the input, which is what makes decoding exact.
//!
//! Id layout: specials first (`[PAD]`, `[UNK]`, `[CLS]`, `[SEP]`, `[MASK]`,
//! then 100 sentinels), the 256 single-byte tokens next, learned merges
//! after that.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Document;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const MASK: TokenId = 4;
pub const SENTINEL_BASE: TokenId = 5;
pub const NUM_SENTINELS: usize = 100;
pub const NUM_SPECIALS: usize = 5 + NUM_SENTINELS;
/// Smallest legal vocabulary: specials plus the byte alphabet.
pub const MIN_VOCAB: usize = NUM_SPECIALS + 256;
pub const DEFAULT_VOCAB: usize = 64_000;

const FORMAT_HEADER: &str = "#bbpe v1";

pub fn sentinel(index: usize) -> TokenId {
    assert!(index < NUM_SENTINELS, "sentinel index {index} out of range");
    SENTINEL_BASE + index as TokenId
}

pub fn is_special(id: TokenId) -> bool {
    (id as usize) < NUM_SPECIALS
}

pub fn sentinel_index(id: TokenId) -> Option<usize> {
    (SENTINEL_BASE..SENTINEL_BASE + NUM_SENTINELS as TokenId).contains(&id).then(|| (id - SENTINEL_BASE) as usize)
}

fn byte_token(b: u8) -> TokenId {
    (NUM_SPECIALS + b as usize) as TokenId
}

fn special_name(id: usize) -> String {
    match id {
        0 => "[PAD]".into(),
        1 => "[UNK]".into(),
        2 => "[CLS]".into(),
        3 => "[SEP]".into(),
        4 => "[MASK]".into(),
        n => format!("<extra_id_{}>", n - SENTINEL_BASE as usize),
    }
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocab_size {requested} is below the minimum of {MIN_VOCAB}")]
    VocabTooSmall { requested: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("unknown token id {0}")]
    UnknownId(TokenId),
    #[error("unsupported model format {0:?}")]
    Version(String),
    #[error("model file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Splits text into merge units. Concatenating the result yields `text`.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if ws && !prev_ws && i > start {
            pieces.push(&text[start..i]);
            start = i;
        }
        prev_ws = ws;
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Merge {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedText {
    pub ids: Vec<TokenId>,
    /// Index of the source piece (word) each id came from.
    pub word_boundaries: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BbpeModel {
    vocab_size: usize,
    /// Byte content of every non-special token, indexed by `id - NUM_SPECIALS`.
    tokens: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, TokenId>,
    merges: Vec<Merge>,
    ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
}

impl BbpeModel {
    /// A model with no merges: one token per byte.
    pub fn byte_level(vocab_size: usize) -> Result<Self, TokenizerError> {
        if vocab_size < MIN_VOCAB {
            return Err(TokenizerError::VocabTooSmall { requested: vocab_size });
        }
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let lookup = tokens.iter().enumerate().map(|(i, t)| (t.clone(), (NUM_SPECIALS + i) as TokenId)).collect();
        Ok(BbpeModel { vocab_size, tokens, lookup, merges: Vec::new(), ranks: HashMap::new() })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of ids currently in use (specials + bytes + distinct merges).
    pub fn len(&self) -> usize {
        NUM_SPECIALS + self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        (id as usize).checked_sub(NUM_SPECIALS).and_then(|i| self.tokens.get(i)).map(Vec::as_slice)
    }

    pub fn token_id(&self, bytes: &[u8]) -> Option<TokenId> {
        self.lookup.get(bytes).copied()
    }

    /// Registers a merge, reusing the id of an existing token with the same
    /// bytes so the token table stays a bijection.
    fn push_merge(&mut self, left: TokenId, right: TokenId) -> TokenId {
        let mut bytes = self.token_bytes(left).expect("left token exists").to_vec();
        bytes.extend_from_slice(self.token_bytes(right).expect("right token exists"));
        let result = match self.lookup.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.len() as TokenId;
                self.lookup.insert(bytes.clone(), id);
                self.tokens.push(bytes);
                id
            }
        };
        self.ranks.entry((left, right)).or_insert((self.merges.len(), result));
        self.merges.push(Merge { left, right, result });
        result
    }

    /// The same model restricted to its first `n` merges.
    pub fn with_merge_prefix(&self, n: usize) -> BbpeModel {
        let mut model = BbpeModel::byte_level(self.vocab_size).expect("vocab already validated");
        for m in &self.merges[..n.min(self.merges.len())] {
            model.push_merge(m.left, m.right);
        }
        model
    }

    fn encode_piece(&self, piece: &[u8], out: &mut Vec<TokenId>) {
        let mut ids: Vec<TokenId> = piece.iter().map(|&b| byte_token(b)).collect();
        while ids.len() > 1 {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, result)| (rank, w[0], w[1], result)))
                .min();
            let Some((_, left, right, result)) = best else { break };
            replace_pair(&mut ids, left, right, result);
        }
        out.extend(ids);
    }

    pub fn encode(&self, text: &str) -> TokenizedText {
        let mut out = TokenizedText::default();
        for (word, piece) in pretokenize(text).into_iter().enumerate() {
            let before = out.ids.len();
            self.encode_piece(piece.as_bytes(), &mut out.ids);
            out.word_boundaries.resize(out.ids.len(), word);
            debug_assert!(out.ids.len() > before);
        }
        out
    }

    /// Concatenates token bytes, skipping specials. Invalid UTF-8 (possible
    /// only for hand-built id lists) is replaced with U+FFFD.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            if is_special(id) {
                continue;
            }
            bytes.extend_from_slice(self.token_bytes(id).ok_or(TokenizerError::UnknownId(id))?);
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "vocab_size {}", self.vocab_size);
        let _ = writeln!(out, "specials {NUM_SPECIALS}");
        for id in 0..NUM_SPECIALS {
            let _ = writeln!(out, "{id} {}", special_name(id));
        }
        out.push_str("bytes 256\n");
        for b in 0..=255u8 {
            let _ = writeln!(out, "{} {b:02x}", byte_token(b));
        }
        let _ = writeln!(out, "merges {}", self.merges.len());
        for m in &self.merges {
            let l = hex(self.token_bytes(m.left).unwrap());
            let r = hex(self.token_bytes(m.right).unwrap());
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().filter(|(_, l)| !l.is_empty() || what.is_empty()).ok_or_else(|| TokenizerError::Malformed {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let (_, header) = next("header")?;
        if header != FORMAT_HEADER {
            return Err(TokenizerError::Version(header.to_owned()));
        }
        let (line, l) = next("vocab_size")?;
        let vocab_size = parse_count(line, l, "vocab_size")?;
        let mut model = BbpeModel::byte_level(vocab_size)
            .map_err(|e| TokenizerError::Malformed { line, message: e.to_string() })?;

        let (line, l) = next("specials")?;
        let n = parse_count(line, l, "specials")?;
        if n != NUM_SPECIALS {
            return Err(malformed(line, format!("expected {NUM_SPECIALS} specials, found {n}")));
        }
        for id in 0..NUM_SPECIALS {
            let (line, l) = next("special token")?;
            let expected = format!("{id} {}", special_name(id));
            if l != expected {
                return Err(malformed(line, format!("expected {expected:?}")));
            }
        }
        let (line, l) = next("bytes")?;
        if parse_count(line, l, "bytes")? != 256 {
            return Err(malformed(line, "expected 256 byte tokens".into()));
        }
        for b in 0..=255u8 {
            let (line, l) = next("byte token")?;
            let expected = format!("{} {b:02x}", byte_token(b));
            if l != expected {
                return Err(malformed(line, format!("expected {expected:?}")));
            }
        }
        let (line, l) = next("merges")?;
        let n = parse_count(line, l, "merges")?;
        for _ in 0..n {
            let (line, l) = next("merge")?;
            let mut parts = l.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed(line, "expected two hex strings".into()));
            };
            let resolve = |h: &str| {
                let bytes = unhex(h).ok_or_else(|| malformed(line, format!("bad hex {h:?}")))?;
                model.token_id(&bytes).ok_or_else(|| malformed(line, format!("merge operand {h} is not a known token")))
            };
            let (left, right) = (resolve(a)?, resolve(b)?);
            model.push_merge(left, right);
        }
        match lines.next() {
            None | Some((_, "")) => {}
            Some((line, _)) => return Err(malformed(line, "trailing content after merges".into())),
        }
        if let Some((line, _)) = lines.next() {
            return Err(malformed(line, "trailing content after merges".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn malformed(line: usize, message: String) -> TokenizerError {
    TokenizerError::Malformed { line, message }
}

fn parse_count(line: usize, l: &str, key: &str) -> Result<usize, TokenizerError> {
    l.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| malformed(line, format!("expected `{key} <count>`")))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

/// Replaces non-overlapping occurrences of `(left, right)`, scanning left to
/// right. Returns true if anything changed.
fn replace_pair(ids: &mut Vec<TokenId>, left: TokenId, right: TokenId, result: TokenId) -> bool {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    let mut changed = false;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == left && ids[i + 1] == right {
            out.push(result);
            i += 2;
            changed = true;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    *ids = out;
    changed
}

/// Piece frequencies of a corpus.
pub fn count_pieces<'a, I>(texts: I) -> HashMap<Vec<u8>, u64>
where
    I: IntoParallelIterator<Item = &'a str>,
{
    texts
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Vec<u8>, u64>, text| {
            for piece in pretokenize(text) {
                *acc.entry(piece.as_bytes().to_vec()).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            let (mut big, small) = if a.len() >= b.len() { (std::mem::take(&mut a), b) } else { (b, a) };
            for (k, v) in small {
                *big.entry(k).or_default() += v;
            }
            big
        })
}

struct Candidate {
    count: u64,
    left: Vec<u8>,
    right: Vec<u8>,
    pair: (TokenId, TokenId),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap: higher count first, then lexicographically smaller bytes.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count.cmp(&other.count).then_with(|| other.left.cmp(&self.left)).then_with(|| other.right.cmp(&self.right))
    }
}

/// Learns merges from piece frequencies.
///
/// Each step merges the adjacent pair with the highest weighted count; ties
/// go to the pair whose left token bytes are lexicographically smallest,
/// then right. Training stops when the vocabulary is full or no pair occurs
/// at least twice.
pub fn train_from_counts(counts: HashMap<Vec<u8>, u64>, vocab_size: usize) -> Result<BbpeModel, TokenizerError> {
    let mut model = BbpeModel::byte_level(vocab_size)?;
    if counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut entries: Vec<(Vec<u8>, u64)> = counts.into_iter().collect();
    entries.sort_unstable();
    let freqs: Vec<u64> = entries.iter().map(|(_, f)| *f).collect();
    let mut words: Vec<Vec<TokenId>> =
        entries.into_iter().map(|(bytes, _)| bytes.into_iter().map(byte_token).collect()).collect();

    let mut pair_counts: HashMap<(TokenId, TokenId), u64> = HashMap::new();
    let mut occurs: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (wi, word) in words.iter().enumerate() {
        for w in word.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_default() += freqs[wi];
            occurs.entry((w[0], w[1])).or_default().insert(wi);
        }
    }
    let candidate = |model: &BbpeModel, pair: (TokenId, TokenId), count: u64| Candidate {
        count,
        left: model.token_bytes(pair.0).unwrap().to_vec(),
        right: model.token_bytes(pair.1).unwrap().to_vec(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> =
        pair_counts.iter().map(|(&pair, &count)| candidate(&model, pair, count)).collect();

    while model.len() < vocab_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(Candidate { count: current, ..top });
            }
            continue;
        }
        if current < 2 {
            break;
        }
        let (left, right) = top.pair;
        let result = model.push_merge(left, right);

        let mut affected: Vec<usize> = occurs.remove(&top.pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<(TokenId, TokenId)> = HashSet::new();
        for wi in affected {
            let freq = freqs[wi];
            let word = &mut words[wi];
            let old = word.clone();
            if !replace_pair(word, left, right, result) {
                continue;
            }
            for w in old.windows(2) {
                let c = pair_counts.get_mut(&(w[0], w[1])).unwrap();
                *c -= freq;
            }
            for w in word.windows(2) {
                let pair = (w[0], w[1]);
                *pair_counts.entry(pair).or_default() += freq;
                occurs.entry(pair).or_default().insert(wi);
                if w[0] == result || w[1] == result {
                    touched.insert(pair);
                }
            }
        }
        pair_counts.retain(|_, c| *c > 0);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for pair in touched {
            if let Some(&count) = pair_counts.get(&pair) {
                heap.push(candidate(&model, pair, count));
            }
        }
    }
    Ok(model)
}

/// Trains on the sentences of `docs`; every sentence is pre-tokenized
/// independently.
pub fn train_bbpe<'a, I>(docs: I, vocab_size: usize) -> Result<BbpeModel, TokenizerError>
where
    I: IntoIterator<Item = &'a Document>,
{
    if vocab_size < MIN_VOCAB {
        return Err(TokenizerError::VocabTooSmall { requested: vocab_size });
    }
    let texts: Vec<&str> = docs.into_iter().flat_map(|d| d.sentences.iter().map(|s| s.text())).collect();
    train_from_counts(count_pieces(texts), vocab_size)
}
