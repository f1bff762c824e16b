//! Pre-training example generation.
//!
//! Two generators share one [`MaskingConfig`]:
//!
//! * [`make_mlm_instances`] packs sentence pairs for next-sentence
//!   prediction and applies whole-word masking. Packing is done once; the
//!   packed sequences are then masked `duplication_factor` times, copy `k`
//!   using seed `seed + k`.
//! * [`make_t5_instances`] chunks each document's token stream and replaces
//!   random spans with numbered sentinels.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, purpose, index)`, so output does not depend on thread count or
//! scheduling.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbpe::{self, BbpeModel, TokenId, CLS, MASK, NUM_SENTINELS, NUM_SPECIALS, SEP};
use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub mask_prob: f64,
    pub mask_token_frac: f64,
    pub random_frac: f64,
    pub keep_frac: f64,
    pub duplication_factor: usize,
    pub seed: u64,
    /// MLM sequence length including `[CLS]` and both `[SEP]`s.
    pub max_seq: usize,
    pub mean_span: f64,
    pub encoder_len: usize,
    pub decoder_len: usize,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_prob: 0.15,
            mask_token_frac: 0.80,
            random_frac: 0.10,
            keep_frac: 0.10,
            duplication_factor: 3,
            seed: 12345,
            max_seq: 128,
            mean_span: 3.0,
            encoder_len: 512,
            decoder_len: 114,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.mask_prob, self.mask_token_frac, self.random_frac, self.keep_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("masking fractions must lie in [0, 1]".into()));
        }
        let sum = self.mask_token_frac + self.random_frac + self.keep_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mask/random/keep fractions sum to {sum}, expected 1")));
        }
        if self.duplication_factor == 0 {
            return Err(Error::Config("duplication_factor must be at least 1".into()));
        }
        if self.max_seq < 5 {
            return Err(Error::Config("max_seq must be at least 5".into()));
        }
        if self.mean_span.is_nan() || self.mean_span < 1.0 {
            return Err(Error::Config("mean_span must be at least 1".into()));
        }
        if self.encoder_len < 2 || self.decoder_len < 2 {
            return Err(Error::Config("encoder_len and decoder_len must be at least 2".into()));
        }
        Ok(())
    }
}

const PURPOSE_PACK: u64 = 1;
const PURPOSE_MASK: u64 = 2;
const PURPOSE_SPAN: u64 = 3;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(purpose)) ^ index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmInstance {
    pub input_ids: Vec<TokenId>,
    pub segment_ids: Vec<u8>,
    /// Word index per position; `None` for `[CLS]`/`[SEP]`.
    pub word_ids: Vec<Option<u32>>,
    pub masked_positions: Vec<usize>,
    pub masked_labels: Vec<TokenId>,
    pub masked_actions: Vec<MaskAction>,
    /// True when segment B was sampled from another document.
    #[serde(rename = "nsp_label")]
    pub next_is_random: bool,
    pub copy: usize,
}

impl MlmInstance {
    pub fn maskable_count(&self) -> usize {
        self.word_ids.iter().filter(|w| w.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCorruptionInstance {
    pub input_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
}

/// A sentence's tokens with document-local word numbers.
#[derive(Debug, Clone)]
struct Segment {
    ids: Vec<TokenId>,
    words: Vec<usize>,
}

fn tokenize_docs(docs: &[Document], model: &BbpeModel) -> Vec<Vec<Segment>> {
    docs.par_iter()
        .map(|doc| {
            let mut word_base = 0;
            doc.sentences
                .iter()
                .filter_map(|s| {
                    let t = model.encode(s.text());
                    if t.ids.is_empty() {
                        return None;
                    }
                    let words: Vec<usize> = t.word_boundaries.iter().map(|w| w + word_base).collect();
                    word_base = words.last().unwrap() + 1;
                    Some(Segment { ids: t.ids, words })
                })
                .collect::<Vec<_>>()
        })
        .filter(|segments: &Vec<Segment>| !segments.is_empty())
        .collect()
}

/// Packed MLM input before masking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub input_ids: Vec<TokenId>,
    pub segment_ids: Vec<u8>,
    pub word_ids: Vec<Option<u32>>,
    pub next_is_random: bool,
}

type Tok = (TokenId, (usize, usize));

fn flatten(segments: &[Segment], tag: usize) -> Vec<Tok> {
    segments.iter().flat_map(|s| s.ids.iter().zip(&s.words).map(move |(&id, &w)| (id, (tag, w)))).collect()
}

fn truncate_pair(a: &mut Vec<Tok>, b: &mut Vec<Tok>, max_tokens: usize, rng: &mut ChaCha8Rng) {
    while a.len() + b.len() > max_tokens {
        let longer = if a.len() > b.len() { &mut *a } else { &mut *b };
        if rng.random_bool(0.5) {
            longer.remove(0);
        } else {
            longer.pop();
        }
    }
}

fn assemble(a: &[Tok], b: &[Tok], next_is_random: bool) -> PackedSequence {
    let mut seq = PackedSequence {
        input_ids: Vec::with_capacity(a.len() + b.len() + 3),
        segment_ids: Vec::with_capacity(a.len() + b.len() + 3),
        word_ids: Vec::with_capacity(a.len() + b.len() + 3),
        next_is_random,
    };
    let mut next_word = 0u32;
    let mut last_key = None;
    let push_special = |seq: &mut PackedSequence, id, segment| {
        seq.input_ids.push(id);
        seq.segment_ids.push(segment);
        seq.word_ids.push(None);
    };
    push_special(&mut seq, CLS, 0);
    for (segment, part) in [(0u8, a), (1u8, b)] {
        if segment == 1 && part.is_empty() {
            continue;
        }
        for &(id, key) in part {
            let key = (segment, key);
            if last_key != Some(key) {
                if last_key.is_some() {
                    next_word += 1;
                }
                last_key = Some(key);
            }
            seq.input_ids.push(id);
            seq.segment_ids.push(segment);
            seq.word_ids.push(Some(next_word));
        }
        push_special(&mut seq, SEP, segment);
    }
    seq
}

fn pack_document(docs: &[Vec<Segment>], doc_index: usize, cfg: &MaskingConfig) -> Vec<PackedSequence> {
    let mut rng = stream_rng(cfg.seed, PURPOSE_PACK, doc_index as u64);
    let document = &docs[doc_index];
    let max_tokens = cfg.max_seq - 3;
    let mut out = Vec::new();
    let mut chunk: Vec<&Segment> = Vec::new();
    let mut chunk_len = 0;
    let mut i = 0;
    while i < document.len() {
        chunk.push(&document[i]);
        chunk_len += document[i].ids.len();
        if i == document.len() - 1 || chunk_len >= max_tokens {
            let a_end = if chunk.len() >= 2 { rng.random_range(1..chunk.len()) } else { 1 };
            let seg_a: Vec<Segment> = chunk[..a_end].iter().map(|s| (*s).clone()).collect();
            let mut a = flatten(&seg_a, doc_index);

            let can_sample = docs.len() > 1;
            let random_next = can_sample && (chunk.len() == 1 || rng.random_bool(0.5));
            let mut b = if random_next {
                let target_b = max_tokens.saturating_sub(a.len()).max(1);
                let mut other = rng.random_range(0..docs.len() - 1);
                if other >= doc_index {
                    other += 1;
                }
                let start = rng.random_range(0..docs[other].len());
                let mut segs = Vec::new();
                let mut len = 0;
                for s in &docs[other][start..] {
                    segs.push(s.clone());
                    len += s.ids.len();
                    if len >= target_b {
                        break;
                    }
                }
                // the unused segments of this chunk go back to the queue
                i -= chunk.len() - a_end;
                flatten(&segs, docs.len() + other)
            } else {
                let seg_b: Vec<Segment> = chunk[a_end..].iter().map(|s| (*s).clone()).collect();
                flatten(&seg_b, doc_index)
            };
            truncate_pair(&mut a, &mut b, max_tokens, &mut rng);
            if !a.is_empty() {
                out.push(assemble(&a, &b, random_next));
            }
            chunk.clear();
            chunk_len = 0;
        }
        i += 1;
    }
    out
}

/// Packs documents into sentence-pair sequences. Positive pairs continue
/// the same document; when more than one document exists, half of the
/// pairs (and every single-sentence chunk) take segment B from another
/// document.
pub fn pack_sequences(docs: &[Document], model: &BbpeModel, cfg: &MaskingConfig) -> Vec<PackedSequence> {
    let tokenized = tokenize_docs(docs, model);
    (0..tokenized.len()).into_par_iter().flat_map_iter(|d| pack_document(&tokenized, d, cfg)).collect()
}

fn masked_target(maskable: usize, mask_prob: f64) -> usize {
    if maskable == 0 || mask_prob <= 0.0 {
        return 0;
    }
    ((mask_prob * maskable as f64 + 0.5).floor() as usize).clamp(1, maskable)
}

/// Whole-word masking of one packed sequence.
pub fn mask_sequence(
    seq: &PackedSequence,
    model: &BbpeModel,
    cfg: &MaskingConfig,
    rng: &mut ChaCha8Rng,
) -> MlmInstance {
    let mut words: Vec<Vec<usize>> = Vec::new();
    for (pos, w) in seq.word_ids.iter().enumerate() {
        if let Some(w) = *w {
            let w = w as usize;
            if words.len() <= w {
                words.resize(w + 1, Vec::new());
            }
            words[w].push(pos);
        }
    }
    words.retain(|w| !w.is_empty());
    let maskable: usize = words.iter().map(Vec::len).sum();
    let target = masked_target(maskable, cfg.mask_prob);

    let mut order: Vec<usize> = (0..words.len()).collect();
    order.shuffle(rng);
    let mut selected = Vec::new();
    let mut count = 0;
    for &w in &order {
        if count >= target {
            break;
        }
        if count + words[w].len() > target {
            continue;
        }
        count += words[w].len();
        selected.push(w);
    }
    if selected.is_empty() && target > 0 {
        selected.push(order[0]);
    }

    let mut input_ids = seq.input_ids.clone();
    let mut masked: Vec<(usize, TokenId, MaskAction)> = Vec::new();
    let vocab = model.len() as TokenId;
    for w in selected {
        let u: f64 = rng.random();
        let action = if u < cfg.mask_token_frac {
            MaskAction::Mask
        } else if u < cfg.mask_token_frac + cfg.random_frac {
            MaskAction::Random
        } else {
            MaskAction::Keep
        };
        for &pos in &words[w] {
            masked.push((pos, input_ids[pos], action));
            match action {
                MaskAction::Mask => input_ids[pos] = MASK,
                MaskAction::Random => input_ids[pos] = rng.random_range(NUM_SPECIALS as TokenId..vocab),
                MaskAction::Keep => {}
            }
        }
    }
    masked.sort_unstable_by_key(|m| m.0);
    MlmInstance {
        input_ids,
        segment_ids: seq.segment_ids.clone(),
        word_ids: seq.word_ids.clone(),
        masked_positions: masked.iter().map(|m| m.0).collect(),
        masked_labels: masked.iter().map(|m| m.1).collect(),
        masked_actions: masked.iter().map(|m| m.2).collect(),
        next_is_random: seq.next_is_random,
        copy: 0,
    }
}

/// Masks pre-packed sequences `duplication_factor` times; copies are
/// emitted one after another.
pub fn mask_packed(packed: &[PackedSequence], model: &BbpeModel, cfg: &MaskingConfig) -> Vec<MlmInstance> {
    (0..cfg.duplication_factor)
        .flat_map(|copy| {
            let seed = cfg.seed.wrapping_add(copy as u64);
            packed
                .par_iter()
                .enumerate()
                .map(|(i, seq)| {
                    let mut rng = stream_rng(seed, PURPOSE_MASK, i as u64);
                    MlmInstance { copy, ..mask_sequence(seq, model, cfg, &mut rng) }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn make_mlm_instances(docs: &[Document], model: &BbpeModel, cfg: &MaskingConfig) -> Result<Vec<MlmInstance>> {
    cfg.validate()?;
    let packed = pack_sequences(docs, model, cfg);
    Ok(mask_packed(&packed, model, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingStats {
    pub instances: usize,
    pub maskable_tokens: usize,
    pub masked_tokens: usize,
    pub masked_fraction: f64,
    pub mask_fraction: f64,
    pub random_fraction: f64,
    pub keep_fraction: f64,
}

/// Masked share of maskable tokens and the per-token action split.
pub fn masking_stats<'a, I>(instances: I) -> Result<MaskingStats>
where
    I: IntoIterator<Item = &'a MlmInstance>,
{
    let mut n = 0;
    let (mut maskable, mut masked) = (0usize, 0usize);
    let mut actions = [0usize; 3];
    for inst in instances {
        n += 1;
        maskable += inst.maskable_count();
        masked += inst.masked_positions.len();
        for a in &inst.masked_actions {
            actions[*a as usize] += 1;
        }
    }
    if n == 0 {
        return Err(Error::Config("masking_stats needs at least one instance".into()));
    }
    let frac = |x: usize, d: usize| if d == 0 { 0.0 } else { x as f64 / d as f64 };
    Ok(MaskingStats {
        instances: n,
        maskable_tokens: maskable,
        masked_tokens: masked,
        masked_fraction: frac(masked, maskable),
        mask_fraction: frac(actions[0], masked),
        random_fraction: frac(actions[1], masked),
        keep_fraction: frac(actions[2], masked),
    })
}

/// `(noise tokens, spans)` for a chunk of `len` tokens.
pub fn span_counts(len: usize, mask_prob: f64, mean_span: f64) -> (usize, usize) {
    if len < 2 || mask_prob <= 0.0 {
        return (0, 0);
    }
    let noise = ((len as f64 * mask_prob + 0.5).floor() as usize).clamp(1, len - 1);
    let spans = ((noise as f64 / mean_span + 0.5).floor() as usize).clamp(1, noise.min(len - noise));
    (noise, spans)
}

/// Longest chunk whose corrupted input and target fit the length caps.
pub fn raw_chunk_len(cfg: &MaskingConfig) -> usize {
    let fits = |len: usize| {
        let (noise, spans) = span_counts(len, cfg.mask_prob, cfg.mean_span);
        len - noise + spans <= cfg.encoder_len && noise + spans <= cfg.decoder_len && spans <= NUM_SENTINELS
    };
    let mut best = 1;
    for len in 1..=cfg.encoder_len * 4 {
        if fits(len) {
            best = len;
        }
    }
    best
}

/// Uniform random split of `total` items into `parts` non-empty runs.
fn random_partition(total: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = index::sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut lens = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        lens.push(c - prev);
        prev = c;
    }
    lens
}

/// Noise mask with exactly `span_counts(len)` noisy tokens in that many
/// spans; the sequence always starts with a clean run.
pub fn random_spans_noise_mask(len: usize, mask_prob: f64, mean_span: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let (noise, spans) = span_counts(len, mask_prob, mean_span);
    if spans == 0 {
        return vec![false; len];
    }
    let noise_lens = random_partition(noise, spans, rng);
    let clean_lens = random_partition(len - noise, spans, rng);
    let mut mask = Vec::with_capacity(len);
    for (clean, noisy) in clean_lens.into_iter().zip(noise_lens) {
        mask.extend(std::iter::repeat_n(false, clean));
        mask.extend(std::iter::repeat_n(true, noisy));
    }
    mask
}

/// Replaces every run of masked tokens with the next sentinel; the target
/// lists each sentinel followed by the tokens it replaced.
///
/// # Panics
///
/// If `noise` has more than [`NUM_SENTINELS`] runs or the lengths differ.
pub fn corrupt_spans(tokens: &[TokenId], noise: &[bool]) -> SpanCorruptionInstance {
    assert_eq!(tokens.len(), noise.len());
    let mut input_ids = Vec::with_capacity(tokens.len());
    let mut target_ids = Vec::new();
    let mut span = 0;
    for (i, (&tok, &is_noise)) in tokens.iter().zip(noise).enumerate() {
        if is_noise {
            if i == 0 || !noise[i - 1] {
                let s = bbpe::sentinel(span);
                span += 1;
                input_ids.push(s);
                target_ids.push(s);
            }
            target_ids.push(tok);
        } else {
            input_ids.push(tok);
        }
    }
    SpanCorruptionInstance { input_ids, target_ids }
}

fn corrupt_chunk(chunk: &[TokenId], cfg: &MaskingConfig, rng: &mut ChaCha8Rng, out: &mut Vec<SpanCorruptionInstance>) {
    let mask = random_spans_noise_mask(chunk.len(), cfg.mask_prob, cfg.mean_span, rng);
    let spans = mask.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(mask.first() == Some(&true));
    let inst = corrupt_spans(chunk, &mask);
    if inst.input_ids.len() <= cfg.encoder_len && inst.target_ids.len() <= cfg.decoder_len && spans <= NUM_SENTINELS {
        out.push(inst);
    } else {
        // never truncate a target; split the chunk and redraw instead
        let mid = chunk.len() / 2;
        corrupt_chunk(&chunk[..mid], cfg, rng, out);
        corrupt_chunk(&chunk[mid..], cfg, rng, out);
    }
}

/// Span-corruption instances; each document's tokens are chunked
/// independently and chunk `i` (in corpus order) uses its own random stream.
pub fn make_t5_instances(
    docs: &[Document],
    model: &BbpeModel,
    cfg: &MaskingConfig,
) -> Result<Vec<SpanCorruptionInstance>> {
    cfg.validate()?;
    let chunk_len = raw_chunk_len(cfg);
    let chunks: Vec<Vec<TokenId>> = docs
        .par_iter()
        .map(|doc| doc.sentences.iter().flat_map(|s| model.encode(s.text()).ids).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .into_iter()
        .flat_map(|ids| ids.chunks(chunk_len).map(<[TokenId]>::to_vec).collect::<Vec<_>>())
        .collect();
    Ok(chunks
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, chunk)| {
            let mut rng = stream_rng(cfg.seed, PURPOSE_SPAN, i as u64);
            let mut out = Vec::new();
            corrupt_chunk(chunk, cfg, &mut rng, &mut out);
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbpe::{sentinel, train_bbpe, MIN_VOCAB};
    use crate::corpus::Source;

    fn model() -> BbpeModel {
        BbpeModel::byte_level(MIN_VOCAB).unwrap()
    }

    fn seq_of(words: &[usize]) -> PackedSequence {
        // each entry is a word's sub-token count
        let mut seq =
            PackedSequence { input_ids: vec![CLS], segment_ids: vec![0], word_ids: vec![None], next_is_random: false };
        for (w, &n) in words.iter().enumerate() {
            for _ in 0..n {
                seq.input_ids.push(200 + w as TokenId);
                seq.segment_ids.push(0);
                seq.word_ids.push(Some(w as u32));
            }
        }
        seq.input_ids.push(SEP);
        seq.segment_ids.push(0);
        seq.word_ids.push(None);
        seq
    }

    #[test]
    fn twenty_tokens_mask_three() {
        let seq = seq_of(&[1; 20]);
        let cfg = MaskingConfig::default();
        for seed in 0..20 {
            let inst = mask_sequence(&seq, &model(), &cfg, &mut stream_rng(seed, 0, 0));
            assert_eq!(inst.masked_positions.len(), 3);
            assert!(inst.masked_positions.windows(2).all(|w| w[0] < w[1]));
            assert!(!inst.masked_positions.contains(&0));
            assert!(!inst.masked_positions.contains(&21));
        }
    }

    #[test]
    fn masking_is_whole_word() {
        let seq = seq_of(&[3, 1, 2, 4, 1, 2, 2, 3, 1, 1, 2]);
        let cfg = MaskingConfig::default();
        for seed in 0..50 {
            let inst = mask_sequence(&seq, &model(), &cfg, &mut stream_rng(seed, 0, 0));
            for &p in &inst.masked_positions {
                let w = inst.word_ids[p];
                let all: Vec<usize> = (0..inst.word_ids.len()).filter(|&q| inst.word_ids[q] == w).collect();
                assert!(all.iter().all(|q| inst.masked_positions.contains(q)));
            }
            // actions agree within a word
            for (i, &p) in inst.masked_positions.iter().enumerate() {
                for (j, &q) in inst.masked_positions.iter().enumerate() {
                    if inst.word_ids[p] == inst.word_ids[q] {
                        assert_eq!(inst.masked_actions[i], inst.masked_actions[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn labels_recover_original() {
        let seq = seq_of(&[2, 1, 3, 1, 1, 2, 1, 1, 1, 1, 1, 1, 2]);
        let cfg = MaskingConfig::default();
        let inst = mask_sequence(&seq, &model(), &cfg, &mut stream_rng(7, 0, 0));
        let mut restored = inst.input_ids.clone();
        for (p, l) in inst.masked_positions.iter().zip(&inst.masked_labels) {
            restored[*p] = *l;
        }
        assert_eq!(restored, seq.input_ids);
    }

    #[test]
    fn all_keep_never_emits_mask() {
        let cfg = MaskingConfig { mask_token_frac: 0.0, random_frac: 0.0, keep_frac: 1.0, ..Default::default() };
        let seq = seq_of(&[1; 40]);
        for seed in 0..20 {
            let inst = mask_sequence(&seq, &model(), &cfg, &mut stream_rng(seed, 0, 0));
            assert!(!inst.input_ids.contains(&MASK));
            assert_eq!(inst.input_ids, seq.input_ids);
            assert!(!inst.masked_positions.is_empty());
        }
    }

    #[test]
    fn random_replacements_are_non_special() {
        let cfg = MaskingConfig { mask_token_frac: 0.0, random_frac: 1.0, keep_frac: 0.0, ..Default::default() };
        let seq = seq_of(&[1; 100]);
        let inst = mask_sequence(&seq, &model(), &cfg, &mut stream_rng(3, 0, 0));
        for &p in &inst.masked_positions {
            assert!(inst.input_ids[p] as usize >= NUM_SPECIALS);
        }
    }

    #[test]
    fn masked_target_rounding() {
        assert_eq!(masked_target(20, 0.15), 3);
        assert_eq!(masked_target(10, 0.15), 2); // 1.5 rounds half up
        assert_eq!(masked_target(3, 0.15), 1);
        assert_eq!(masked_target(0, 0.15), 0);
        assert_eq!(masked_target(50, 0.0), 0);
    }

    fn docs() -> Vec<Document> {
        let texts = [
            "الجملة الاولى في المستند الاول. الجملة الثانية هنا. والثالثة ايضا في النص",
            "مستند ثان يحتوي على كلام مختلف. وجملة اخرى بعدها. ثم النهاية",
            "ثالث المستندات قصير. لكنه مفيد",
        ];
        texts.iter().enumerate().map(|(i, t)| Document::from_text(format!("d{i}"), Source::Wiki, t)).collect()
    }

    #[test]
    fn duplication_and_determinism() {
        let docs = docs();
        let model = train_bbpe(&docs, MIN_VOCAB + 50).unwrap();
        let cfg = MaskingConfig { max_seq: 32, ..Default::default() };
        let packed = pack_sequences(&docs, &model, &cfg);
        let a = make_mlm_instances(&docs, &model, &cfg).unwrap();
        let b = make_mlm_instances(&docs, &model, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3 * packed.len());
        let n = packed.len();
        for i in 0..n {
            for k in 0..3 {
                let inst = &a[k * n + i];
                assert_eq!(inst.copy, k);
                let mut restored = inst.input_ids.clone();
                for (p, l) in inst.masked_positions.iter().zip(&inst.masked_labels) {
                    restored[*p] = *l;
                }
                assert_eq!(restored, packed[i].input_ids);
            }
        }
        for inst in &a {
            assert!(inst.input_ids.len() <= 32);
        }
    }

    #[test]
    fn span_counts_for_default_limits() {
        let cfg = MaskingConfig::default();
        let len = raw_chunk_len(&cfg);
        let (noise, spans) = span_counts(len, 0.15, 3.0);
        assert!(len - noise + spans <= 512);
        assert!(noise + spans <= 114);
        let (n2, s2) = span_counts(len + 1, 0.15, 3.0);
        assert!(len + 1 - n2 + s2 > 512 || n2 + s2 > 114);
    }

    #[test]
    fn hand_built_span_example() {
        let tokens: Vec<TokenId> = (0..12).map(|t| 300 + t).collect();
        let mut noise = vec![false; 12];
        noise[3] = true;
        noise[4] = true;
        noise[9] = true;
        let inst = corrupt_spans(&tokens, &noise);
        assert_eq!(inst.input_ids[3], sentinel(0));
        assert_eq!(inst.input_ids[8], sentinel(1));
        assert_eq!(inst.input_ids.len(), 11);
        assert_eq!(inst.target_ids, vec![sentinel(0), 303, 304, sentinel(1), 309]);
    }

    #[test]
    fn zero_mask_prob_leaves_input() {
        let docs = docs();
        let model = train_bbpe(&docs, MIN_VOCAB + 20).unwrap();
        let cfg = MaskingConfig { mask_prob: 0.0, ..Default::default() };
        for inst in make_t5_instances(&docs, &model, &cfg).unwrap() {
            assert!(inst.target_ids.is_empty());
            assert!(inst.input_ids.iter().all(|&t| !bbpe::is_special(t)));
        }
    }

    #[test]
    fn noise_mask_geometry() {
        let mut rng = stream_rng(1, 2, 3);
        for len in [2usize, 5, 17, 100, 569] {
            let mask = random_spans_noise_mask(len, 0.15, 3.0, &mut rng);
            let (noise, spans) = span_counts(len, 0.15, 3.0);
            assert_eq!(mask.len(), len);
            assert_eq!(mask.iter().filter(|&&m| m).count(), noise);
            let starts = mask.windows(2).filter(|w| !w[0] && w[1]).count();
            assert_eq!(starts, spans);
            assert!(!mask[0]);
        }
    }

    #[test]
    fn stats_require_instances() {
        assert!(masking_stats(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MaskingConfig::default().validate().is_ok());
        assert!(MaskingConfig { keep_frac: 0.2, ..Default::default() }.validate().is_err());
        assert!(MaskingConfig { duplication_factor: 0, ..Default::default() }.validate().is_err());
        assert!(MaskingConfig { mean_span: 0.5, ..Default::default() }.validate().is_err());
    }
}
