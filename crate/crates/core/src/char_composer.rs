//! Character-level word representations added to transformer inputs.
//!
//! For each word: character embeddings → same-padded 1-D convolution with
//! ReLU → non-overlapping max-pool → second convolution with ReLU → global
//! max-pool → affine projection. Every sub-token of a word receives the
//! word's vector. PAD characters contribute zero input to the convolutions
//! and are excluded from both max-pools.
//!
//! [`compose_backward`] returns exact reverse-mode gradients;
//! [`gradcheck`] compares them to central finite differences.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayViewMut1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub mod gradcheck;

pub const PAD_CHAR: u32 = 0;
pub const UNK_CHAR: u32 = 1;

#[derive(Debug, Error)]
pub enum ComposerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("character id {id} out of range for vocabulary of {vocab}")]
    CharOutOfRange { id: u32, vocab: usize },
    #[error("invalid composer config: {0}")]
    Config(String),
    #[error("character vocabulary corpus is empty")]
    EmptyCorpus,
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharComposerConfig {
    pub char_vocab: usize,
    pub char_dim: usize,
    pub max_chars: usize,
    pub conv1: ConvSpec,
    pub pool_window: usize,
    pub conv2: ConvSpec,
    pub proj: LinearSpec,
}

impl Default for CharComposerConfig {
    fn default() -> Self {
        CharComposerConfig {
            char_vocab: 160,
            char_dim: 768,
            max_chars: 10,
            conv1: ConvSpec { in_channels: 768, out_channels: 348, kernel: 3 },
            pool_window: 5,
            conv2: ConvSpec { in_channels: 348, out_channels: 348, kernel: 3 },
            proj: LinearSpec { in_features: 348, out_features: 768 },
        }
    }
}

impl CharComposerConfig {
    /// Positions left after the first pool (a trailing partial window counts).
    pub fn pooled_len(&self) -> usize {
        self.max_chars.div_ceil(self.pool_window)
    }

    pub fn validate(&self) -> Result<(), ComposerError> {
        let bad = |m: &str| Err(ComposerError::Config(m.to_owned()));
        let dims = [
            self.char_vocab,
            self.char_dim,
            self.max_chars,
            self.pool_window,
            self.conv1.out_channels,
            self.conv2.out_channels,
            self.proj.out_features,
        ];
        if dims.contains(&0) {
            return bad("all dimensions must be positive");
        }
        if self.char_vocab < 2 {
            return bad("char_vocab must reserve PAD and UNK");
        }
        if self.conv1.kernel.is_multiple_of(2) || self.conv2.kernel.is_multiple_of(2) {
            return bad("convolution kernels must be odd");
        }
        if self.pool_window > self.max_chars {
            return bad("pool window exceeds the character axis");
        }
        if self.conv1.in_channels != self.char_dim {
            return bad("conv1.in_channels must equal char_dim");
        }
        if self.conv2.in_channels != self.conv1.out_channels {
            return bad("conv2.in_channels must equal conv1.out_channels");
        }
        if self.proj.in_features != self.conv2.out_channels {
            return bad("proj.in_features must equal conv2.out_channels");
        }
        Ok(())
    }
}

/// Closed-form parameter count.
pub fn param_count(cfg: &CharComposerConfig) -> usize {
    let conv = |c: &ConvSpec| c.in_channels * c.kernel * c.out_channels + c.out_channels;
    cfg.char_vocab * cfg.char_dim
        + conv(&cfg.conv1)
        + conv(&cfg.conv2)
        + cfg.proj.in_features * cfg.proj.out_features
        + cfg.proj.out_features
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharComposerParams {
    pub char_embedding: Array2<f64>,
    pub conv1_weights: Array3<f64>,
    pub conv1_bias: Array1<f64>,
    pub conv2_weights: Array3<f64>,
    pub conv2_bias: Array1<f64>,
    pub proj_weights: Array2<f64>,
    pub proj_bias: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 7] =
    ["char_embedding", "conv1_weights", "conv1_bias", "conv2_weights", "conv2_bias", "proj_weights", "proj_bias"];

impl CharComposerParams {
    pub fn zeros(cfg: &CharComposerConfig) -> Self {
        CharComposerParams {
            char_embedding: Array2::zeros((cfg.char_vocab, cfg.char_dim)),
            conv1_weights: Array3::zeros((cfg.conv1.out_channels, cfg.conv1.in_channels, cfg.conv1.kernel)),
            conv1_bias: Array1::zeros(cfg.conv1.out_channels),
            conv2_weights: Array3::zeros((cfg.conv2.out_channels, cfg.conv2.in_channels, cfg.conv2.kernel)),
            conv2_bias: Array1::zeros(cfg.conv2.out_channels),
            proj_weights: Array2::zeros((cfg.proj.out_features, cfg.proj.in_features)),
            proj_bias: Array1::zeros(cfg.proj.out_features),
        }
    }

    /// Uniform values in `[-scale, scale]`.
    pub fn random(cfg: &CharComposerConfig, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(cfg);
        for mut t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn config_matches(&self, cfg: &CharComposerConfig) -> bool {
        let z = Self::zeros(cfg);
        self.shapes() == z.shapes()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            self.char_embedding.shape().to_vec(),
            self.conv1_weights.shape().to_vec(),
            self.conv1_bias.shape().to_vec(),
            self.conv2_weights.shape().to_vec(),
            self.conv2_bias.shape().to_vec(),
            self.proj_weights.shape().to_vec(),
            self.proj_bias.shape().to_vec(),
        ]
    }

    pub fn len(&self) -> usize {
        self.shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat mutable views in [`TENSOR_NAMES`] order.
    pub fn tensors_mut(&mut self) -> [ArrayViewMut1<'_, f64>; 7] {
        fn flat<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> ArrayViewMut1<'_, f64> {
            let n = a.len();
            a.view_mut().into_shape_with_order(n).expect("owned arrays are contiguous")
        }
        [
            flat(&mut self.char_embedding),
            flat(&mut self.conv1_weights),
            flat(&mut self.conv1_bias),
            flat(&mut self.conv2_weights),
            flat(&mut self.conv2_bias),
            flat(&mut self.proj_weights),
            flat(&mut self.proj_bias),
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut copy = self.clone();
        copy.tensors_mut().iter().flat_map(|t| t.iter().copied().collect::<Vec<_>>()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Binary layout: `u64` little-endian header length, a JSON header with
    /// the config and tensor shapes, then every value as `f64` LE in
    /// [`TENSOR_NAMES`] order.
    pub fn to_bytes(&self, cfg: &CharComposerConfig) -> Vec<u8> {
        let shapes: Vec<_> = TENSOR_NAMES
            .iter()
            .zip(self.shapes())
            .map(|(name, shape)| serde_json::json!({ "name": name, "shape": shape }))
            .collect();
        let header = serde_json::json!({ "format": "charcnn-params/1", "config": cfg, "tensors": shapes }).to_string();
        let values = self.to_flat();
        let mut out = Vec::with_capacity(8 + header.len() + values.len() * 8);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(CharComposerConfig, Self), ComposerError> {
        let fmt = |m: &str| ComposerError::Format(m.to_owned());
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| fmt("missing header length"))?.try_into().unwrap();
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header = bytes.get(8..8 + header_len).ok_or_else(|| fmt("truncated header"))?;
        #[derive(Deserialize)]
        struct Header {
            format: String,
            config: CharComposerConfig,
            tensors: Vec<TensorHeader>,
        }
        #[derive(Deserialize)]
        struct TensorHeader {
            name: String,
            shape: Vec<usize>,
        }
        let header: Header = serde_json::from_slice(header).map_err(|e| ComposerError::Format(e.to_string()))?;
        if header.format != "charcnn-params/1" {
            return Err(ComposerError::Format(format!("unsupported format {:?}", header.format)));
        }
        header.config.validate()?;
        let mut params = Self::zeros(&header.config);
        let expected = params.shapes();
        if header.tensors.len() != TENSOR_NAMES.len()
            || header.tensors.iter().zip(TENSOR_NAMES).zip(&expected).any(|((t, n), s)| t.name != n || &t.shape != s)
        {
            return Err(fmt("tensor shapes do not match the config"));
        }
        let body = &bytes[8 + header_len..];
        if body.len() != params.len() * 8 {
            return Err(fmt("value block has the wrong length"));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for mut t in params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = values.next().unwrap());
        }
        Ok((header.config, params))
    }

    pub fn save(&self, cfg: &CharComposerConfig, path: &Path) -> Result<(), ComposerError> {
        fs::write(path, self.to_bytes(cfg))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(CharComposerConfig, Self), ComposerError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Character id table: PAD, UNK, then the most frequent code points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    ids: HashMap<char, u32>,
}

impl CharVocab {
    /// Keeps the `size - 2` most frequent non-whitespace code points, ids by
    /// descending frequency then ascending code point.
    pub fn from_corpus<'a, I>(docs: I, size: usize) -> Result<Self, ComposerError>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        if size < 2 {
            return Err(ComposerError::Config("character vocabulary needs room for PAD and UNK".into()));
        }
        let mut counts: HashMap<char, u64> = HashMap::new();
        let mut any = false;
        for doc in docs {
            for s in &doc.sentences {
                any = true;
                for c in s.text().chars().filter(|c| !c.is_whitespace()) {
                    *counts.entry(c).or_default() += 1;
                }
            }
        }
        if !any {
            return Err(ComposerError::EmptyCorpus);
        }
        let mut ranked: Vec<(char, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(size - 2);
        let chars: Vec<char> = ranked.into_iter().map(|(c, _)| c).collect();
        let ids = chars.iter().enumerate().map(|(i, &c)| (c, i as u32 + 2)).collect();
        Ok(CharVocab { chars, ids })
    }

    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> u32 {
        self.ids.get(&c).copied().unwrap_or(UNK_CHAR)
    }

    pub fn char_of(&self, id: u32) -> Option<char> {
        (id as usize).checked_sub(2).and_then(|i| self.chars.get(i)).copied()
    }

    /// Truncates to `max_chars` and right-pads with PAD.
    pub fn encode_word(&self, word: &str, max_chars: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = word.chars().take(max_chars).map(|c| self.id(c)).collect();
        ids.resize(max_chars, PAD_CHAR);
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordBatch {
    pub words: Vec<Vec<u32>>,
    /// Word index of every sub-token.
    pub subtoken_map: Vec<usize>,
}

impl WordBatch {
    pub fn from_words(vocab: &CharVocab, words: &[&str], subtoken_map: Vec<usize>, max_chars: usize) -> Self {
        WordBatch { words: words.iter().map(|w| vocab.encode_word(w, max_chars)).collect(), subtoken_map }
    }

    pub fn validate(&self, cfg: &CharComposerConfig) -> Result<(), ComposerError> {
        for w in &self.words {
            if w.len() != cfg.max_chars {
                return Err(ComposerError::Shape(format!("word has {} chars, expected {}", w.len(), cfg.max_chars)));
            }
            if let Some(&id) = w.iter().find(|&&id| id as usize >= cfg.char_vocab) {
                return Err(ComposerError::CharOutOfRange { id, vocab: cfg.char_vocab });
            }
        }
        if let Some(&bad) = self.subtoken_map.iter().find(|&&w| w >= self.words.len()) {
            return Err(ComposerError::Shape(format!("sub-token maps to word {bad} of {}", self.words.len())));
        }
        Ok(())
    }
}

fn config_of(params: &CharComposerParams) -> CharComposerConfig {
    let (vocab, dim) = params.char_embedding.dim();
    let (o1, i1, k1) = params.conv1_weights.dim();
    let (o2, i2, k2) = params.conv2_weights.dim();
    let (po, pi) = params.proj_weights.dim();
    CharComposerConfig {
        char_vocab: vocab,
        char_dim: dim,
        max_chars: 0,
        conv1: ConvSpec { in_channels: i1, out_channels: o1, kernel: k1 },
        pool_window: 0,
        conv2: ConvSpec { in_channels: i2, out_channels: o2, kernel: k2 },
        proj: LinearSpec { in_features: pi, out_features: po },
    }
}

/// Same-padded 1-D convolution. `input` is (positions, in_channels).
fn conv1d(input: &Array2<f64>, weights: &Array3<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let (len, _) = input.dim();
    let (out_c, in_c, k) = weights.dim();
    let half = k / 2;
    let mut z = Array2::zeros((len, out_c));
    for t in 0..len {
        for o in 0..out_c {
            let mut acc = bias[o];
            for kk in 0..k {
                let src = t + kk;
                if src < half || src - half >= len {
                    continue;
                }
                let row = input.row(src - half);
                for i in 0..in_c {
                    acc += weights[[o, i, kk]] * row[i];
                }
            }
            z[[t, o]] = acc;
        }
    }
    z
}

/// Gradients of [`conv1d`] given `dz` (positions, out_channels).
fn conv1d_backward(
    input: &Array2<f64>,
    weights: &Array3<f64>,
    dz: &Array2<f64>,
    dw: &mut Array3<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    let (len, _) = input.dim();
    let (out_c, in_c, k) = weights.dim();
    let half = k / 2;
    let mut dx = Array2::zeros(input.dim());
    for t in 0..len {
        for o in 0..out_c {
            let g = dz[[t, o]];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            for kk in 0..k {
                let src = t + kk;
                if src < half || src - half >= len {
                    continue;
                }
                let s = src - half;
                for i in 0..in_c {
                    dw[[o, i, kk]] += g * input[[s, i]];
                    dx[[s, i]] += g * weights[[o, i, kk]];
                }
            }
        }
    }
    dx
}

#[derive(Debug, Clone)]
struct WordCache {
    chars: Vec<u32>,
    x0: Array2<f64>,
    z1: Array2<f64>,
    /// Argmax position of each pooled cell, `None` for all-PAD windows.
    arg1: Vec<Vec<Option<usize>>>,
    x1: Array2<f64>,
    z2: Array2<f64>,
    arg2: Vec<Option<usize>>,
    g: Array1<f64>,
}

/// Intermediate values retained for [`compose_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    words: Vec<WordCache>,
    pool_window: usize,
}

impl ForwardCache {
    pub fn pool_window(&self) -> usize {
        self.pool_window
    }
}

fn word_forward(params: &CharComposerParams, chars: &[u32], window: usize) -> WordCache {
    let len = chars.len();
    let dim = params.char_embedding.ncols();
    let mut x0 = Array2::zeros((len, dim));
    for (t, &c) in chars.iter().enumerate() {
        if c != PAD_CHAR {
            x0.row_mut(t).assign(&params.char_embedding.row(c as usize));
        }
    }
    let z1 = conv1d(&x0, &params.conv1_weights, &params.conv1_bias);
    let c1 = z1.ncols();
    let pooled = len.div_ceil(window);
    let mut x1 = Array2::zeros((pooled, c1));
    let mut arg1 = vec![vec![None; c1]; pooled];
    for j in 0..pooled {
        let positions: Vec<usize> =
            (j * window..((j + 1) * window).min(len)).filter(|&t| chars[t] != PAD_CHAR).collect();
        for o in 0..c1 {
            let mut best: Option<(usize, f64)> = None;
            for &t in &positions {
                let v = z1[[t, o]].max(0.0);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((t, v));
                }
            }
            if let Some((t, v)) = best {
                x1[[j, o]] = v;
                arg1[j][o] = Some(t);
            }
        }
    }
    let z2 = conv1d(&x1, &params.conv2_weights, &params.conv2_bias);
    let c2 = z2.ncols();
    let mut g = Array1::zeros(c2);
    let mut arg2 = vec![None; c2];
    for o in 0..c2 {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..pooled {
            if arg1[j].iter().all(Option::is_none) {
                continue;
            }
            let v = z2[[j, o]].max(0.0);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            g[o] = v;
            arg2[o] = Some(j);
        }
    }
    WordCache { chars: chars.to_vec(), x0, z1, arg1, x1, z2, arg2, g }
}

fn check_batch(params: &CharComposerParams, batch: &WordBatch, window: usize) -> Result<(), ComposerError> {
    let mut cfg = config_of(params);
    cfg.max_chars = batch.words.first().map_or(window, Vec::len);
    cfg.pool_window = window;
    batch.validate(&cfg)
}

/// Forward pass keeping the state needed for the backward pass. Returns one
/// row per sub-token.
pub fn forward_with_cache(
    params: &CharComposerParams,
    batch: &WordBatch,
    pool_window: usize,
) -> Result<(Array2<f64>, ForwardCache), ComposerError> {
    check_batch(params, batch, pool_window)?;
    let words: Vec<WordCache> = batch.words.iter().map(|w| word_forward(params, w, pool_window)).collect();
    let out_dim = params.proj_bias.len();
    let word_vecs: Vec<Array1<f64>> = words.iter().map(|w| params.proj_weights.dot(&w.g) + &params.proj_bias).collect();
    let mut out = Array2::zeros((batch.subtoken_map.len(), out_dim));
    for (row, &w) in batch.subtoken_map.iter().enumerate() {
        out.row_mut(row).assign(&word_vecs[w]);
    }
    Ok((out, ForwardCache { words, pool_window }))
}

pub fn compose_forward(
    params: &CharComposerParams,
    cfg: &CharComposerConfig,
    batch: &WordBatch,
) -> Result<Array2<f64>, ComposerError> {
    if !params.config_matches(cfg) {
        return Err(ComposerError::Shape("parameters do not match the config".into()));
    }
    batch.validate(cfg)?;
    Ok(forward_with_cache(params, batch, cfg.pool_window)?.0)
}

/// Reverse-mode gradients of `sum(upstream ⊙ forward(params, batch))` with
/// respect to every parameter.
pub fn compose_backward(
    params: &CharComposerParams,
    batch: &WordBatch,
    cache: &ForwardCache,
    upstream: &Array2<f64>,
) -> Result<CharComposerParams, ComposerError> {
    let out_dim = params.proj_bias.len();
    if upstream.dim() != (batch.subtoken_map.len(), out_dim) {
        return Err(ComposerError::Shape(format!(
            "upstream gradient is {:?}, expected ({}, {out_dim})",
            upstream.dim(),
            batch.subtoken_map.len()
        )));
    }
    if cache.words.len() != batch.words.len() || cache.words.iter().zip(&batch.words).any(|(c, w)| &c.chars != w) {
        return Err(ComposerError::Shape("forward cache does not belong to this batch".into()));
    }
    let cfg = config_of(params);
    let mut grads = CharComposerParams::zeros(&CharComposerConfig { max_chars: 1, pool_window: 1, ..cfg });

    let mut dy_words = Array2::<f64>::zeros((batch.words.len(), out_dim));
    for (row, &w) in batch.subtoken_map.iter().enumerate() {
        let mut target = dy_words.row_mut(w);
        target += &upstream.row(row);
    }

    for (w, cache_w) in cache.words.iter().enumerate() {
        let dy = dy_words.row(w);
        if dy.iter().all(|&v| v == 0.0) {
            continue;
        }
        // projection
        for o in 0..out_dim {
            grads.proj_bias[o] += dy[o];
            for i in 0..cache_w.g.len() {
                grads.proj_weights[[o, i]] += dy[o] * cache_w.g[i];
            }
        }
        let dg = params.proj_weights.t().dot(&dy);

        // global max-pool + ReLU of conv2
        let mut dz2 = Array2::zeros(cache_w.z2.dim());
        for (o, arg) in cache_w.arg2.iter().enumerate() {
            if let Some(j) = *arg {
                if cache_w.z2[[j, o]] > 0.0 {
                    dz2[[j, o]] += dg[o];
                }
            }
        }
        let dx1 =
            conv1d_backward(&cache_w.x1, &params.conv2_weights, &dz2, &mut grads.conv2_weights, &mut grads.conv2_bias);

        // first max-pool + ReLU of conv1
        let mut dz1 = Array2::zeros(cache_w.z1.dim());
        for (j, row) in cache_w.arg1.iter().enumerate() {
            for (o, arg) in row.iter().enumerate() {
                if let Some(t) = *arg {
                    if cache_w.z1[[t, o]] > 0.0 {
                        dz1[[t, o]] += dx1[[j, o]];
                    }
                }
            }
        }
        let dx0 =
            conv1d_backward(&cache_w.x0, &params.conv1_weights, &dz1, &mut grads.conv1_weights, &mut grads.conv1_bias);
        for (t, &c) in cache_w.chars.iter().enumerate() {
            if c != PAD_CHAR {
                let mut row = grads.char_embedding.row_mut(c as usize);
                row += &dx0.row(t);
            }
        }
    }
    Ok(grads)
}

/// Elementwise sum of the four input embeddings.
pub fn fuse_input(
    token: &Array2<f64>,
    segment: &Array2<f64>,
    position: &Array2<f64>,
    chars: &Array2<f64>,
) -> Result<Array2<f64>, ComposerError> {
    let dim = token.dim();
    for (name, a) in [("segment", segment), ("position", position), ("char", chars)] {
        if a.dim() != dim {
            return Err(ComposerError::Shape(format!(
                "{name} embeddings are {:?}, token embeddings are {dim:?}",
                a.dim()
            )));
        }
    }
    Ok(token + segment + position + chars)
}
