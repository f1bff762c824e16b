//! Central finite-difference verification of [`compose_backward`].
//!
//! The numeric side only ever calls the forward pass, so it stays an
//! independent check of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    compose_backward, forward_with_cache, CharComposerConfig, CharComposerParams, ComposerError, ConvSpec, LinearSpec,
    WordBatch, PAD_CHAR, TENSOR_NAMES,
};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Lower bound on the relative-error denominator; central differences at
/// step 1e-5 carry roughly 1e-11 of rounding noise.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

fn loss(params: &CharComposerParams, batch: &WordBatch, window: usize, upstream: &Array2<f64>) -> f64 {
    let (out, _) = forward_with_cache(params, batch, window).expect("batch validated");
    (&out * upstream).sum()
}

/// Compares every analytic gradient coordinate with a central difference.
pub fn check_gradients(
    params: &CharComposerParams,
    batch: &WordBatch,
    pool_window: usize,
    upstream: &Array2<f64>,
    step: f64,
) -> Result<GradCheck, ComposerError> {
    let (_, cache) = forward_with_cache(params, batch, pool_window)?;
    let grads = compose_backward(params, batch, &cache, upstream)?;
    let analytic = grads.to_flat();

    let mut probe = params.clone();
    let mut result = GradCheck { coordinates: 0, max_rel_error: 0.0, max_abs_error: 0.0, worst: None };
    let mut offset = 0;
    for (tensor, name) in TENSOR_NAMES.iter().enumerate() {
        let len = probe.tensors_mut()[tensor].len();
        for i in 0..len {
            let original = probe.tensors_mut()[tensor][i];
            probe.tensors_mut()[tensor][i] = original + step;
            let plus = loss(&probe, batch, pool_window, upstream);
            probe.tensors_mut()[tensor][i] = original - step;
            let minus = loss(&probe, batch, pool_window, upstream);
            probe.tensors_mut()[tensor][i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[offset + i];
            let rel = relative_error(a, numeric);
            result.max_abs_error = result.max_abs_error.max((a - numeric).abs());
            if rel > result.max_rel_error || result.worst.is_none() {
                result.max_rel_error = result.max_rel_error.max(rel);
                result.worst = Some(((*name).to_owned(), i));
            }
            result.coordinates += 1;
        }
        offset += len;
    }
    Ok(result)
}

/// A small random architecture for gradient checking.
pub fn random_small_config(seed: u64) -> CharComposerConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let odd = |rng: &mut ChaCha8Rng| [1usize, 3, 5][rng.random_range(0..3)];
    let char_dim = rng.random_range(2..=4);
    let c1 = rng.random_range(2..=4);
    let c2 = rng.random_range(2..=4);
    let max_chars = rng.random_range(4..=8);
    CharComposerConfig {
        char_vocab: rng.random_range(5..=9),
        char_dim,
        max_chars,
        conv1: ConvSpec { in_channels: char_dim, out_channels: c1, kernel: odd(&mut rng) },
        pool_window: rng.random_range(2..=3),
        conv2: ConvSpec { in_channels: c1, out_channels: c2, kernel: odd(&mut rng) },
        proj: LinearSpec { in_features: c2, out_features: rng.random_range(2..=4) },
    }
}

/// Random words (1..=max_chars real characters, PAD-padded) with one to
/// three sub-tokens each.
pub fn random_batch(cfg: &CharComposerConfig, rng: &mut ChaCha8Rng) -> WordBatch {
    let n_words = rng.random_range(2..=4);
    let mut words = Vec::with_capacity(n_words);
    let mut subtoken_map = Vec::new();
    for w in 0..n_words {
        let len = rng.random_range(1..=cfg.max_chars);
        let mut chars: Vec<u32> = (0..len).map(|_| rng.random_range(1..cfg.char_vocab as u32)).collect();
        chars.resize(cfg.max_chars, PAD_CHAR);
        words.push(chars);
        for _ in 0..rng.random_range(1..=3) {
            subtoken_map.push(w);
        }
    }
    WordBatch { words, subtoken_map }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub configs: usize,
    pub seeds: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Runs the check for `seeds` random parameter/batch draws on each of
/// `configs` random small architectures.
pub fn verification_suite(configs: usize, seeds: u64) -> Result<SuiteReport, ComposerError> {
    let mut report = SuiteReport { configs, seeds: seeds as usize, coordinates: 0, max_rel_error: 0.0, passed: true };
    for c in 0..configs {
        let cfg = random_small_config(c as u64);
        cfg.validate()?;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(c as u64));
            let params = CharComposerParams::random(&cfg, rng.random(), 0.5);
            let batch = random_batch(&cfg, &mut rng);
            let upstream = Array2::from_shape_fn((batch.subtoken_map.len(), cfg.proj.out_features), |_| {
                rng.random_range(-1.0..1.0)
            });
            let check = check_gradients(&params, &batch, cfg.pool_window, &upstream, DEFAULT_STEP)?;
            report.coordinates += check.coordinates;
            report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        }
    }
    report.passed = report.max_rel_error <= TOLERANCE;
    Ok(report)
}
