//! Evaluation metrics.
//!
//! Conventions: a class with no gold and no predicted instances has F1 0
//! and still counts in the macro average; a Jaccard sample whose gold and
//! predicted sets are both empty scores 1. BLEU and ROUGE operate on
//! whitespace words, so Arabic text is scored exactly like any other
//! script.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no samples to score")]
    Empty,
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("pearson correlation needs at least two samples")]
    TooFewSamples,
    #[error("pearson correlation is undefined for constant input")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
}

fn check_lengths(gold: usize, pred: usize) -> Result<(), MetricError> {
    if gold != pred {
        return Err(MetricError::LengthMismatch { gold, pred });
    }
    if gold == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64, MetricError> {
    check_lengths(gold.len(), pred.len())?;
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Unweighted mean of per-class F1 over `0..n_classes`.
pub fn f1_macro(gold: &[usize], pred: &[usize], n_classes: usize) -> Result<f64, MetricError> {
    check_lengths(gold.len(), pred.len())?;
    if let Some(&label) = gold.iter().chain(pred).find(|&&l| l >= n_classes) {
        return Err(MetricError::LabelOutOfRange { label, classes: n_classes });
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let sum: f64 = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(sum / n_classes as f64)
}

/// Sample-averaged Jaccard index of label sets.
pub fn jaccard_multilabel<T: Ord>(gold: &[BTreeSet<T>], pred: &[BTreeSet<T>]) -> Result<f64, MetricError> {
    check_lengths(gold.len(), pred.len())?;
    let total: f64 = gold
        .iter()
        .zip(pred)
        .map(|(g, p)| {
            let union = g.union(p).count();
            if union == 0 {
                1.0
            } else {
                g.intersection(p).count() as f64 / union as f64
            }
        })
        .sum();
    Ok(total / gold.len() as f64)
}

pub fn pearson(gold: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.len() < 2 {
        return Err(MetricError::TooFewSamples);
    }
    let n = gold.len() as f64;
    let mg = gold.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&g, &p) in gold.iter().zip(pred) {
        let (dg, dp) = (g - mg, p - mp);
        sxy += dg * dp;
        sxx += dg * dg;
        syy += dp * dp;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn ngram_counts<T: Hash + Eq>(words: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if words.len() >= n {
        for gram in words.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

fn clipped_overlap<T: Hash + Eq>(reference: &[T], hypothesis: &[T], n: usize) -> (usize, usize) {
    let r = ngram_counts(reference, n);
    let h = ngram_counts(hypothesis, n);
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, hypothesis.len().saturating_sub(n - 1))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuOptions {
    /// Add one to numerator and denominator of the 2- to 4-gram precisions.
    pub add_one_smoothing: bool,
}

/// Corpus BLEU-4 on a 0–100 scale: uniform weights, clipped counts against
/// one reference per hypothesis, standard brevity penalty.
pub fn bleu<T: Hash + Eq>(references: &[Vec<T>], hypotheses: &[Vec<T>], opts: BleuOptions) -> Result<f64, MetricError> {
    check_lengths(references.len(), hypotheses.len())?;
    let mut matched = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut ref_len, mut hyp_len) = (0usize, 0usize);
    for (r, h) in references.iter().zip(hypotheses) {
        ref_len += r.len();
        hyp_len += h.len();
        for n in 1..=4 {
            let (m, t) = clipped_overlap(r, h, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let (m, t) =
            if opts.add_one_smoothing && n > 0 { (matched[n] + 1, totals[n] + 1) } else { (matched[n], totals[n]) };
        if m == 0 || t == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok((100.0 * bp * (log_sum / 4.0).exp()).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

fn f_measure(overlap: usize, ref_total: usize, hyp_total: usize) -> f64 {
    if overlap == 0 || ref_total == 0 || hyp_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn rouge_n<T: Hash + Eq>(reference: &[T], hypothesis: &[T], n: usize) -> f64 {
    let ref_total = reference.len().saturating_sub(n - 1);
    let (overlap, hyp_total) = clipped_overlap(reference, hypothesis, n);
    if ref_total == 0 && hyp_total == 0 {
        return if reference == hypothesis { 1.0 } else { 0.0 };
    }
    f_measure(overlap, ref_total, hyp_total)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-1/2/L F-measures over word sequences.
pub fn rouge<T: Hash + Eq>(reference: &[T], hypothesis: &[T]) -> RougeScores {
    let rouge_l = if reference.is_empty() && hypothesis.is_empty() {
        1.0
    } else {
        f_measure(lcs_len(reference, hypothesis), reference.len(), hypothesis.len())
    };
    RougeScores { rouge1: rouge_n(reference, hypothesis, 1), rouge2: rouge_n(reference, hypothesis, 2), rouge_l }
}

/// Whitespace tokenization; every script passes through unchanged.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
