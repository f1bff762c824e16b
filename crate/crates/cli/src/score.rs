//! `score` subcommand: reads gold and predicted JSONL and applies a metric.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use anyhow::{anyhow, bail, Context};
use arprep::metrics::{self, BleuOptions, MetricResult};
use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Accuracy,
    F1Macro,
    Jaccard,
    Pearson,
    Bleu,
    Rouge,
}

/// One JSON value per non-blank line.
pub fn read_values<R: BufRead>(reader: R, what: &str) -> anyhow::Result<Vec<Value>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("reading {what}"))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).with_context(|| format!("{what} line {}", i + 1))?;
        out.push(v);
    }
    Ok(out)
}

fn label(v: &Value) -> anyhow::Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(_) | Value::Bool(_) => Ok(v.to_string()),
        other => bail!("expected a scalar label, got {other}"),
    }
}

fn label_set(v: &Value) -> anyhow::Result<BTreeSet<String>> {
    match v {
        Value::Array(items) => items.iter().map(label).collect(),
        other => bail!("expected an array of labels, got {other}"),
    }
}

fn number(v: &Value) -> anyhow::Result<f64> {
    v.as_f64().ok_or_else(|| anyhow!("expected a number, got {v}"))
}

fn text(v: &Value) -> anyhow::Result<Vec<String>> {
    match v {
        Value::String(s) => Ok(metrics::words(s).into_iter().map(str::to_owned).collect()),
        other => bail!("expected a string, got {other}"),
    }
}

fn map_all<T>(values: &[Value], f: fn(&Value) -> anyhow::Result<T>) -> anyhow::Result<Vec<T>> {
    values.iter().enumerate().map(|(i, v)| f(v).with_context(|| format!("record {}", i + 1))).collect()
}

/// Scores `pred` against `gold`. ROUGE yields three results averaged over
/// pairs; every other metric yields one corpus-level result.
pub fn score(metric: Metric, gold: &[Value], pred: &[Value], smooth: bool) -> anyhow::Result<Vec<MetricResult>> {
    let one = |name: &str, value: f64| vec![MetricResult { name: name.into(), value }];
    Ok(match metric {
        Metric::Accuracy => one("accuracy", metrics::accuracy(&map_all(gold, label)?, &map_all(pred, label)?)?),
        Metric::F1Macro => {
            let (g, p) = (map_all(gold, label)?, map_all(pred, label)?);
            let classes: BTreeMap<&String, usize> =
                g.iter().chain(&p).collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, l)| (l, i)).collect();
            let gi: Vec<usize> = g.iter().map(|l| classes[l]).collect();
            let pi: Vec<usize> = p.iter().map(|l| classes[l]).collect();
            one("f1_macro", metrics::f1_macro(&gi, &pi, classes.len())?)
        }
        Metric::Jaccard => {
            one("jaccard", metrics::jaccard_multilabel(&map_all(gold, label_set)?, &map_all(pred, label_set)?)?)
        }
        Metric::Pearson => one("pearson", metrics::pearson(&map_all(gold, number)?, &map_all(pred, number)?)?),
        Metric::Bleu => {
            let opts = BleuOptions { add_one_smoothing: smooth };
            one("bleu", metrics::bleu(&map_all(gold, text)?, &map_all(pred, text)?, opts)?)
        }
        Metric::Rouge => {
            let (g, p) = (map_all(gold, text)?, map_all(pred, text)?);
            if g.is_empty() {
                return Err(metrics::MetricError::Empty.into());
            }
            if g.len() != p.len() {
                return Err(metrics::MetricError::LengthMismatch { gold: g.len(), pred: p.len() }.into());
            }
            let mut sums = [0.0; 3];
            for (r, h) in g.iter().zip(&p) {
                let s = metrics::rouge(r, h);
                sums[0] += s.rouge1;
                sums[1] += s.rouge2;
                sums[2] += s.rouge_l;
            }
            let n = g.len() as f64;
            ["rouge1", "rouge2", "rougeL"]
                .iter()
                .zip(sums)
                .map(|(name, s)| MetricResult { name: (*name).into(), value: s / n })
                .collect()
        }
    })
}
