mod common;

use std::collections::HashMap;
use std::path::PathBuf;

use arprep::harness::{
    enumerate_grid, format_report, mean_std, run_search, CommandTrainer, HyperParamGrid, RunSummary, TaskSpec,
    TrainerOutput, TrialConfig,
};
use arprep::metrics::{bleu, rouge, BleuOptions};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Letter-for-letter Latin stand-ins for the generator's Arabic alphabet.
fn transliterate(s: &str) -> String {
    const LATIN: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGH";
    assert_eq!(LATIN.chars().collect::<std::collections::HashSet<_>>().len(), common::ARABIC_LETTERS.len());
    let table: HashMap<char, char> = common::ARABIC_LETTERS.iter().copied().zip(LATIN.chars()).collect();
    s.chars().map(|c| table.get(&c).copied().unwrap_or(c)).collect()
}

#[test]
fn bleu_and_rouge_are_script_agnostic() {
    let mut r = common::rng(12);
    for _ in 0..300 {
        let vocab: Vec<String> = (0..12).map(|_| common::arabic_word(&mut r, 2, 5)).collect();
        let sent = |r: &mut rand_chacha::ChaCha8Rng, n: usize| {
            (0..n).map(|_| vocab.choose(r).unwrap().clone()).collect::<Vec<_>>().join(" ")
        };
        let (n1, n2) = (r.random_range(1..12), r.random_range(1..12));
        let (reference, hypothesis) = (sent(&mut r, n1), sent(&mut r, n2));
        let (tr, th) = (transliterate(&reference), transliterate(&hypothesis));
        let w = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        assert_eq!(rouge(&w(&reference), &w(&hypothesis)), rouge(&w(&tr), &w(&th)));
        for smooth in [false, true] {
            let opts = BleuOptions { add_one_smoothing: smooth };
            let a = bleu(&[w(&reference)], &[w(&hypothesis)], opts).unwrap();
            let b = bleu(&[w(&tr)], &[w(&th)], opts).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

fn task(trainer: &str) -> TaskSpec {
    TaskSpec {
        name: "stub".into(),
        metric: "f1_macro".into(),
        train: PathBuf::from("train.tsv"),
        dev: PathBuf::from("dev.tsv"),
        test: None,
        trainer: trainer.into(),
    }
}

fn surface(c: &TrialConfig) -> f64 {
    // unique maximum at lr 2e-5, batch 32, dropout 0.2
    -((c.lr.log10() + 4.7).powi(2)) - ((c.batch as f64).log2() - 5.0).powi(2) - (c.dropout - 0.2).powi(2) * 10.0
}

#[test]
fn argmax_matches_brute_force() {
    let grid = HyperParamGrid::default();
    let brute = enumerate_grid(&grid)
        .into_iter()
        .fold(None::<TrialConfig>, |best, c| match best {
            Some(b) if surface(&b) >= surface(&c) => Some(b),
            _ => Some(c),
        })
        .unwrap();
    let trainer =
        |_: &TaskSpec, c: &TrialConfig, _: u64| Ok(TrainerOutput { dev_score: surface(c), artifact_path: None });
    let summary = run_search(&task(""), &grid, &trainer, 8).unwrap();
    assert_eq!(summary.best_config, brute);
    assert_eq!((brute.batch, brute.dropout), (32, 0.2));
    assert_eq!(summary.search.len(), 60);
}

#[test]
fn search_is_reproducible() {
    let trainer = |_: &TaskSpec, c: &TrialConfig, seed: u64| {
        Ok(TrainerOutput { dev_score: surface(c) + seed as f64 * 0.01, artifact_path: None })
    };
    let a = run_search(&task(""), &HyperParamGrid::default(), &trainer, 1).unwrap();
    let b = run_search(&task(""), &HyperParamGrid::default(), &trainer, 6).unwrap();
    assert_eq!(a, b);
}

#[test]
fn population_std_against_two_pass() {
    let scores = [71.2, 70.4, 72.9, 69.8, 71.0];
    let (mean, std) = mean_std(&scores);
    let m: f64 = scores.iter().sum::<f64>() / 5.0;
    let v: f64 = scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / 5.0;
    assert!((mean - m).abs() < 1e-12);
    assert!((std - v.sqrt()).abs() < 1e-12);
}

#[test]
fn command_trainer_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls.log");
    let script = format!(
        "echo \"{{lr}} {{batch}} {{dropout}} {{seed}}\" >> {log}; echo training; echo DEV_SCORE $(( {{batch}} + {{seed}} ))",
        log = log.display()
    );
    let grid = HyperParamGrid {
        learning_rates: vec![1e-5, 2e-5],
        batch_sizes: vec![8, 16],
        dropouts: vec![0.1],
        seeds: vec![1, 2, 3, 4, 5],
        ..Default::default()
    };
    let s = run_search(&task(&script), &grid, &CommandTrainer, 2).unwrap();
    assert_eq!(s.best_config.batch, 16);
    assert_eq!(s.best_config.lr, 1e-5);
    assert_eq!(s.scores, vec![17.0, 18.0, 19.0, 20.0, 21.0]);
    assert_eq!(s.selected_seed, 5);
    let calls = std::fs::read_to_string(&log).unwrap();
    assert_eq!(calls.lines().count(), 4 + 5);
}

#[test]
fn failing_command_is_recorded() {
    let grid = HyperParamGrid {
        learning_rates: vec![1e-5],
        batch_sizes: vec![8, 16],
        dropouts: vec![0.1],
        ..Default::default()
    };
    let s = run_search(&task("test {batch} -eq 8 && echo DEV_SCORE 1.5 || exit 3"), &grid, &CommandTrainer, 2).unwrap();
    assert_eq!(s.best_config.batch, 8);
    assert_eq!(s.failures.len(), 1);
    assert!(run_search(&task("echo no score"), &grid, &CommandTrainer, 2).is_err());
}

fn summary(name: &str, mean: f64, std: f64) -> RunSummary {
    RunSummary {
        task: name.into(),
        metric: "score".into(),
        best_config: TrialConfig { lr: 2e-5, batch: 32, dropout: 0.1, epochs: 30 },
        seeds: vec![1, 2, 3, 4, 5],
        scores: vec![mean; 5],
        mean,
        std,
        selected_seed: 1,
        selected_artifact: None,
        search: vec![],
        failures: vec![],
    }
}

#[test]
fn published_average_rows_reproduce() {
    // per-task cells of two published rows and their printed averages
    let rows: [(&[(f64, f64)], &str); 2] = [
        (
            &[(75.1, 0.3), (65.7, 0.3), (87.4, 0.7), (46.8, 0.8), (84.8, 0.3), (92.2, 0.5), (72.4, 0.7), (85.0, 1.6)],
            "76.2±0.7",
        ),
        (
            &[(76.8, 0.2), (67.3, 0.2), (87.5, 0.3), (47.8, 0.4), (85.7, 0.2), (93.3, 0.1), (72.7, 0.3), (86.4, 0.5)],
            "77.2±0.3",
        ),
    ];
    for (cells, avg) in rows {
        let summaries: Vec<RunSummary> =
            cells.iter().enumerate().map(|(i, &(m, s))| summary(&format!("t{i}"), m, s)).collect();
        let report = format_report(&summaries).unwrap();
        assert!(report.tsv.ends_with(&format!("Avg.\t\t{avg}\n")), "{}", report.tsv);
        assert!(report.markdown.contains(&format!("| Avg. |  | {avg} |")));
    }
}
