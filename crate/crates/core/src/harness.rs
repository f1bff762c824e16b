//! Fine-tuning protocol driver.
//!
//! Phase 1 runs every grid configuration once with a fixed search seed.
//! Phase 2 reruns the best configuration with each of the grid's seeds and
//! aggregates those scores. Training itself is delegated to a [`Trainer`];
//! [`CommandTrainer`] shells out to an external program that must end its
//! standard output with a `DEV_SCORE <real>` line.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PARALLELISM_ENV: &str = "ARPREP_PARALLELISM";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every search trial failed for task {task}")]
    AllTrialsFailed { task: String },
    #[error("every seed of the selected configuration failed for task {task}")]
    AllSeedsFailed { task: String },
    #[error("nothing to report")]
    EmptyReport,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParamGrid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<u32>,
    pub dropouts: Vec<f64>,
    pub epochs: u32,
    pub seeds: Vec<u64>,
    /// Seed shared by all phase-1 trials.
    pub search_seed: u64,
}

impl Default for HyperParamGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![7e-6, 2e-5, 5e-5],
            batch_sizes: vec![8, 16, 32, 64, 128],
            dropouts: vec![0.1, 0.2, 0.3, 0.4],
            epochs: 30,
            seeds: vec![1, 2, 3, 4, 5],
            search_seed: 0,
        }
    }
}

impl HyperParamGrid {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidGrid(m.to_string()));
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() || self.dropouts.is_empty() {
            return bad("learning_rates, batch_sizes and dropouts must be non-empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.learning_rates.iter().any(|lr| !lr.is_finite() || *lr <= 0.0) {
            return bad("learning rates must be finite and positive");
        }
        if self.dropouts.iter().any(|d| !(0.0..1.0).contains(d)) {
            return bad("dropouts must lie in [0, 1)");
        }
        if self.batch_sizes.contains(&0) {
            return bad("batch sizes must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub lr: f64,
    pub batch: u32,
    pub dropout: f64,
    pub epochs: u32,
}

fn sorted_unique_f64(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// All configurations in ascending (lr, batch, dropout) order.
pub fn enumerate_grid(grid: &HyperParamGrid) -> Vec<TrialConfig> {
    let mut batches = grid.batch_sizes.clone();
    batches.sort_unstable();
    batches.dedup();
    let dropouts = sorted_unique_f64(&grid.dropouts);
    let mut out = Vec::new();
    for lr in sorted_unique_f64(&grid.learning_rates) {
        for &batch in &batches {
            for &dropout in &dropouts {
                out.push(TrialConfig { lr, batch, dropout, epochs: grid.epochs });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub metric: String,
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Shell command with `{lr}`, `{batch}`, `{dropout}`, `{epochs}`,
    /// `{seed}`, `{task}`, `{train}`, `{dev}` and `{test}` placeholders.
    pub trainer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerOutput {
    pub dev_score: f64,
    pub artifact_path: Option<PathBuf>,
}

pub trait Trainer: Sync {
    /// Trains once; `Err` carries a human-readable failure reason.
    fn train(&self, task: &TaskSpec, config: &TrialConfig, seed: u64) -> Result<TrainerOutput, String>;
}

impl<F> Trainer for F
where
    F: Fn(&TaskSpec, &TrialConfig, u64) -> Result<TrainerOutput, String> + Sync,
{
    fn train(&self, task: &TaskSpec, config: &TrialConfig, seed: u64) -> Result<TrainerOutput, String> {
        self(task, config, seed)
    }
}

/// Runs the task's command template through `sh -c`.
#[derive(Debug, Clone, Default)]
pub struct CommandTrainer;

impl CommandTrainer {
    pub fn render(task: &TaskSpec, config: &TrialConfig, seed: u64) -> String {
        let test = task.test.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        task.trainer
            .replace("{lr}", &config.lr.to_string())
            .replace("{batch}", &config.batch.to_string())
            .replace("{dropout}", &config.dropout.to_string())
            .replace("{epochs}", &config.epochs.to_string())
            .replace("{seed}", &seed.to_string())
            .replace("{task}", &task.name)
            .replace("{train}", &task.train.display().to_string())
            .replace("{dev}", &task.dev.display().to_string())
            .replace("{test}", &test)
    }
}

/// Reads the score from the last non-empty stdout line. An optional
/// earlier `ARTIFACT <path>` line names the saved checkpoint.
pub fn parse_trainer_stdout(stdout: &str) -> Result<TrainerOutput, String> {
    let last = stdout.lines().rev().find(|l| !l.trim().is_empty()).ok_or("trainer printed nothing")?;
    let value = last
        .trim()
        .strip_prefix("DEV_SCORE")
        .filter(|rest| rest.starts_with(char::is_whitespace))
        .ok_or_else(|| format!("last line is not DEV_SCORE: {last:?}"))?
        .trim();
    let dev_score: f64 = value.parse().map_err(|_| format!("unparsable score {value:?}"))?;
    if !dev_score.is_finite() {
        return Err(format!("non-finite score {value}"));
    }
    let artifact_path =
        stdout.lines().filter_map(|l| l.trim().strip_prefix("ARTIFACT ")).next_back().map(|p| PathBuf::from(p.trim()));
    Ok(TrainerOutput { dev_score, artifact_path })
}

impl Trainer for CommandTrainer {
    fn train(&self, task: &TaskSpec, config: &TrialConfig, seed: u64) -> Result<TrainerOutput, String> {
        let cmd = Self::render(task, config, seed);
        log::debug!("running trainer: {cmd}");
        let out = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| format!("cannot spawn sh: {e}"))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(format!("trainer exited with {}: {}", out.status, stderr.trim()));
        }
        parse_trainer_stdout(&String::from_utf8_lossy(&out.stdout))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub seed: u64,
    pub dev_score: f64,
    pub artifact_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub config: TrialConfig,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: String,
    pub metric: String,
    pub best_config: TrialConfig,
    pub seeds: Vec<u64>,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub selected_seed: u64,
    pub selected_artifact: Option<PathBuf>,
    pub search: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

pub fn mean_std(scores: &[f64]) -> (f64, f64) {
    if scores.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cap from the environment, or the number of available cores.
pub fn parallelism_from_env() -> usize {
    std::env::var(PARALLELISM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

type Job = (TrialConfig, u64);

fn run_jobs<T: Trainer + ?Sized>(
    pool: &rayon::ThreadPool,
    task: &TaskSpec,
    trainer: &T,
    jobs: &[Job],
) -> Vec<Result<TrainerOutput, String>> {
    pool.install(|| jobs.par_iter().map(|(cfg, seed)| trainer.train(task, cfg, *seed)).collect())
}

pub fn run_search<T: Trainer + ?Sized>(
    task: &TaskSpec,
    grid: &HyperParamGrid,
    trainer: &T,
    parallelism: usize,
) -> Result<RunSummary, HarnessError> {
    grid.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let configs = enumerate_grid(grid);
    let jobs: Vec<Job> = configs.iter().map(|c| (*c, grid.search_seed)).collect();
    let mut search = Vec::new();
    let mut failures = Vec::new();
    let mut best: Option<(f64, TrialConfig)> = None;
    for ((config, seed), outcome) in jobs.iter().zip(run_jobs(&pool, task, trainer, &jobs)) {
        match outcome {
            Ok(out) => {
                // strict comparison keeps the earliest configuration on ties
                if best.is_none_or(|(s, _)| out.dev_score > s) {
                    best = Some((out.dev_score, *config));
                }
                search.push(TrialResult {
                    config: *config,
                    seed: *seed,
                    dev_score: out.dev_score,
                    artifact_path: out.artifact_path,
                });
            }
            Err(reason) => {
                log::warn!("{}: trial {config:?} failed: {reason}", task.name);
                failures.push(TrialFailure { config: *config, seed: *seed, reason });
            }
        }
    }
    let (_, best_config) = best.ok_or_else(|| HarnessError::AllTrialsFailed { task: task.name.clone() })?;
    log::info!("{}: best search configuration {best_config:?}", task.name);

    let jobs: Vec<Job> = grid.seeds.iter().map(|&s| (best_config, s)).collect();
    let mut seeds = Vec::new();
    let mut scores = Vec::new();
    let mut selected: Option<(f64, u64, Option<PathBuf>)> = None;
    for ((config, seed), outcome) in jobs.iter().zip(run_jobs(&pool, task, trainer, &jobs)) {
        match outcome {
            Ok(out) => {
                if selected.as_ref().is_none_or(|(s, _, _)| out.dev_score > *s) {
                    selected = Some((out.dev_score, *seed, out.artifact_path));
                }
                seeds.push(*seed);
                scores.push(out.dev_score);
            }
            Err(reason) => {
                log::warn!("{}: seed {seed} failed: {reason}", task.name);
                failures.push(TrialFailure { config: *config, seed: *seed, reason });
            }
        }
    }
    let (_, selected_seed, selected_artifact) =
        selected.ok_or_else(|| HarnessError::AllSeedsFailed { task: task.name.clone() })?;
    let (mean, std) = mean_std(&scores);
    Ok(RunSummary {
        task: task.name.clone(),
        metric: task.metric.clone(),
        best_config,
        seeds,
        scores,
        mean,
        std,
        selected_seed,
        selected_artifact,
        search,
        failures,
    })
}

/// Rounds half away from zero at one decimal. Binary error below 1e-8 is
/// removed first, so an average such as 0.65 that sums to 0.6499999…
/// still rounds up.
pub fn round_one_decimal(x: f64) -> f64 {
    let tenths = (x * 10.0 * 1e8).round() / 1e8;
    tenths.round() / 10.0
}

pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.1}±{:.1}", round_one_decimal(mean), round_one_decimal(std))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub tsv: String,
    pub markdown: String,
}

/// One row per task plus an unweighted "Avg." row: the mean of the task
/// means and the mean of the task standard deviations.
pub fn format_report(summaries: &[RunSummary]) -> Result<Report, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let n = summaries.len() as f64;
    let avg_mean = summaries.iter().map(|s| s.mean).sum::<f64>() / n;
    let avg_std = summaries.iter().map(|s| s.std).sum::<f64>() / n;

    let mut rows: Vec<(&str, &str, String)> =
        summaries.iter().map(|s| (s.task.as_str(), s.metric.as_str(), format_cell(s.mean, s.std))).collect();
    rows.push(("Avg.", "", format_cell(avg_mean, avg_std)));

    let mut tsv = String::from("task\tmetric\tscore\n");
    let mut markdown = String::from("| Task | Metric | Score |\n|---|---|---|\n");
    for (task, metric, cell) in &rows {
        let _ = writeln!(tsv, "{task}\t{metric}\t{cell}");
        let _ = writeln!(markdown, "| {task} | {metric} | {cell} |");
    }
    Ok(Report { tsv, markdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn task() -> TaskSpec {
        TaskSpec {
            name: "toy".into(),
            metric: "accuracy".into(),
            train: "train.tsv".into(),
            dev: "dev.tsv".into(),
            test: None,
            trainer: String::new(),
        }
    }

    #[test]
    fn default_grid_has_sixty_configs() {
        let configs = enumerate_grid(&HyperParamGrid::default());
        assert_eq!(configs.len(), 60);
        assert_eq!(configs[0], TrialConfig { lr: 7e-6, batch: 8, dropout: 0.1, epochs: 30 });
        assert_eq!(configs[59], TrialConfig { lr: 5e-5, batch: 128, dropout: 0.4, epochs: 30 });
        assert_eq!(configs, enumerate_grid(&HyperParamGrid::default()));
    }

    #[test]
    fn singleton_grid() {
        let grid = HyperParamGrid {
            learning_rates: vec![1e-5],
            batch_sizes: vec![4],
            dropouts: vec![0.0],
            ..Default::default()
        };
        assert_eq!(enumerate_grid(&grid).len(), 1);
    }

    #[test]
    fn order_ignores_input_order() {
        let a =
            HyperParamGrid { learning_rates: vec![5e-5, 7e-6, 2e-5], batch_sizes: vec![32, 8], ..Default::default() };
        let b =
            HyperParamGrid { learning_rates: vec![7e-6, 2e-5, 5e-5], batch_sizes: vec![8, 32], ..Default::default() };
        assert_eq!(enumerate_grid(&a), enumerate_grid(&b));
    }

    #[test]
    fn invalid_grids() {
        let g = HyperParamGrid { dropouts: vec![], ..Default::default() };
        assert!(g.validate().is_err());
        let g = HyperParamGrid { seeds: vec![], ..Default::default() };
        assert!(g.validate().is_err());
        let g = HyperParamGrid { learning_rates: vec![f64::NAN], ..Default::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parses_trainer_output() {
        let out = parse_trainer_stdout("epoch 1\nARTIFACT /tmp/ckpt\nDEV_SCORE 81.25\n").unwrap();
        assert_eq!(out.dev_score, 81.25);
        assert_eq!(out.artifact_path, Some(PathBuf::from("/tmp/ckpt")));
        assert!(parse_trainer_stdout("DEV_SCORE 1\nmore\n").is_err());
        assert!(parse_trainer_stdout("DEV_SCORE abc").is_err());
        assert!(parse_trainer_stdout("DEV_SCORE nan").is_err());
        assert!(parse_trainer_stdout("DEV_SCORE7").is_err());
        assert!(parse_trainer_stdout("").is_err());
    }

    #[test]
    fn renders_placeholders() {
        let mut t = task();
        t.trainer = "train --lr {lr} --bs {batch} --do {dropout} --seed {seed} --task {task} --dev {dev}".into();
        let cfg = TrialConfig { lr: 2e-5, batch: 16, dropout: 0.3, epochs: 30 };
        assert_eq!(
            CommandTrainer::render(&t, &cfg, 4),
            "train --lr 0.00002 --bs 16 --do 0.3 --seed 4 --task toy --dev dev.tsv"
        );
    }

    #[test]
    fn constant_score_selects_first_config() {
        let trainer = |_: &TaskSpec, _: &TrialConfig, _: u64| Ok(TrainerOutput { dev_score: 1.0, artifact_path: None });
        let s = run_search(&task(), &HyperParamGrid::default(), &trainer, 4).unwrap();
        assert_eq!(s.best_config, enumerate_grid(&HyperParamGrid::default())[0]);
        assert_eq!(s.selected_seed, 1);
    }

    #[test]
    fn every_config_runs_once_in_search() {
        let calls = Mutex::new(Vec::new());
        let trainer = |_: &TaskSpec, c: &TrialConfig, seed: u64| {
            calls.lock().unwrap().push((c.lr.to_bits(), c.batch, c.dropout.to_bits(), seed));
            Ok(TrainerOutput { dev_score: c.batch as f64, artifact_path: None })
        };
        let grid = HyperParamGrid::default();
        let s = run_search(&task(), &grid, &trainer, 3).unwrap();
        let calls = calls.into_inner().unwrap();
        let search_calls: Vec<_> = calls.iter().filter(|c| c.3 == grid.search_seed).collect();
        assert_eq!(search_calls.len(), 60);
        let unique: std::collections::HashSet<_> = search_calls.iter().collect();
        assert_eq!(unique.len(), 60);
        assert_eq!(calls.len(), 65);
        assert_eq!(s.search.len(), 60);
        // ties among batch 128 resolve to the smallest lr and dropout
        assert_eq!(s.best_config, TrialConfig { lr: 7e-6, batch: 128, dropout: 0.1, epochs: 30 });
    }

    #[test]
    fn failed_configs_are_excluded() {
        let trainer = |_: &TaskSpec, c: &TrialConfig, _: u64| {
            if c.batch == 128 {
                Err("out of memory".to_string())
            } else {
                Ok(TrainerOutput { dev_score: c.batch as f64, artifact_path: None })
            }
        };
        let s = run_search(&task(), &HyperParamGrid::default(), &trainer, 2).unwrap();
        assert_eq!(s.best_config.batch, 64);
        assert_eq!(s.failures.len(), 12);
        let fail = |_: &TaskSpec, _: &TrialConfig, _: u64| -> Result<TrainerOutput, String> { Err("no".into()) };
        assert!(matches!(
            run_search(&task(), &HyperParamGrid::default(), &fail, 2),
            Err(HarnessError::AllTrialsFailed { .. })
        ));
    }

    #[test]
    fn per_seed_scores() {
        let trainer = |_: &TaskSpec, _: &TrialConfig, seed: u64| {
            Ok(TrainerOutput { dev_score: if seed == 0 { 0.0 } else { seed as f64 }, artifact_path: None })
        };
        let s = run_search(&task(), &HyperParamGrid::default(), &trainer, 1).unwrap();
        assert_eq!(s.scores, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.selected_seed, 5);
    }

    fn summary(name: &str, mean: f64, std: f64) -> RunSummary {
        RunSummary {
            task: name.into(),
            metric: "f1".into(),
            best_config: TrialConfig { lr: 2e-5, batch: 32, dropout: 0.1, epochs: 30 },
            seeds: vec![],
            scores: vec![],
            mean,
            std,
            selected_seed: 1,
            selected_artifact: None,
            search: vec![],
            failures: vec![],
        }
    }

    #[test]
    fn report_cells_and_average() {
        assert_eq!(format_cell(76.2, 0.7), "76.2±0.7");
        assert_eq!(format_cell(0.05, 0.25), "0.1±0.3");
        assert_eq!(format_cell(76.175, 0.6499999999999999), "76.2±0.7");
        assert_eq!(format_cell(76.14, 0.64), "76.1±0.6");
        let r = format_report(&[summary("a", 70.0, 1.0), summary("b", 80.0, 0.0)]).unwrap();
        assert!(r.tsv.ends_with("Avg.\t\t75.0±0.5\n"), "{}", r.tsv);
        assert!(r.markdown.contains("| a | f1 | 70.0±1.0 |"));
        let single = format_report(&[summary("only", 64.04, 0.33)]).unwrap();
        assert!(single.tsv.contains("only\tf1\t64.0±0.3\nAvg.\t\t64.0±0.3\n"));
        assert!(matches!(format_report(&[]), Err(HarnessError::EmptyReport)));
    }
}
