//! Run configuration shared by every subcommand.

use std::path::Path;

use arprep::filter::FilterConfig;
use arprep::harness::HyperParamGrid;
use arprep::instances::MaskingConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizerSection {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupSection {
    /// 1 streams in a single pass; more loads the corpus and shards keys.
    pub shards: usize,
}

impl Default for DedupSection {
    fn default() -> Self {
        DedupSection { shards: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { vocab_size: arprep::bbpe::DEFAULT_VOCAB }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharCnnSection {
    pub configs: usize,
    pub seeds: u64,
}

impl Default for CharCnnSection {
    fn default() -> Self {
        CharCnnSection { configs: 3, seeds: 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub normalizer: NormalizerSection,
    pub filter: FilterConfig,
    pub dedup: DedupSection,
    pub tokenizer: TokenizerSection,
    pub masking: MaskingConfig,
    pub charcnn: CharCnnSection,
    pub harness: HyperParamGrid,
    /// Overrides `masking.seed` when present.
    pub seed: Option<u64>,
    /// Worker threads; unset uses the parallelism environment variable or
    /// the number of cores.
    pub parallelism: Option<usize>,
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let bad = |e: String| CliError::Usage(format!("config {}: {e}", path.display()));
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: String| CliError::Usage(e);
        self.filter.validate().map_err(|e| usage(e.to_string()))?;
        self.masking.validate().map_err(|e| usage(e.to_string()))?;
        self.harness.validate().map_err(|e| usage(e.to_string()))?;
        if self.dedup.shards == 0 {
            return Err(usage("dedup.shards must be at least 1".into()));
        }
        if self.tokenizer.vocab_size < arprep::bbpe::MIN_VOCAB {
            return Err(usage(format!("tokenizer.vocab_size must be at least {}", arprep::bbpe::MIN_VOCAB)));
        }
        if self.parallelism == Some(0) {
            return Err(usage("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn masking_config(&self) -> MaskingConfig {
        let mut m = self.masking.clone();
        if let Some(seed) = self.seed {
            m.seed = seed;
        }
        m
    }
}
