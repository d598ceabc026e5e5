//! Training pipeline: preprocess, mine, build the model, pick the trigger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{build_hmm, find_trigger_state, BuildConfig, Hmm};
use crate::miner::{mine, MiningConfig, MiningResult, PatternCluster, SupportMode};
use crate::parser::{compile_pattern, KpiTable, ParsingPattern};
use crate::preprocess::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kpi_name: String,
    /// Defaults to the number of truth rows.
    pub threshold: Option<usize>,
    pub expected_kpi_count: usize,
    pub support_mode: SupportMode,
    pub build: BuildConfig,
    /// Extra tokens accepted in place of the trigger.
    pub aliases: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kpi_name: "ctdi".into(),
            threshold: None,
            expected_kpi_count: 1,
            support_mode: SupportMode::Exact,
            build: BuildConfig::default(),
            aliases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Hmm,
    pub pattern: ParsingPattern,
    pub mining_config: MiningConfig,
    pub mining: MiningResult,
    pub cluster: PatternCluster,
    pub matching_lines: usize,
}

pub fn train(corpus: &[TokenSequence], truth: &KpiTable, config: &TrainConfig) -> Result<Trained> {
    let threshold = match config.threshold {
        Some(t) => t,
        None if truth.is_empty() => {
            return Err(Error::Config(
                "truth table is empty, so the threshold would be zero; pass --threshold".into(),
            ))
        }
        None => truth.len(),
    };
    let mut mining_config = MiningConfig::new(threshold, config.expected_kpi_count)?;
    mining_config.support_mode = config.support_mode;
    let mining = mine(corpus, &mining_config);
    let cluster = mining
        .reduced
        .clusters
        .first()
        .cloned()
        .ok_or(Error::NoCluster { threshold })?;
    let matching: Vec<TokenSequence> = corpus.iter().filter(|l| cluster.matches(l)).cloned().collect();
    let model = build_hmm(&matching, &cluster, &config.build)?;
    let trigger = find_trigger_state(&model, &matching)?;
    let pattern = compile_pattern(&model, trigger, &config.kpi_name, &config.aliases)?;
    Ok(Trained {
        model,
        pattern,
        mining_config,
        mining,
        cluster,
        matching_lines: matching.len(),
    })
}
