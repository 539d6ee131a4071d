//! Desk-scale ablation over training modes on synthetic corpora.

use serde::{Deserialize, Serialize};

use crate::corpus::{mix_corpora, split_corpus, Corpus, DisfluencyType};
use crate::error::Result;
use crate::evaluate::{evaluate_pairs, MetricReport, TableRow};
use crate::seed;
use crate::seqgan::ModelConfig;
use crate::synth::{synthesize_corpus, toy::ToyLanguage, SynthConfig};
use crate::textnorm::Vocabulary;
use crate::trainer::{train, TrainConfig, TrainMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSetup {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    /// Target DISFLUENT token fraction of every synthesized corpus.
    pub budget: f64,
    /// Probability that a content word takes its dialect form in the
    /// unlabeled corpus.
    pub dialect_shift: f64,
    /// Restricts synthesis to one disfluency type.
    pub only_type: Option<DisfluencyType>,
    pub data_seed: u64,
}

impl Default for AblationSetup {
    fn default() -> Self {
        Self {
            n_labeled: 150,
            n_unlabeled: 500,
            n_test: 100,
            budget: 0.2,
            dialect_shift: 0.3,
            only_type: None,
            data_seed: 2023,
        }
    }
}

/// Labeled training pairs, unlabeled dialect sentences and test pairs.
#[derive(Clone, Debug)]
pub struct AblationData {
    pub labeled: Corpus,
    pub unlabeled: Corpus,
    pub test: Corpus,
}

impl AblationData {
    /// The training corpus a mode sees: unlabeled sentences only in
    /// adversarial+unlabeled mode.
    pub fn training_corpus(&self, mode: TrainMode) -> Corpus {
        if mode == TrainMode::AdversarialUnlabeled {
            mix_corpora(&self.labeled, &self.unlabeled)
        } else {
            self.labeled.clone()
        }
    }
}

fn synth_cfg(setup: &AblationSetup, seed: u64) -> SynthConfig {
    match setup.only_type {
        Some(t) => SynthConfig::only(t, setup.budget, seed),
        None => SynthConfig::conversational(setup.budget, seed),
    }
}

pub fn build_ablation_data(setup: &AblationSetup) -> Result<AblationData> {
    let s = setup.data_seed;
    let base = ToyLanguage::base();
    let fluent = base.sentences(setup.n_labeled + setup.n_test, seed::derive(s, "base-text"));
    let pairs = synthesize_corpus(
        &fluent,
        &synth_cfg(setup, seed::derive(s, "base-synth")),
        &base.lexicons(),
    )?;
    let (labeled, test) = split_corpus(&pairs, setup.n_labeled, seed::derive(s, "split"))?;

    let dialect = ToyLanguage::dialect("xd", setup.dialect_shift, seed::derive(s, "dialect"));
    let dialect_text = dialect.sentences(setup.n_unlabeled, seed::derive(s, "dialect-text"));
    let unlabeled = synthesize_corpus(
        &dialect_text,
        &synth_cfg(setup, seed::derive(s, "dialect-synth")),
        &dialect.lexicons(),
    )?;
    Ok(AblationData {
        labeled,
        unlabeled,
        test,
    })
}

/// Trains one model per (mode, seed) on the data available to that mode
/// and scores the final parameters on the test pairs.
pub fn run_ablation(
    data: &AblationData,
    model_cfg: impl Fn(usize) -> ModelConfig,
    base_cfg: &TrainConfig,
    modes: &[TrainMode],
    seeds: &[u64],
    mut on_run: impl FnMut(TrainMode, u64, &MetricReport),
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for &mode in modes {
        let corpus = data.training_corpus(mode);
        let vocab = Vocabulary::build(&[&corpus], 1)?;
        let mut reports = Vec::new();
        for &s in seeds {
            let cfg = TrainConfig {
                mode,
                seed: s,
                eval_every: 0,
                ..*base_cfg
            };
            let out = train(&corpus, &vocab, model_cfg(vocab.len()), &cfg, None, None, |_| {})?;
            let report = evaluate_pairs(&out.model, &vocab, &data.test.labeled, 1)?;
            on_run(mode, s, &report);
            reports.push(report);
        }
        rows.push(TableRow {
            system: mode.as_str().to_string(),
            reports,
        });
    }
    Ok(rows)
}
