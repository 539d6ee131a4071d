//! Adversarial semi-supervised training.
//!
//! Each iteration makes one discriminator update followed by one generator
//! update. The discriminator (with the encoder) minimizes
//! `l_sup + l_unsup_real + l_unsup_fake`: token cross-entropy on labeled
//! sentences, and real/fake binary cross-entropy on every real sentence
//! (labeled and unlabeled) and on as many generated sequences. The generator
//! minimizes `-log p_real(fake)` plus a feature-matching term between the
//! batch-mean pooled features of real and fake sequences.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParallelPair};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_pairs, MetricReport};
use crate::seed::{self, Rng};
use crate::seqgan::{
    discriminate_batch, encode_batch, generate_batch, sample_noise, EncodedBatch, ModelConfig, SeqGan,
    DISCRIMINATOR_PREFIX, ENCODER_PREFIX, GENERATOR_PREFIX,
};
use crate::tensor::{
    adam_step, load_checkpoint, save_checkpoint, AdamConfig, AdamState, Graph, NodeId, ParamStore, Scalar, Tensor,
};
use crate::textnorm::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMode {
    /// Token loss only; generator and real/fake head unused.
    #[serde(rename = "supervised")]
    Supervised,
    /// Adversarial training on labeled sentences only.
    #[serde(rename = "adversarial")]
    Adversarial,
    /// Adversarial training with unlabeled sentences in the real/fake task.
    #[serde(rename = "adversarial+unlabeled")]
    AdversarialUnlabeled,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [
        TrainMode::Supervised,
        TrainMode::Adversarial,
        TrainMode::AdversarialUnlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Supervised => "supervised",
            TrainMode::Adversarial => "adversarial",
            TrainMode::AdversarialUnlabeled => "adversarial+unlabeled",
        }
    }

    pub fn is_adversarial(self) -> bool {
        self != TrainMode::Supervised
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown training mode {s:?} (supervised, adversarial, adversarial+unlabeled)"
            ))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub steps: usize,
    pub batch_size_labeled: usize,
    pub batch_size_unlabeled: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub seed: u64,
    /// Evaluate on the held-out set every this many steps; 0 disables
    /// periodic evaluation.
    pub eval_every: usize,
    pub feature_match_weight: f64,
}

impl TrainConfig {
    pub fn desk(mode: TrainMode, seed: u64) -> Self {
        Self {
            mode,
            steps: 2000,
            batch_size_labeled: 16,
            batch_size_unlabeled: 16,
            lr_d: 1e-3,
            lr_g: 1e-3,
            seed,
            eval_every: 200,
            feature_match_weight: 1.0,
        }
    }

    pub fn unlabeled_enabled(&self) -> bool {
        self.mode == TrainMode::AdversarialUnlabeled
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size_labeled == 0 || self.batch_size_unlabeled == 0 {
            return Err(Error::Config("steps and batch sizes must be positive".into()));
        }
        if !(self.lr_d > 0.0 && self.lr_g > 0.0) || !self.lr_d.is_finite() || !self.lr_g.is_finite() {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.feature_match_weight >= 0.0 && self.feature_match_weight.is_finite()) {
            return Err(Error::Config("feature_match_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Loss terms of one step. Terms a mode does not use are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_sup: f64,
    pub l_unsup_real: f64,
    pub l_unsup_fake: f64,
    pub l_d_total: f64,
    pub l_g_fool: f64,
    pub l_g_fm: f64,
    pub l_g_total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.l_sup,
            self.l_unsup_real,
            self.l_unsup_fake,
            self.l_d_total,
            self.l_g_fool,
            self.l_g_fm,
            self.l_g_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Labeled sentences with per-position class targets (0 at padding).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub batch: EncodedBatch,
    pub targets: Vec<usize>,
}

impl LabeledBatch {
    pub fn empty(max_len: usize) -> Self {
        Self {
            batch: EncodedBatch::empty(max_len),
            targets: Vec::new(),
        }
    }

    pub fn from_pairs(pairs: &[ParallelPair], vocab: &Vocabulary, max_len: usize) -> Self {
        let mut out = Self::empty(max_len);
        for p in pairs {
            let (ids, mask, targets) = encode_labeled(p, vocab, max_len);
            out.batch.push_encoded(&ids, &mask).expect("encoded to max_len");
            out.targets.extend(targets);
        }
        out
    }

    pub fn size(&self) -> usize {
        self.batch.size
    }
}

fn encode_labeled(pair: &ParallelPair, vocab: &Vocabulary, max_len: usize) -> (Vec<usize>, Vec<bool>, Vec<usize>) {
    let s = pair.disfluent();
    let (ids, mask) = vocab.encode(s.tokens(), max_len);
    let mut targets: Vec<usize> = s.labels().iter().take(max_len).map(|l| l.class_index()).collect();
    targets.resize(max_len, 0);
    (ids, mask, targets)
}

/// Graph handles of the discriminator-side losses.
#[derive(Clone, Copy, Debug)]
pub struct DLossNodes {
    pub l_sup: NodeId,
    pub l_unsup_real: Option<NodeId>,
    pub l_unsup_fake: Option<NodeId>,
    pub total: NodeId,
}

/// Builds the discriminator loss on `g`. Labeled rows come first in the
/// real batch; unlabeled rows are masked out of the token loss, so they
/// reach the token head with exactly zero gradient. With `noise` absent
/// only the token loss is built. An empty labeled batch gives `l_sup = 0`.
pub fn build_d_loss<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    labeled: &LabeledBatch,
    unlabeled: &EncodedBatch,
    noise: Option<&Tensor<T>>,
) -> Result<DLossNodes> {
    let real = if noise.is_some() {
        labeled.batch.concat(unlabeled)
    } else {
        labeled.batch.clone()
    };
    if real.is_empty() {
        return Err(Error::EmptyBatch("no real sentences in the step".into()));
    }
    let n_lab_rows = labeled.batch.ids.len();
    let h = encode_batch(g, store, cfg, &real)?;
    let out = discriminate_batch(g, store, cfg, h, &real.mask, real.size)?;

    let mut targets = labeled.targets.clone();
    targets.resize(real.ids.len(), 0);
    let mut sup_mask = real.mask.clone();
    sup_mask[n_lab_rows..].fill(false);
    let l_sup = g.cross_entropy(out.token_logits, &targets, &sup_mask)?;

    let Some(noise) = noise else {
        return Ok(DLossNodes {
            l_sup,
            l_unsup_real: None,
            l_unsup_fake: None,
            total: l_sup,
        });
    };
    let ones = vec![T::one(); real.size];
    let l_real = g.bce_with_logits(out.rf_logit, &ones)?;

    let n_fake = noise.rows();
    let fake_h = generate_batch(g, store, cfg, noise)?;
    let fake_mask = vec![true; n_fake * cfg.max_len()];
    let fake = discriminate_batch(g, store, cfg, fake_h, &fake_mask, n_fake)?;
    let zeros = vec![T::zero(); n_fake];
    let l_fake = g.bce_with_logits(fake.rf_logit, &zeros)?;

    let s = g.add(l_sup, l_real)?;
    let total = g.add(s, l_fake)?;
    Ok(DLossNodes {
        l_sup,
        l_unsup_real: Some(l_real),
        l_unsup_fake: Some(l_fake),
        total,
    })
}

/// Discriminator loss with the generator frozen. Errors with `EmptyBatch`
/// when there are no labeled sentences.
pub fn d_loss<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    labeled: &LabeledBatch,
    unlabeled: &EncodedBatch,
    noise: Option<&Tensor<T>>,
) -> Result<(Graph<T>, DLossNodes)> {
    if labeled.size() == 0 {
        return Err(Error::EmptyBatch("the labeled batch is empty".into()));
    }
    let mut g = Graph::new().freeze(GENERATOR_PREFIX);
    let nodes = build_d_loss(&mut g, store, cfg, labeled, unlabeled, noise)?;
    Ok((g, nodes))
}

#[derive(Clone, Copy, Debug)]
pub struct GLossNodes {
    pub fool: NodeId,
    pub feature_match: NodeId,
    pub total: NodeId,
}

/// Squared Euclidean distance between the row means of two feature
/// matrices.
pub fn feature_matching<T: Scalar>(g: &mut Graph<T>, real_features: NodeId, fake_features: NodeId) -> Result<NodeId> {
    let a = g.mean_rows(real_features)?;
    let b = g.mean_rows(fake_features)?;
    let d = g.sub(a, b)?;
    g.l2_squared(d)
}

/// Generator loss with encoder and discriminator frozen. `real_features`
/// are pooled discriminator features of the real sentences (one row each).
pub fn g_loss<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    real_features: &Tensor<T>,
    noise: &Tensor<T>,
    feature_match_weight: f64,
) -> Result<(Graph<T>, GLossNodes)> {
    if real_features.rows() == 0 || noise.rows() == 0 {
        return Err(Error::EmptyBatch("generator loss needs real features and noise".into()));
    }
    let mut g = Graph::new().freeze(ENCODER_PREFIX).freeze(DISCRIMINATOR_PREFIX);
    let n_fake = noise.rows();
    let fake_h = generate_batch(&mut g, store, cfg, noise)?;
    let fake_mask = vec![true; n_fake * cfg.max_len()];
    let fake = discriminate_batch(&mut g, store, cfg, fake_h, &fake_mask, n_fake)?;
    let ones = vec![T::one(); n_fake];
    let fool = g.bce_with_logits(fake.rf_logit, &ones)?;
    let real = g.constant(real_features.clone())?;
    let feature_match = feature_matching(&mut g, real, fake.pooled)?;
    let weighted = g.scale(feature_match, T::c(feature_match_weight))?;
    let total = g.add(fool, weighted)?;
    Ok((
        g,
        GLossNodes {
            fool,
            feature_match,
            total,
        },
    ))
}

/// Pooled discriminator features of a real batch (no gradients).
pub fn real_features<T: Scalar>(store: &ParamStore<T>, cfg: &ModelConfig, real: &EncodedBatch) -> Result<Tensor<T>> {
    let mut g = Graph::new().freeze("");
    let h = encode_batch(&mut g, store, cfg, real)?;
    let out = discriminate_batch(&mut g, store, cfg, h, &real.mask, real.size)?;
    Ok(g.value(out.pooled).clone())
}

/// Optimizer state for both players.
#[derive(Clone, Debug)]
pub struct Optimizers {
    pub d: AdamState<f32>,
    pub g: AdamState<f32>,
}

impl Optimizers {
    pub fn new(store: &ParamStore<f32>, cfg: &TrainConfig) -> Self {
        let mut d_ids = store.ids_with_prefix(ENCODER_PREFIX);
        d_ids.extend(store.ids_with_prefix(DISCRIMINATOR_PREFIX));
        Self {
            d: AdamState::new(store, d_ids, AdamConfig::with_lr(cfg.lr_d)),
            g: AdamState::new(
                store,
                store.ids_with_prefix(GENERATOR_PREFIX),
                AdamConfig::with_lr(cfg.lr_g),
            ),
        }
    }
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::Numeric(message) => Error::TrainingDiverged { step, message },
        other => other,
    }
}

fn finite_or_diverged(step: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::TrainingDiverged {
            step,
            message: format!("{what} is {v}"),
        })
    }
}

/// One discriminator update, then (in adversarial modes) one generator
/// update. `noise` must hold one row per real sentence in adversarial modes
/// and is ignored in supervised mode. Gradients are zeroed after each
/// update. `step` labels errors.
pub fn train_step(
    model: &mut SeqGan,
    opt: &mut Optimizers,
    cfg: &TrainConfig,
    labeled: &LabeledBatch,
    unlabeled: &EncodedBatch,
    noise: &Tensor<f32>,
    step: usize,
) -> Result<LossReport> {
    let adversarial = cfg.mode.is_adversarial();
    let empty = EncodedBatch::empty(model.config.max_len());
    let unlabeled = if cfg.unlabeled_enabled() { unlabeled } else { &empty };
    let mut report = LossReport::default();
    let store = &mut model.params;

    let (g, d) =
        d_loss(store, &model.config, labeled, unlabeled, adversarial.then_some(noise)).map_err(|e| at_step(step, e))?;
    report.l_sup = finite_or_diverged(step, "l_sup", f64::from(g.scalar_value(d.l_sup)))?;
    if let (Some(r), Some(f)) = (d.l_unsup_real, d.l_unsup_fake) {
        report.l_unsup_real = finite_or_diverged(step, "l_unsup_real", f64::from(g.scalar_value(r)))?;
        report.l_unsup_fake = finite_or_diverged(step, "l_unsup_fake", f64::from(g.scalar_value(f)))?;
    }
    report.l_d_total = report.l_sup + report.l_unsup_real + report.l_unsup_fake;
    g.backward(d.total, store).map_err(|e| at_step(step, e))?;
    drop(g);
    adam_step(store, &mut opt.d);
    store.zero_grads();

    if adversarial {
        let real = labeled.batch.concat(unlabeled);
        let features = real_features(store, &model.config, &real).map_err(|e| at_step(step, e))?;
        let (g, gl) =
            g_loss(store, &model.config, &features, noise, cfg.feature_match_weight).map_err(|e| at_step(step, e))?;
        report.l_g_fool = finite_or_diverged(step, "l_g_fool", f64::from(g.scalar_value(gl.fool)))?;
        report.l_g_fm = finite_or_diverged(step, "l_g_fm", f64::from(g.scalar_value(gl.feature_match)))?;
        report.l_g_total = report.l_g_fool + cfg.feature_match_weight * report.l_g_fm;
        g.backward(gl.total, store).map_err(|e| at_step(step, e))?;
        drop(g);
        adam_step(store, &mut opt.g);
        store.zero_grads();
    }
    Ok(report)
}

/// Cycles through indices in a fresh random order each epoch. A batch never
/// spans two epochs; the remainder of an epoch is dropped.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl EpochSampler {
    pub fn new(n: usize, rng: Rng) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self, k: usize) -> Vec<usize> {
        let n = self.order.len();
        if n == 0 {
            return Vec::new();
        }
        let k = k.min(n);
        if self.pos + k > n {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + k].to_vec();
        self.pos += k;
        out
    }
}

/// Training state over a corpus: model, optimizers, samplers and the noise
/// stream, all derived from the configured seed.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: SeqGan,
    pub opt: Optimizers,
    labeled: Vec<(Vec<usize>, Vec<bool>, Vec<usize>)>,
    unlabeled: Vec<(Vec<usize>, Vec<bool>)>,
    lab_sampler: EpochSampler,
    unl_sampler: EpochSampler,
    noise_rng: Rng,
    step: usize,
}

impl Trainer {
    pub fn new(corpus: &Corpus, vocab: &Vocabulary, model_cfg: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.labeled.is_empty() {
            return Err(Error::EmptyBatch("training needs at least one labeled sentence".into()));
        }
        if model_cfg.encoder.vocab_size != vocab.len() {
            return Err(Error::VocabMismatch {
                expected: format!("{} entries", model_cfg.encoder.vocab_size),
                actual: format!("{} entries", vocab.len()),
            });
        }
        let l = model_cfg.max_len();
        let model = SeqGan::new(model_cfg, seed::derive(cfg.seed, "model"))?;
        let opt = Optimizers::new(&model.params, &cfg);
        let labeled: Vec<_> = corpus.labeled.iter().map(|p| encode_labeled(p, vocab, l)).collect();
        let unlabeled: Vec<_> = if cfg.unlabeled_enabled() {
            corpus.unlabeled.iter().map(|u| vocab.encode(u.tokens(), l)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            lab_sampler: EpochSampler::new(labeled.len(), seed::rng(cfg.seed, "labeled-order")),
            unl_sampler: EpochSampler::new(unlabeled.len(), seed::rng(cfg.seed, "unlabeled-order")),
            noise_rng: seed::rng(cfg.seed, "noise"),
            cfg,
            model,
            opt,
            labeled,
            unlabeled,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn next_batches(&mut self) -> (LabeledBatch, EncodedBatch) {
        let l = self.model.config.max_len();
        let mut lab = LabeledBatch::empty(l);
        for i in self.lab_sampler.next_batch(self.cfg.batch_size_labeled) {
            let (ids, mask, t) = &self.labeled[i];
            lab.batch.push_encoded(ids, mask).expect("pre-encoded");
            lab.targets.extend_from_slice(t);
        }
        let mut unl = EncodedBatch::empty(l);
        for i in self.unl_sampler.next_batch(self.cfg.batch_size_unlabeled) {
            let (ids, mask) = &self.unlabeled[i];
            unl.push_encoded(ids, mask).expect("pre-encoded");
        }
        (lab, unl)
    }

    pub fn step(&mut self) -> Result<LossReport> {
        let (lab, unl) = self.next_batches();
        let n_fake = lab.size() + unl.size;
        let noise = if self.cfg.mode.is_adversarial() {
            sample_noise(&mut self.noise_rng, n_fake, self.model.config.generator.noise_dim)
        } else {
            Tensor::zeros(&[0, self.model.config.generator.noise_dim])
        };
        let report = train_step(&mut self.model, &mut self.opt, &self.cfg, &lab, &unl, &noise, self.step)?;
        self.step += 1;
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: LossReport,
    pub eval: Option<MetricReport>,
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("step,l_sup,l_unsup_real,l_unsup_fake,l_d_total,l_g_fool,l_g_fm,l_g_total,eval_f1\n");
    for r in history {
        let l = &r.loss;
        let f1 = r.eval.as_ref().map(|e| format!("{:.4}", e.f1)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.step + 1,
            l.l_sup,
            l.l_unsup_real,
            l.l_unsup_fake,
            l.l_d_total,
            l.l_g_fool,
            l.l_g_fm,
            l.l_g_total,
            f1
        );
    }
    s
}

/// Configs and vocabulary identity stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub step: usize,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the checkpoint and its sidecar metadata, each atomically.
pub fn save_trained(path: impl AsRef<Path>, params: &ParamStore<f32>, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    save_checkpoint(params, path)?;
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    crate::corpus::write_atomic(&meta_path(path), json.as_bytes())
}

pub fn load_trained(path: impl AsRef<Path>) -> Result<(SeqGan, CheckpointMeta)> {
    let path = path.as_ref();
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", mp.display())))?;
    let params = load_checkpoint(path)?;
    Ok((SeqGan::from_params(meta.model, params)?, meta))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SeqGan,
    /// Parameters with the highest held-out F1 and the step they were
    /// reached at; absent without a held-out set.
    pub best: Option<(usize, f64, ParamStore<f32>)>,
    pub history: Vec<HistoryRow>,
    pub vocab_hash: String,
}

impl TrainOutcome {
    pub fn meta(&self, cfg: &TrainConfig, step: usize) -> CheckpointMeta {
        CheckpointMeta {
            model: self.model.config,
            train: *cfg,
            vocab_hash: self.vocab_hash.clone(),
            vocab_size: self.model.config.encoder.vocab_size,
            step,
        }
    }
}

/// Where `train` writes checkpoints: `last.ckpt` at every evaluation,
/// `best.ckpt` whenever held-out F1 improves, `final.ckpt` at the end.
#[derive(Clone, Debug)]
pub struct CheckpointDir(pub PathBuf);

impl CheckpointDir {
    pub fn last(&self) -> PathBuf {
        self.0.join("last.ckpt")
    }

    pub fn best(&self) -> PathBuf {
        self.0.join("best.ckpt")
    }

    pub fn final_(&self) -> PathBuf {
        self.0.join("final.ckpt")
    }
}

/// Runs `cfg.steps` steps, evaluating on `heldout` every `cfg.eval_every`
/// steps and after the last one.
pub fn train(
    corpus: &Corpus,
    vocab: &Vocabulary,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    heldout: Option<&[ParallelPair]>,
    checkpoints: Option<&CheckpointDir>,
    mut on_step: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(corpus, vocab, model_cfg, *cfg)?;
    let vocab_hash = vocab.fingerprint();
    let mut history = Vec::with_capacity(cfg.steps);
    let mut best: Option<(usize, f64, ParamStore<f32>)> = None;
    if let Some(dir) = checkpoints {
        std::fs::create_dir_all(&dir.0).map_err(|e| Error::io(&dir.0, e))?;
    }
    let meta = |step: usize| CheckpointMeta {
        model: model_cfg,
        train: *cfg,
        vocab_hash: vocab_hash.clone(),
        vocab_size: vocab.len(),
        step,
    };
    for step in 0..cfg.steps {
        let loss = trainer.step()?;
        let last = step + 1 == cfg.steps;
        let periodic = cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0;
        let eval = match heldout {
            Some(pairs) if (periodic || last) && !pairs.is_empty() => {
                Some(evaluate_pairs(&trainer.model, vocab, pairs, 1)?)
            }
            _ => None,
        };
        if let Some(e) = &eval {
            if best.as_ref().is_none_or(|b| e.f1 > b.1) {
                best = Some((step + 1, e.f1, trainer.model.params.clone()));
                if let Some(dir) = checkpoints {
                    save_trained(dir.best(), &trainer.model.params, &meta(step + 1))?;
                }
            }
        }
        if let Some(dir) = checkpoints {
            if periodic || last {
                save_trained(dir.last(), &trainer.model.params, &meta(step + 1))?;
            }
        }
        let row = HistoryRow { step, loss, eval };
        on_step(&row);
        history.push(row);
    }
    if let Some(dir) = checkpoints {
        save_trained(dir.final_(), &trainer.model.params, &meta(cfg.steps))?;
    }
    Ok(TrainOutcome {
        model: trainer.model,
        best,
        history,
        vocab_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{mix_corpora, split_corpus};
    use crate::synth::{synthesize_corpus, toy::ToyLanguage, SynthConfig};

    fn tiny_model(v: usize) -> ModelConfig {
        let mut c = ModelConfig::desk(v);
        c.encoder.model_dim = 16;
        c.encoder.max_len = 12;
        c.encoder.ff_dim = 24;
        c.generator.noise_dim = 8;
        c.generator.hidden_dim = 16;
        c.discriminator.hidden_dim = 16;
        c
    }

    fn corpora() -> (Corpus, Corpus, Vocabulary) {
        let base = ToyLanguage::base();
        let lab = synthesize_corpus(
            &base.sentences(40, 1),
            &SynthConfig::conversational(0.2, 3),
            &base.lexicons(),
        )
        .unwrap();
        let dialect = ToyLanguage::dialect("xx", 0.4, 5);
        let unl = synthesize_corpus(
            &dialect.sentences(40, 2),
            &SynthConfig::conversational(0.2, 4),
            &dialect.lexicons(),
        )
        .unwrap();
        let mixed = mix_corpora(&lab, &unl);
        let vocab = Vocabulary::build(&[&mixed], 1).unwrap();
        (mixed, lab, vocab)
    }

    fn cfg(mode: TrainMode) -> TrainConfig {
        TrainConfig {
            steps: 6,
            batch_size_labeled: 4,
            batch_size_unlabeled: 4,
            eval_every: 3,
            ..TrainConfig::desk(mode, 11)
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TrainMode::ALL {
            assert_eq!(m.as_str().parse::<TrainMode>().unwrap(), m);
        }
        assert!("fewshot".parse::<TrainMode>().is_err());
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = EpochSampler::new(10, seed::rng(1, "s"));
        let mut seen: Vec<usize> = (0..2).flat_map(|_| s.next_batch(5)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(s.next_batch(50).len(), 10);
        assert!(EpochSampler::new(0, seed::rng(1, "s")).next_batch(3).is_empty());
    }

    #[test]
    fn untrained_real_fake_losses_near_ln2() {
        let (mixed, _, vocab) = corpora();
        let m = SeqGan::new(tiny_model(vocab.len()), 1).unwrap();
        let lab = LabeledBatch::from_pairs(&mixed.labeled[..4], &vocab, 12);
        let noise = sample_noise(&mut seed::rng(1, "n"), 4, 8);
        let (g, d) = d_loss(&m.params, &m.config, &lab, &EncodedBatch::empty(12), Some(&noise)).unwrap();
        let ln2 = std::f32::consts::LN_2;
        assert!((g.scalar_value(d.l_unsup_real.unwrap()) - ln2).abs() < 0.01);
        assert!((g.scalar_value(d.l_unsup_fake.unwrap()) - ln2).abs() < 0.01);
        let total =
            g.scalar_value(d.l_sup) + g.scalar_value(d.l_unsup_real.unwrap()) + g.scalar_value(d.l_unsup_fake.unwrap());
        assert!((g.scalar_value(d.total) - total).abs() < 1e-6);
    }

    #[test]
    fn empty_labeled_batch_rejected() {
        let (_, _, vocab) = corpora();
        let m = SeqGan::new(tiny_model(vocab.len()), 1).unwrap();
        let r = d_loss::<f32>(
            &m.params,
            &m.config,
            &LabeledBatch::empty(12),
            &EncodedBatch::empty(12),
            None,
        );
        assert!(matches!(r, Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn feature_matching_is_a_symmetric_distance() {
        let mut g = Graph::<f64>::new();
        let a = g
            .constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0]).unwrap())
            .unwrap();
        let b = g.constant(Tensor::matrix(1, 3, vec![2.0, 2.0, 2.0]).unwrap()).unwrap();
        let c = g
            .constant(Tensor::matrix(2, 3, vec![0.0, 1.0, 0.5, 1.0, -1.0, 0.0]).unwrap())
            .unwrap();
        let ab = feature_matching(&mut g, a, b).unwrap();
        assert_eq!(g.scalar_value(ab), 0.0);
        let ac = feature_matching(&mut g, a, c).unwrap();
        let ca = feature_matching(&mut g, c, a).unwrap();
        assert_eq!(g.scalar_value(ac), g.scalar_value(ca));
        assert!((g.scalar_value(ac) - (1.5f64.powi(2) + 2.0f64.powi(2) + 1.75f64.powi(2))).abs() < 1e-12);
    }

    #[test]
    fn generator_step_leaves_encoder_untouched_and_vice_versa() {
        let (mixed, _, vocab) = corpora();
        let c = cfg(TrainMode::AdversarialUnlabeled);
        let mut t = Trainer::new(&mixed, &vocab, tiny_model(vocab.len()), c).unwrap();
        let before = t.model.params.clone();
        let (lab, unl) = t.next_batches();
        let noise = sample_noise(&mut seed::rng(2, "n"), lab.size() + unl.size, 8);
        let features = real_features(&t.model.params, &t.model.config, &lab.batch.concat(&unl)).unwrap();
        let (g, gl) = g_loss(&t.model.params, &t.model.config, &features, &noise, 1.0).unwrap();
        g.backward(gl.total, &mut t.model.params).unwrap();
        adam_step(&mut t.model.params, &mut t.opt.g);
        for (id, p) in t.model.params.iter() {
            let was = before.get(id);
            if p.name.starts_with(GENERATOR_PREFIX) {
                continue;
            }
            assert_eq!(p.value, was.value, "{}", p.name);
        }
        assert_ne!(t.model.params.by_name("gen.l2.w"), before.by_name("gen.l2.w"));

        let before = t.model.params.clone();
        t.model.params.zero_grads();
        let (g, d) = d_loss(&t.model.params, &t.model.config, &lab, &unl, Some(&noise)).unwrap();
        g.backward(d.total, &mut t.model.params).unwrap();
        adam_step(&mut t.model.params, &mut t.opt.d);
        for (id, p) in t.model.params.iter() {
            if p.name.starts_with(GENERATOR_PREFIX) {
                assert_eq!(p.value, before.get(id).value, "{}", p.name);
            }
        }
    }

    #[test]
    fn loss_decomposition_and_history() {
        let (mixed, lab, vocab) = corpora();
        let (train_c, held) = split_corpus(&lab, 30, 1).unwrap();
        let mut mixed_train = mixed.clone();
        mixed_train.labeled = train_c.labeled;
        let c = cfg(TrainMode::AdversarialUnlabeled);
        let out = train(
            &mixed_train,
            &vocab,
            tiny_model(vocab.len()),
            &c,
            Some(&held.labeled),
            None,
            |_| {},
        )
        .unwrap();
        assert_eq!(out.history.len(), c.steps);
        for r in &out.history {
            let l = &r.loss;
            assert!(l.is_finite());
            assert_eq!(l.l_d_total, l.l_sup + l.l_unsup_real + l.l_unsup_fake);
            assert_eq!(l.l_g_total, l.l_g_fool + c.feature_match_weight * l.l_g_fm);
            assert!(l.l_unsup_real > 0.0 && l.l_g_fool > 0.0);
        }
        let evals: Vec<usize> = out
            .history
            .iter()
            .filter(|r| r.eval.is_some())
            .map(|r| r.step + 1)
            .collect();
        assert_eq!(evals, vec![3, 6]);
        assert!(out.best.is_some());
        let csv = history_csv(&out.history);
        assert_eq!(csv.lines().count(), c.steps + 1);
    }

    #[test]
    fn supervised_mode_uses_only_token_loss() {
        let (mixed, _, vocab) = corpora();
        let c = cfg(TrainMode::Supervised);
        let out = train(&mixed, &vocab, tiny_model(vocab.len()), &c, None, None, |_| {}).unwrap();
        let init = SeqGan::new(tiny_model(vocab.len()), seed::derive(c.seed, "model")).unwrap();
        for r in &out.history {
            assert_eq!(r.loss.l_d_total, r.loss.l_sup);
            assert_eq!(r.loss.l_g_total, 0.0);
        }
        assert_eq!(out.model.params.by_name("gen.l1.w"), init.params.by_name("gen.l1.w"));
    }

    #[test]
    fn empty_unlabeled_set_matches_adversarial_mode() {
        let (_, lab, vocab) = corpora();
        let run = |mode| {
            train(&lab, &vocab, tiny_model(vocab.len()), &cfg(mode), None, None, |_| {})
                .unwrap()
                .history
                .into_iter()
                .map(|r| r.loss)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(TrainMode::Adversarial), run(TrainMode::AdversarialUnlabeled));
    }

    #[test]
    fn checkpoints_and_metadata_round_trip() {
        let (mixed, lab, vocab) = corpora();
        let dir = tempfile::tempdir().unwrap();
        let ck = CheckpointDir(dir.path().join("run"));
        let c = cfg(TrainMode::Adversarial);
        let out = train(
            &mixed,
            &vocab,
            tiny_model(vocab.len()),
            &c,
            Some(&lab.labeled[..5]),
            Some(&ck),
            |_| {},
        )
        .unwrap();
        let (m, meta) = load_trained(ck.final_()).unwrap();
        assert_eq!(m.params, out.model.params);
        assert_eq!(meta.vocab_hash, vocab.fingerprint());
        assert_eq!(meta.step, c.steps);
        assert_eq!(meta.train, c);
        assert!(ck.best().exists() && ck.last().exists());
        assert!(meta_path(&ck.best()).exists());
    }
}
