//! `disfluency`: synthesis, training, evaluation and correction.
//!
//! Exit codes: 0 success, 2 data or usage error, 3 numeric training error,
//! 4 checkpoint/vocabulary mismatch, 5 diagnostic failure.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disfluency_core::corpus::{
    load_corpus, mix_corpora, save_corpus, write_atomic, Corpus, CorpusFormat, ParallelPair,
};
use disfluency_core::evaluate::{apply_correction, predict, render_table, score_pairs, MetricReport, TableRow};
use disfluency_core::seqgan::{sample_noise, EncodedBatch, ModelConfig, SeqGan};
use disfluency_core::synth::{synthesize_with_report, Lexicons};
use disfluency_core::tensor::{grad_check, ParamStore, Tensor};
use disfluency_core::textnorm::{normalize, Vocabulary};
use disfluency_core::trainer::{
    d_loss, g_loss, history_csv, load_trained, real_features, train, CheckpointDir, LabeledBatch, TrainMode,
};
use disfluency_core::{seed, Error};
use rand::Rng;
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Diagnostic(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Numeric(_) | Error::TrainingDiverged { .. }) => 3,
            CliError::Core(Error::VocabMismatch { .. } | Error::Checkpoint(_)) => 4,
            CliError::Core(_) => 2,
            CliError::Diagnostic(_) => 5,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Diagnostic(_) => "DIAGNOSTIC_FAILURE",
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "disfluency",
    version,
    about = "Disfluency correction with adversarial semi-supervised tagging"
)]
struct Cli {
    /// Config file of `key = value` lines (default: $DISFLUENCY_CONFIG, else ./disfluency.conf if present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every component derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for synthesis and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inject disfluencies into fluent text and write a labeled corpus.
    Synth(SynthArgs),
    /// Train a tagger.
    Train(TrainArgs),
    /// Score checkpoints (or a prediction file) on a labeled test corpus.
    Eval(EvalArgs),
    /// Remove predicted disfluencies from raw text, one sentence per line.
    Correct(CorrectArgs),
    /// Finite-difference check of the full training losses on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Fluent text, one sentence per line.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    budget: Option<f64>,
    /// `conversational`, `all`, or a comma-separated list of types.
    #[arg(long)]
    types: Option<String>,
    #[arg(long)]
    max_injections: Option<usize>,
    #[arg(long)]
    language: Option<String>,
    /// Output corpus (`.jsonl` or `.tsv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    labeled: Option<PathBuf>,
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Labeled corpus for periodic evaluation and best-checkpoint selection.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// supervised | adversarial | adversarial+unlabeled
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Output directory for checkpoints, vocabulary and history.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint(s) to compare; each needs its `.meta.json` sidecar.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Vocabulary file (default: vocab.txt next to the checkpoint).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Labeled corpus holding predicted labels, scored instead of a model.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Report path prefix; writes PREFIX.txt and PREFIX.json.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CorrectArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Raw text, one sentence per line.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Coordinates sampled per parameter tensor.
    #[arg(long, default_value_t = 64)]
    coords: usize,
}

fn opt_path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn load_any(path: &Path) -> CliResult<Corpus> {
    Ok(load_corpus(path, CorpusFormat::from_path(path))?)
}

fn cmd_synth(cfg: &mut RunConfig, a: &SynthArgs) -> CliResult {
    cfg.set_opt("input", opt_path(&a.input))?;
    cfg.set_opt("lexicon", opt_path(&a.lexicon))?;
    cfg.set_opt("output", opt_path(&a.out))?;
    cfg.set_opt("budget", a.budget)?;
    cfg.set_opt("types", a.types.clone())?;
    cfg.set_opt("max_injections", a.max_injections)?;
    cfg.set_opt("language", a.language.clone())?;
    let input = cfg.existing_path("input")?;
    let lex_path = cfg.require_path("lexicon")?;
    let out = cfg.require_path("output")?;
    let lex = Lexicons::load(&lex_path, cfg.raw("language"))?;
    let synth = cfg.synth_config()?;

    let sentences: Vec<Vec<String>> = read_lines(&input)?
        .iter()
        .map(|l| normalize(l))
        .filter(|s| !s.is_empty())
        .collect();
    let (corpus, report) = synthesize_with_report(&sentences, &synth, &lex, cfg.get("jobs")?)?;
    save_corpus(&corpus, &out, CorpusFormat::from_path(&out))?;
    println!("sentences={}", report.sentences);
    println!("tokens={}", report.tokens);
    println!("disfluent_tokens={}", report.disfluent_tokens);
    println!("disfluent_fraction={:.4}", report.achieved_fraction);
    for (t, n) in &report.type_counts {
        println!("type.{t}={n}");
    }
    Ok(())
}

fn cmd_train(cfg: &mut RunConfig, a: &TrainArgs) -> CliResult {
    cfg.set_opt("labeled", opt_path(&a.labeled))?;
    cfg.set_opt("unlabeled", opt_path(&a.unlabeled))?;
    cfg.set_opt("heldout", opt_path(&a.heldout))?;
    cfg.set_opt("mode", a.mode.clone())?;
    cfg.set_opt("steps", a.steps)?;
    cfg.set_opt("eval_every", a.eval_every)?;
    cfg.set_opt("output", opt_path(&a.out))?;
    let tc = cfg.train_config()?;
    let labeled_path = cfg.existing_path("labeled")?;
    let out = cfg.require_path("output")?;
    let unlabeled_path = match cfg.path("unlabeled") {
        Some(p) if tc.mode != TrainMode::AdversarialUnlabeled => {
            eprintln!("warning: --unlabeled {} ignored in {} mode", p.display(), tc.mode);
            None
        }
        Some(_) => Some(cfg.existing_path("unlabeled")?),
        None => None,
    };
    let heldout_path = cfg.path("heldout").map(|_| cfg.existing_path("heldout")).transpose()?;

    let labeled = load_any(&labeled_path)?;
    let corpus = match &unlabeled_path {
        Some(p) => mix_corpora(&labeled, &load_any(p)?),
        None if tc.unlabeled_enabled() => labeled,
        None => Corpus::with_labeled(labeled.language().to_string(), labeled.labeled)?,
    };
    let heldout: Option<Vec<ParallelPair>> = heldout_path.map(|p| load_any(&p).map(|c| c.labeled)).transpose()?;

    let vocab = Vocabulary::build(&[&corpus], cfg.get("min_freq")?)?;
    let model_cfg = cfg.model_config(vocab.len())?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    vocab.save(out.join("vocab.txt"))?;
    eprintln!(
        "training {} on {} labeled + {} unlabeled sentences, vocabulary {}",
        tc.mode,
        corpus.labeled.len(),
        corpus.unlabeled.len(),
        vocab.len()
    );
    let dir = CheckpointDir(out.clone());
    let outcome = train(&corpus, &vocab, model_cfg, &tc, heldout.as_deref(), Some(&dir), |row| {
        if let Some(e) = &row.eval {
            eprintln!(
                "step {:>6}  l_d {:.4}  l_g {:.4}  heldout F1 {:.2}",
                row.step + 1,
                row.loss.l_d_total,
                row.loss.l_g_total,
                e.f1
            );
        }
    })?;
    write_atomic(&out.join("history.csv"), history_csv(&outcome.history).as_bytes())?;
    println!("checkpoint={}", dir.final_().display());
    if let Some((step, f1, _)) = &outcome.best {
        println!(
            "best_checkpoint={} step={step} heldout_f1={f1:.2}",
            dir.best().display()
        );
    }
    Ok(())
}

fn vocab_for(explicit: Option<PathBuf>, checkpoint: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| checkpoint.with_file_name("vocab.txt"))
}

fn load_model(checkpoint: &Path, vocab: Option<PathBuf>) -> CliResult<(SeqGan, String, Vocabulary)> {
    let (model, meta) = load_trained(checkpoint)?;
    let vocab = Vocabulary::load(vocab_for(vocab, checkpoint))?;
    Ok((model, meta.vocab_hash, vocab))
}

fn write_report(prefix: &Path, report: &MetricReport) -> CliResult {
    let with_ext = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    write_atomic(&with_ext(".txt"), report.to_key_value().as_bytes())?;
    write_atomic(&with_ext(".json"), report.to_json().as_bytes())?;
    Ok(())
}

fn cmd_eval(cfg: &mut RunConfig, a: &EvalArgs) -> CliResult {
    cfg.set_opt("test", opt_path(&a.test))?;
    cfg.set_opt("vocab", opt_path(&a.vocab))?;
    cfg.set_opt("report", opt_path(&a.report))?;
    let test = load_any(&cfg.existing_path("test")?)?;
    let jobs: usize = cfg.get("jobs")?;
    let mut checkpoints = a.checkpoint.clone();
    if checkpoints.is_empty() && a.pred.is_none() {
        checkpoints.push(cfg.existing_path("checkpoint")?);
    }

    let mut rows = Vec::new();
    if let Some(pred_path) = &a.pred {
        let pred = load_any(pred_path)?;
        let labels: Vec<&[_]> = pred.labeled.iter().map(|p| p.disfluent().labels()).collect();
        let report = score_pairs(&test.labeled, &labels)?;
        rows.push((pred_path.display().to_string(), report));
    }
    let sentences: Vec<&[String]> = test.labeled.iter().map(|p| p.disfluent().tokens()).collect();
    for ck in &checkpoints {
        let (model, hash, vocab) = load_model(ck, cfg.path("vocab"))?;
        let pred = predict(&model, &hash, &vocab, &sentences, jobs)?;
        rows.push((ck.display().to_string(), score_pairs(&test.labeled, &pred)?));
    }

    for (name, report) in &rows {
        println!("# {name}");
        print!("{}", report.to_key_value());
        if report.degenerate {
            eprintln!("warning: {name}: no DISFLUENT tokens in gold or prediction; scores are 0 by convention");
        }
    }
    if rows.len() > 1 {
        let table: Vec<TableRow> = rows
            .iter()
            .map(|(n, r)| TableRow {
                system: n.clone(),
                reports: vec![r.clone()],
            })
            .collect();
        print!("{}", render_table(&table));
    }
    if let Some(prefix) = cfg.path("report") {
        if rows.len() == 1 {
            write_report(&prefix, &rows[0].1)?;
        } else {
            for (i, (_, r)) in rows.iter().enumerate() {
                let mut p = prefix.as_os_str().to_owned();
                p.push(format!(".{i}"));
                write_report(Path::new(&p), r)?;
            }
        }
    }
    Ok(())
}

fn cmd_correct(cfg: &mut RunConfig, a: &CorrectArgs) -> CliResult {
    cfg.set_opt("checkpoint", opt_path(&a.checkpoint))?;
    cfg.set_opt("vocab", opt_path(&a.vocab))?;
    cfg.set_opt("input", opt_path(&a.input))?;
    cfg.set_opt("output", opt_path(&a.out))?;
    let ck = cfg.existing_path("checkpoint")?;
    let input = cfg.existing_path("input")?;
    let (model, hash, vocab) = load_model(&ck, cfg.path("vocab"))?;
    let sentences: Vec<Vec<String>> = read_lines(&input)?.iter().map(|l| normalize(l)).collect();
    let pred = predict(&model, &hash, &vocab, &sentences, cfg.get("jobs")?)?;
    let mut out = String::new();
    for (s, labels) in sentences.iter().zip(&pred) {
        let n = labels.len();
        let mut kept = apply_correction(&s[..n], labels)?;
        kept.extend_from_slice(&s[n..]);
        out.push_str(&kept.join(" "));
        out.push('\n');
    }
    match cfg.path("output") {
        Some(p) => write_atomic(&p, out.as_bytes())?,
        None => std::io::stdout().write_all(out.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })?,
    }
    Ok(())
}

fn tiny_model() -> ModelConfig {
    let mut c = ModelConfig::desk(24);
    c.encoder.model_dim = 8;
    c.encoder.max_len = 6;
    c.encoder.ff_dim = 12;
    c.generator.noise_dim = 4;
    c.generator.hidden_dim = 8;
    c.discriminator.hidden_dim = 8;
    c
}

fn cmd_gradcheck(cfg: &RunConfig, a: &GradcheckArgs) -> CliResult {
    const TOLERANCE: f64 = 1e-3;
    let s = cfg.seed()?;
    let mc = tiny_model();
    let v = mc.encoder.vocab_size;
    let l = mc.max_len();
    let mut store: ParamStore<f64> = SeqGan::new(mc, seed::derive(s, "gradcheck-model"))?.params.cast();
    let mut rng = seed::rng(s, "gradcheck-data");
    let mut lab = LabeledBatch::empty(l);
    let mut unl = EncodedBatch::empty(l);
    for i in 0..4 {
        let len = rng.random_range(2..=l);
        let ids: Vec<usize> = (0..l)
            .map(|t| if t < len { rng.random_range(2..v) } else { 0 })
            .collect();
        let mask: Vec<bool> = (0..l).map(|t| t < len).collect();
        if i < 2 {
            lab.batch.push_encoded(&ids, &mask)?;
            lab.targets
                .extend((0..l).map(|t| usize::from(t < len && rng.random_bool(0.3))));
        } else {
            unl.push_encoded(&ids, &mask)?;
        }
    }
    let noise: Tensor<f64> = sample_noise(&mut rng, 4, mc.generator.noise_dim).cast();

    let mut d_ids = store.ids_with_prefix("enc.");
    d_ids.extend(store.ids_with_prefix("disc."));
    let d = grad_check(&mut store, &d_ids, 1e-4, a.coords, s, |p| {
        let (g, n) = d_loss(p, &mc, &lab, &unl, Some(&noise))?;
        Ok((g, n.total))
    })?;
    let features = real_features(&store, &mc, &lab.batch.concat(&unl))?;
    let g_ids = store.ids_with_prefix("gen.");
    let g = grad_check(&mut store, &g_ids, 1e-4, a.coords, s, |p| {
        let (g, n) = g_loss(p, &mc, &features, &noise, 1.0)?;
        Ok((g, n.total))
    })?;
    let (worst, name) = if d.max_rel_error >= g.max_rel_error {
        (d.max_rel_error, d.worst_param.clone())
    } else {
        (g.max_rel_error, g.worst_param.clone())
    };
    println!(
        "checked {} coordinates in {} parameters",
        d.coordinates_checked() + g.coordinates_checked(),
        d.per_param.len() + g.per_param.len()
    );
    println!("max_relative_error={worst:.3e} worst_parameter={name}");
    if worst < TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Diagnostic(format!(
            "gradient check failed: relative error {worst:.3e} in {name} exceeds {TOLERANCE}"
        )))
    }
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    cfg.set_opt("seed", cli.seed)?;
    cfg.set_opt("jobs", cli.jobs)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&mut cfg, a),
        Command::Train(a) => cmd_train(&mut cfg, a),
        Command::Eval(a) => cmd_eval(&mut cfg, a),
        Command::Correct(a) => cmd_correct(&mut cfg, a),
        Command::Gradcheck(a) => cmd_gradcheck(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
