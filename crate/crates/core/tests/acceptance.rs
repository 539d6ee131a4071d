//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,5` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use disfluency_core::corpus::{DisfluencyType, LabelTag};
use disfluency_core::evaluate::{apply_correction, predict, render_table, score, MetricReport, TableRow};
use disfluency_core::experiment::{build_ablation_data, run_ablation, AblationData, AblationSetup};
use disfluency_core::seed;
use disfluency_core::seqgan::{sample_noise, EncodedBatch, ModelConfig, SeqGan};
use disfluency_core::synth::{synthesize_corpus, synthesize_with_report, toy::ToyLanguage, SynthConfig};
use disfluency_core::tensor::{grad_check, Graph, ParamStore, Tensor};
use disfluency_core::textnorm::Vocabulary;
use disfluency_core::trainer::{
    build_d_loss, d_loss, g_loss, load_trained, real_features, save_trained, train, LabeledBatch, TrainConfig,
    TrainMode, Trainer,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn all_types_config(budget: f64, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::conversational(budget, seed);
    cfg.set_weight(DisfluencyType::Stutter, 1.0);
    cfg
}

fn synthesis_round_trip() -> Outcome {
    let start = Instant::now();
    let lang = ToyLanguage::base();
    let fluent = lang.sentences(10_000, 11);
    let (corpus, report) =
        synthesize_with_report(&fluent, &all_types_config(0.2, 12), &lang.lexicons(), 1).map_err(err)?;
    let elapsed = start.elapsed();
    let mut failures = 0;
    for (pair, original) in corpus.labeled.iter().zip(&fluent) {
        let s = pair.disfluent();
        let recovered = apply_correction(s.tokens(), s.labels()).map_err(err)?;
        if recovered != *original || pair.fluent() != original.as_slice() {
            failures += 1;
        }
    }
    let missing: Vec<_> = DisfluencyType::ALL
        .iter()
        .filter(|t| report.type_counts.get(t).copied().unwrap_or(0) == 0)
        .collect();
    check(
        corpus.labeled.len() == 10_000 && failures == 0 && missing.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "10000 pairs, all 7 types, 0 recovery failures, {:.1}s",
            elapsed.as_secs_f64()
        ),
        format!(
            "{} pairs, {failures} recovery failures, types missing {missing:?}, {:.1}s",
            corpus.labeled.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn budget_control() -> Outcome {
    let lang = ToyLanguage::base();
    let fluent = lang.sentences(500, 21);
    let corpus = synthesize_corpus(&fluent, &all_types_config(0.2, 22), &lang.lexicons()).map_err(err)?;
    let (mut d, mut t) = (0usize, 0usize);
    for pair in &corpus.labeled {
        for l in pair.disfluent().labels() {
            t += 1;
            d += usize::from(*l == LabelTag::Disfluent);
        }
    }
    let frac = d as f64 / t as f64;
    check(
        corpus.labeled.len() == 500 && (frac - 0.2).abs() <= 0.02,
        format!("DISFLUENT fraction {frac:.4} ({d}/{t})"),
        format!("DISFLUENT fraction {frac:.4} ({d}/{t}) outside 0.20 ± 0.02"),
    )
}

fn tiny_gradcheck_model(vocab_size: usize) -> ModelConfig {
    let mut c = ModelConfig::desk(vocab_size);
    c.encoder.model_dim = 16;
    c.encoder.max_len = 8;
    c.encoder.n_layers = 2;
    c.encoder.n_heads = 2;
    c.encoder.ff_dim = 32;
    c.generator.noise_dim = 8;
    c.generator.hidden_dim = 16;
    c.discriminator.hidden_dim = 16;
    c
}

fn random_labeled(rng: &mut impl Rng, n: usize, v: usize, l: usize) -> LabeledBatch {
    let mut b = LabeledBatch::empty(l);
    for _ in 0..n {
        let len = rng.random_range(2..=l);
        let ids: Vec<usize> = (0..l)
            .map(|i| if i < len { rng.random_range(2..v) } else { 0 })
            .collect();
        let mask: Vec<bool> = (0..l).map(|i| i < len).collect();
        b.batch.push_encoded(&ids, &mask).unwrap();
        b.targets
            .extend((0..l).map(|i| usize::from(i < len && rng.random_bool(0.3))));
    }
    b
}

fn random_unlabeled(rng: &mut impl Rng, n: usize, v: usize, l: usize) -> EncodedBatch {
    random_labeled(rng, n, v, l).batch
}

fn gradient_checks() -> Outcome {
    const COORDS: usize = 64;
    let start = Instant::now();
    let cfg = tiny_gradcheck_model(40);
    let mut store: ParamStore<f64> = SeqGan::new(cfg, 3).map_err(err)?.params.cast();
    let mut rng = seed::rng(3, "gradcheck-data");
    let lab = random_labeled(&mut rng, 3, 40, 8);
    let unl = random_unlabeled(&mut rng, 2, 40, 8);
    let noise: Tensor<f64> = sample_noise(&mut rng, 5, 8).cast();

    let mut d_ids = store.ids_with_prefix("enc.");
    d_ids.extend(store.ids_with_prefix("disc."));
    let d_report = grad_check(&mut store, &d_ids, 1e-4, COORDS, 1, |s| {
        let (g, n) = d_loss(s, &cfg, &lab, &unl, Some(&noise))?;
        Ok((g, n.total))
    })
    .map_err(err)?;

    let features = real_features(&store, &cfg, &lab.batch.concat(&unl)).map_err(err)?;
    let g_ids = store.ids_with_prefix("gen.");
    let g_report = grad_check(&mut store, &g_ids, 1e-4, COORDS, 2, |s| {
        let (g, n) = g_loss(s, &cfg, &features, &noise, 1.0)?;
        Ok((g, n.total))
    })
    .map_err(err)?;

    let elapsed = start.elapsed();
    let groups = d_report.per_param.len() + g_report.per_param.len();
    let under_sampled: Vec<_> = d_report
        .per_param
        .iter()
        .chain(&g_report.per_param)
        .filter(|(name, _, n)| *n < COORDS && *n < store.by_name(name).unwrap().value.numel())
        .map(|p| p.0.clone())
        .collect();
    let worst = d_report.max_rel_error.max(g_report.max_rel_error);
    let worst_name = if d_report.max_rel_error >= g_report.max_rel_error {
        &d_report.worst_param
    } else {
        &g_report.worst_param
    };
    check(
        worst < 1e-3 && under_sampled.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{groups} parameter groups, {} coordinates, max relative error {worst:.2e}, {:.1}s",
            d_report.coordinates_checked() + g_report.coordinates_checked(),
            elapsed.as_secs_f64()
        ),
        format!(
            "max relative error {worst:.2e} at {worst_name}, under-sampled {under_sampled:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn unlabeled_isolation() -> Outcome {
    let cfg = tiny_gradcheck_model(40);
    let mut model = SeqGan::new(cfg, 4).map_err(err)?;
    let mut rng = seed::rng(4, "isolation");
    let unl = random_unlabeled(&mut rng, 6, 40, 8);
    let noise = sample_noise(&mut rng, 6, 8);
    let mut g = Graph::new().freeze("gen.");
    let nodes = build_d_loss(&mut g, &model.params, &cfg, &LabeledBatch::empty(8), &unl, Some(&noise)).map_err(err)?;
    model.params.zero_grads();
    g.backward(nodes.total, &mut model.params).map_err(err)?;
    let head_grad_nonzero: usize = ["disc.tok.w", "disc.tok.b"]
        .iter()
        .map(|n| {
            model
                .params
                .by_name(n)
                .unwrap()
                .grad
                .data()
                .iter()
                .filter(|&&x| x != 0.0)
                .count()
        })
        .sum();
    let encoder_grad_nonzero = model
        .params
        .ids_with_prefix("enc.")
        .into_iter()
        .any(|id| model.params.get(id).grad.data().iter().any(|&x| x != 0.0));
    check(
        head_grad_nonzero == 0 && g.scalar_value(nodes.l_sup) == 0.0 && encoder_grad_nonzero,
        "token-head gradient from an unlabeled-only batch is exactly 0 (encoder still receives real/fake gradient)",
        format!("{head_grad_nonzero} non-zero token-head gradient entries"),
    )
}

fn brute_force_counts(gold: &[Vec<LabelTag>], pred: &[Vec<LabelTag>]) -> (usize, usize, usize) {
    let mut m = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        for i in 0..g.len() {
            m[usize::from(g[i] == LabelTag::Disfluent)][usize::from(p[i] == LabelTag::Disfluent)] += 1;
        }
    }
    (m[1][1], m[0][1], m[1][0])
}

fn metric_oracle() -> Outcome {
    let mut rng = seed::rng(5, "metric-oracle");
    let tag = |rng: &mut seed::Rng| {
        if rng.random_bool(0.3) {
            LabelTag::Disfluent
        } else {
            LabelTag::Fluent
        }
    };
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(0..20);
        gold.push((0..n).map(|_| tag(&mut rng)).collect::<Vec<_>>());
        pred.push((0..n).map(|_| tag(&mut rng)).collect::<Vec<_>>());
    }
    let r = score(&gold, &pred).map_err(err)?;
    let (tp, fp, fn_) = brute_force_counts(&gold, &pred);
    let expected = MetricReport::from_counts(tp, fp, fn_);
    let p = 100.0 * tp as f64 / (tp + fp) as f64;
    let rc = 100.0 * tp as f64 / (tp + fn_) as f64;
    let f1 = 2.0 * p * rc / (p + rc);
    use LabelTag::{Disfluent as D, Fluent as F};
    let hand = score(&[vec![D, F, F, D]], &[vec![D, D, F, F]]).map_err(err)?;
    check(
        (r.tp, r.fp, r.fn_) == (tp, fp, fn_)
            && r.precision == p
            && r.recall == rc
            && r.f1 == f1
            && r.f1 == expected.f1
            && (hand.tp, hand.fp, hand.fn_) == (1, 1, 1)
            && (hand.precision, hand.recall, hand.f1) == (50.0, 50.0, 50.0),
        format!("1000 random pairs match the recount (tp={tp} fp={fp} fn={fn_}); hand case P=R=F1=50.0"),
        format!(
            "score {:?} vs recount ({tp}, {fp}, {fn_}); hand case {hand:?}",
            (r.tp, r.fp, r.fn_)
        ),
    )
}

fn determinism() -> Outcome {
    let data = build_ablation_data(&AblationSetup::default()).map_err(err)?;
    let corpus = data.training_corpus(TrainMode::AdversarialUnlabeled);
    let vocab = Vocabulary::build(&[&corpus], 1).map_err(err)?;
    let cfg = TrainConfig::desk(TrainMode::AdversarialUnlabeled, 77);
    let run = || -> Result<Vec<_>, String> {
        let mut t = Trainer::new(&corpus, &vocab, ModelConfig::desk(vocab.len()), cfg).map_err(err)?;
        (0..50).map(|_| t.step().map_err(err)).collect()
    };
    let (a, b) = (run()?, run()?);
    check(
        a == b && a.len() == 50,
        "50 LossReports bit-identical across two runs",
        "LossReport sequences differ",
    )
}

/// Training settings for the mode ablation.
fn ablation_train_config() -> TrainConfig {
    TrainConfig {
        steps: 1000,
        eval_every: 0,
        ..TrainConfig::desk(TrainMode::Supervised, 0)
    }
}

const ABLATION_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn ablation(rows: &mut Option<Vec<TableRow>>) -> Outcome {
    let start = Instant::now();
    let data: AblationData = build_ablation_data(&AblationSetup::default()).map_err(err)?;
    let table = run_ablation(
        &data,
        ModelConfig::desk,
        &ablation_train_config(),
        &TrainMode::ALL,
        &ABLATION_SEEDS,
        |mode, s, r| {
            eprintln!(
                "  {mode} seed {s}: P {:.2} R {:.2} F1 {:.2}",
                r.precision, r.recall, r.f1
            )
        },
    )
    .map_err(err)?;
    let elapsed = start.elapsed();
    eprint!("{}", render_table(&table));
    let (sup, adv, full) = (table[0].mean_f1(), table[1].mean_f1(), table[2].mean_f1());
    *rows = Some(table);
    let summary = format!(
        "mean F1 supervised {sup:.2}, adversarial {adv:.2}, adversarial+unlabeled {full:.2}, {:.0}s",
        elapsed.as_secs_f64()
    );
    check(
        full >= adv && full >= sup + 2.0 && elapsed < Duration::from_secs(45 * 60),
        summary.clone(),
        summary,
    )
}

fn recall_behavior(rows: &Option<Vec<TableRow>>) -> Outcome {
    let rows = rows.as_ref().ok_or("ablation did not run")?;
    let (sup, full) = (&rows[0], &rows[2]);
    let recall_gain = full.mean_recall() - sup.mean_recall();
    let precision_drop = (sup.mean_precision() - full.mean_precision()).max(0.0);
    let summary = format!(
        "recall {:.2} -> {:.2} (gain {recall_gain:.2}), precision {:.2} -> {:.2} (drop {precision_drop:.2})",
        sup.mean_recall(),
        full.mean_recall(),
        sup.mean_precision(),
        full.mean_precision()
    );
    check(
        recall_gain > 0.0 && precision_drop < recall_gain,
        summary.clone(),
        summary,
    )
}

fn stutter_setup() -> AblationSetup {
    AblationSetup {
        only_type: Some(DisfluencyType::Stutter),
        ..AblationSetup::default()
    }
}

struct StutterRun {
    data: AblationData,
    vocab: Vocabulary,
    model: SeqGan,
    vocab_hash: String,
    cfg: TrainConfig,
}

fn stutter_protocol(out: &mut Option<StutterRun>) -> Outcome {
    let data = build_ablation_data(&stutter_setup()).map_err(err)?;
    if data.labeled.labeled.len() + data.test.labeled.len() != 250 {
        return Err("stutter corpus is not 250 pairs".into());
    }
    let mode = TrainMode::AdversarialUnlabeled;
    let corpus = data.training_corpus(mode);
    let vocab = Vocabulary::build(&[&corpus], 1).map_err(err)?;
    let cfg = TrainConfig {
        eval_every: 0,
        ..ablation_train_config()
    };
    let cfg = TrainConfig { mode, seed: 9, ..cfg };
    let trained = train(
        &corpus,
        &vocab,
        ModelConfig::desk(vocab.len()),
        &cfg,
        None,
        None,
        |_| {},
    )
    .map_err(err)?;
    let sentences: Vec<&[String]> = data.test.labeled.iter().map(|p| p.disfluent().tokens()).collect();
    let pred = predict(&trained.model, &trained.vocab_hash, &vocab, &sentences, 1).map_err(err)?;
    let report = disfluency_core::evaluate::score_pairs(&data.test.labeled, &pred).map_err(err)?;
    let summary = format!(
        "150/100 split, test P {:.2} R {:.2} F1 {:.2}",
        report.precision, report.recall, report.f1
    );
    *out = Some(StutterRun {
        data,
        vocab,
        model: trained.model,
        vocab_hash: trained.vocab_hash,
        cfg,
    });
    check(report.f1 > 80.0, summary.clone(), summary)
}

fn checkpoint_round_trip(run: &Option<StutterRun>) -> Outcome {
    let run = run.as_ref().ok_or("no trained model")?;
    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("model.ckpt");
    let meta = disfluency_core::trainer::CheckpointMeta {
        model: run.model.config,
        train: run.cfg,
        vocab_hash: run.vocab_hash.clone(),
        vocab_size: run.vocab.len(),
        step: run.cfg.steps,
    };
    save_trained(&path, &run.model.params, &meta).map_err(err)?;
    let (loaded, loaded_meta) = load_trained(&path).map_err(err)?;
    let sentences: Vec<&[String]> = run.data.test.labeled.iter().map(|p| p.disfluent().tokens()).collect();
    let before = predict(&run.model, &run.vocab_hash, &run.vocab, &sentences, 1).map_err(err)?;
    let after = predict(&loaded, &loaded_meta.vocab_hash, &run.vocab, &sentences, 1).map_err(err)?;
    let batch = EncodedBatch::from_sentences(&sentences, &run.vocab, run.model.config.max_len());
    let logits_before = run.model.token_logits(&batch).map_err(err)?;
    let logits_after = loaded.token_logits(&batch).map_err(err)?;
    let bits_equal = logits_before
        .data()
        .iter()
        .zip(logits_after.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    check(
        before == after && bits_equal && loaded.params == run.model.params,
        format!(
            "{} test sentences: labels and logits bit-identical after reload",
            sentences.len()
        ),
        "predictions differ after reload",
    )
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|s| s.contains(&n));
    let mut ablation_rows = None;
    let mut stutter = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag}: {name}: {detail}");
    };
    if wanted(1) {
        report(1, "synthesis round trip", synthesis_round_trip());
    }
    if wanted(2) {
        report(2, "budget control", budget_control());
    }
    if wanted(3) {
        report(3, "gradient checks", gradient_checks());
    }
    if wanted(4) {
        report(4, "unlabeled-path isolation", unlabeled_isolation());
    }
    if wanted(5) {
        report(5, "metric oracle", metric_oracle());
    }
    if wanted(6) {
        report(6, "training determinism", determinism());
    }
    if wanted(7) || wanted(8) {
        let outcome = ablation(&mut ablation_rows);
        if wanted(7) {
            report(7, "mode ablation ordering", outcome);
        }
    }
    if wanted(8) {
        report(8, "recall behavior", recall_behavior(&ablation_rows));
    }
    if wanted(9) || wanted(10) {
        let outcome = stutter_protocol(&mut stutter);
        if wanted(9) {
            report(9, "stutter protocol", outcome);
        }
    }
    if wanted(10) {
        report(10, "checkpoint round trip", checkpoint_round_trip(&stutter));
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
