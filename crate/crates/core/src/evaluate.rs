//! Token-level scoring of the DISFLUENT class, prediction and correction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelTag, ParallelPair};
use crate::error::{Error, Result};
use crate::seqgan::{EncodedBatch, SeqGan};
use crate::textnorm::Vocabulary;

/// Sentences per forward pass during prediction.
pub const PREDICT_CHUNK: usize = 64;

/// Micro-averaged counts and percentages for the DISFLUENT class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percentage of sentences whose corrected output equals the gold fluent
    /// side (for [`score`], whose inputs carry no tokens: whose predicted
    /// labels equal the gold labels).
    pub exact_match_rate: f64,
    pub sentences: usize,
    pub tokens: usize,
    /// Sentences longer than the model's maximum length; only their first
    /// `max_len` tokens are scored.
    pub truncated: usize,
    /// Set when tp + fp + fn = 0, so every ratio is 0 by convention.
    pub degenerate: bool,
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| if den > 0 { 100.0 * num as f64 / den as f64 } else { 0.0 };
        let precision = pct(tp, tp + fp);
        let recall = pct(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            degenerate: tp + fp + fn_ == 0,
            ..Self::default()
        }
    }

    /// Flat `key=value` block.
    pub fn to_key_value(&self) -> String {
        let mut s = String::from("# token-level DISFLUENT class, micro-averaged\n");
        let _ = writeln!(s, "tp={}", self.tp);
        let _ = writeln!(s, "fp={}", self.fp);
        let _ = writeln!(s, "fn={}", self.fn_);
        let _ = writeln!(s, "precision={:.2}", self.precision);
        let _ = writeln!(s, "recall={:.2}", self.recall);
        let _ = writeln!(s, "f1={:.2}", self.f1);
        let _ = writeln!(s, "exact_match_rate={:.2}", self.exact_match_rate);
        let _ = writeln!(s, "sentences={}", self.sentences);
        let _ = writeln!(s, "tokens={}", self.tokens);
        let _ = writeln!(s, "truncated={}", self.truncated);
        let _ = writeln!(s, "degenerate={}", self.degenerate);
        s
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["averaging"] = "micro".into();
        v["class"] = "DISFLUENT".into();
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

fn check_aligned(gold: &[LabelTag], pred: &[LabelTag], sentence: usize) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            line: Some(sentence + 1),
            message: format!("gold has {} labels, prediction has {}", gold.len(), pred.len()),
        });
    }
    Ok(())
}

/// Corpus-level confusion counts over aligned label sequences.
pub fn score<G: AsRef<[LabelTag]>, P: AsRef<[LabelTag]>>(gold: &[G], pred: &[P]) -> Result<MetricReport> {
    if gold.len() != pred.len() {
        return Err(Error::alignment(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut exact, mut tokens) = (0, 0, 0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (g, p) = (g.as_ref(), p.as_ref());
        check_aligned(g, p, i)?;
        for (&a, &b) in g.iter().zip(p) {
            match (a.is_disfluent(), b.is_disfluent()) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        tokens += g.len();
        exact += usize::from(g == p);
    }
    let mut r = MetricReport::from_counts(tp, fp, fn_);
    r.sentences = gold.len();
    r.tokens = tokens;
    r.exact_match_rate = if gold.is_empty() {
        0.0
    } else {
        100.0 * exact as f64 / gold.len() as f64
    };
    Ok(r)
}

/// Keeps the FLUENT tokens, in order.
pub fn apply_correction(tokens: &[String], labels: &[LabelTag]) -> Result<Vec<String>> {
    if tokens.len() != labels.len() {
        return Err(Error::alignment(format!(
            "{} tokens, {} labels",
            tokens.len(),
            labels.len()
        )));
    }
    Ok(tokens
        .iter()
        .zip(labels)
        .filter(|(_, l)| !l.is_disfluent())
        .map(|(t, _)| t.clone())
        .collect())
}

/// Scores predictions against parallel pairs. A prediction may be shorter
/// than its sentence (truncation at the model length); gold labels are cut
/// to the same length and the sentence is counted as truncated. Exact match
/// compares corrected outputs over the scored prefix.
pub fn score_pairs<P: AsRef<[LabelTag]>>(pairs: &[ParallelPair], pred: &[P]) -> Result<MetricReport> {
    if pairs.len() != pred.len() {
        return Err(Error::alignment(format!(
            "{} gold sentences, {} predicted",
            pairs.len(),
            pred.len()
        )));
    }
    let mut gold = Vec::with_capacity(pairs.len());
    let mut truncated = 0;
    let mut exact = 0;
    for (i, (pair, p)) in pairs.iter().zip(pred).enumerate() {
        let s = pair.disfluent();
        let p = p.as_ref();
        if p.len() > s.len() {
            return Err(Error::Alignment {
                line: Some(i + 1),
                message: format!("prediction has {} labels for {} tokens", p.len(), s.len()),
            });
        }
        if p.len() < s.len() {
            truncated += 1;
        }
        let n = p.len();
        let g = &s.labels()[..n];
        let want = apply_correction(&s.tokens()[..n], g)?;
        let got = apply_correction(&s.tokens()[..n], p)?;
        exact += usize::from(want == got);
        gold.push(g);
    }
    let mut r = score(&gold, pred)?;
    r.truncated = truncated;
    r.exact_match_rate = if pairs.is_empty() {
        0.0
    } else {
        100.0 * exact as f64 / pairs.len() as f64
    };
    Ok(r)
}

/// FLUENT unless the DISFLUENT logit is strictly larger.
pub fn argmax_label(fluent_logit: f32, disfluent_logit: f32) -> LabelTag {
    if disfluent_logit > fluent_logit {
        LabelTag::Disfluent
    } else {
        LabelTag::Fluent
    }
}

fn predict_chunk<S: AsRef<[String]>>(
    model: &SeqGan,
    vocab: &Vocabulary,
    sentences: &[S],
) -> Result<Vec<Vec<LabelTag>>> {
    let l = model.config.max_len();
    let batch = EncodedBatch::from_sentences(sentences, vocab, l);
    let logits = model.token_logits(&batch)?;
    Ok(sentences
        .iter()
        .enumerate()
        .map(|(b, s)| {
            let n = s.as_ref().len().min(l);
            (0..n)
                .map(|t| {
                    let row = logits.row(b * l + t);
                    argmax_label(row[0], row[1])
                })
                .collect()
        })
        .collect())
}

/// Per-token labels for each sentence (at most `max_len` per sentence),
/// without a vocabulary check. Empty sentences yield empty predictions.
pub fn predict_labels<S: AsRef<[String]> + Sync>(
    model: &SeqGan,
    vocab: &Vocabulary,
    sentences: &[S],
    jobs: usize,
) -> Result<Vec<Vec<LabelTag>>> {
    if model.config.encoder.vocab_size != vocab.len() {
        return Err(Error::VocabMismatch {
            expected: format!("{} entries", model.config.encoder.vocab_size),
            actual: format!("{} entries", vocab.len()),
        });
    }
    let chunks: Vec<&[S]> = sentences.chunks(PREDICT_CHUNK).collect();
    let results: Vec<Result<Vec<Vec<LabelTag>>>> = if jobs <= 1 || chunks.len() <= 1 {
        chunks.iter().map(|c| predict_chunk(model, vocab, c)).collect()
    } else {
        let per = chunks.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .chunks(per)
                .map(|group| {
                    scope.spawn(move || group.iter().map(|c| predict_chunk(model, vocab, c)).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("prediction worker panicked"))
                .collect()
        })
    };
    let mut out = Vec::with_capacity(sentences.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Like [`predict_labels`], but first checks that `vocab` is the vocabulary
/// the model was trained with, identified by its fingerprint.
pub fn predict<S: AsRef<[String]> + Sync>(
    model: &SeqGan,
    model_vocab_hash: &str,
    vocab: &Vocabulary,
    sentences: &[S],
    jobs: usize,
) -> Result<Vec<Vec<LabelTag>>> {
    let actual = vocab.fingerprint();
    if actual != model_vocab_hash {
        return Err(Error::VocabMismatch {
            expected: model_vocab_hash.to_string(),
            actual,
        });
    }
    predict_labels(model, vocab, sentences, jobs)
}

/// Predicts and scores a labeled corpus.
pub fn evaluate_pairs(model: &SeqGan, vocab: &Vocabulary, pairs: &[ParallelPair], jobs: usize) -> Result<MetricReport> {
    let sentences: Vec<&[String]> = pairs.iter().map(|p| p.disfluent().tokens()).collect();
    let pred = predict_labels(model, vocab, &sentences, jobs)?;
    score_pairs(pairs, &pred)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row of a comparison table: a system name and its reports over seeds.
#[derive(Clone, Debug)]
pub struct TableRow {
    pub system: String,
    pub reports: Vec<MetricReport>,
}

impl TableRow {
    pub fn mean_precision(&self) -> f64 {
        mean_std(&self.reports.iter().map(|r| r.precision).collect::<Vec<_>>()).0
    }

    pub fn mean_recall(&self) -> f64 {
        mean_std(&self.reports.iter().map(|r| r.recall).collect::<Vec<_>>()).0
    }

    pub fn mean_f1(&self) -> f64 {
        mean_std(&self.reports.iter().map(|r| r.f1).collect::<Vec<_>>()).0
    }
}

/// Aligned plain-text table of P, R and F1 (mean ± stdev over reports).
pub fn render_table(rows: &[TableRow]) -> String {
    let cell = |v: &[f64]| {
        let (m, s) = mean_std(v);
        if v.len() > 1 {
            format!("{m:.2} ± {s:.2}")
        } else {
            format!("{m:.2}")
        }
    };
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let col = |f: fn(&MetricReport) -> f64| r.reports.iter().map(f).collect::<Vec<_>>();
            [
                r.system.clone(),
                r.reports.len().to_string(),
                cell(&col(|m| m.precision)),
                cell(&col(|m| m.recall)),
                cell(&col(|m| m.f1)),
            ]
        })
        .collect();
    let header = ["System", "Runs", "P", "R", "F1"].map(String::from);
    let mut widths = header.clone().map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; 5]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = String::from("# token-level DISFLUENT class, micro-averaged\n");
    out.push_str(&line(&header));
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaggedSentence;
    use LabelTag::{Disfluent as D, Fluent as F};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hand_counted_case() {
        let r = score(&[vec![D, F, F, D]], &[vec![D, D, F, F]]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (50.0, 50.0, 50.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn perfect_and_degenerate() {
        let g = vec![vec![F, D, F], vec![D]];
        let r = score(&g, &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (100.0, 100.0, 100.0));
        assert_eq!(r.exact_match_rate, 100.0);
        let all_f = vec![vec![F, F]];
        let r = score(&all_f, &all_f).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.degenerate);
        assert!(r.to_key_value().contains("degenerate=true"));
    }

    #[test]
    fn misaligned_inputs_rejected() {
        assert!(matches!(score(&[vec![F, D]], &[vec![F]]), Err(Error::Alignment { .. })));
        assert!(score(&[vec![F]], &Vec::<Vec<LabelTag>>::new()).is_err());
        assert!(apply_correction(&toks("a b"), &[F]).is_err());
    }

    #[test]
    fn correction_examples() {
        let out = apply_correction(&toks("what about the uh event"), &[F, F, F, D, F]).unwrap();
        assert_eq!(out, toks("what about the event"));
        assert_eq!(apply_correction(&toks("a b"), &[F, F]).unwrap(), toks("a b"));
        assert!(apply_correction(&toks("a b"), &[D, D]).unwrap().is_empty());
    }

    #[test]
    fn argmax_ties_go_fluent() {
        assert_eq!(argmax_label(0.9, 0.1), F);
        assert_eq!(argmax_label(0.1, 0.9), D);
        assert_eq!(argmax_label(0.5, 0.5), F);
    }

    #[test]
    fn truncated_predictions_are_counted() {
        let s = TaggedSentence::new(toks("uh a b c"), vec![D, F, F, D], "en").unwrap();
        let pair = ParallelPair::from_tagged(s);
        let r = score_pairs(std::slice::from_ref(&pair), &[vec![D, F]]).unwrap();
        assert_eq!(r.truncated, 1);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        assert_eq!(r.exact_match_rate, 100.0);
        assert!(score_pairs(&[pair], &[vec![D, F, F, D, F]]).is_err());
    }

    #[test]
    fn reports_serialize() {
        let r = MetricReport::from_counts(3, 1, 2);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["fn"], 2);
        assert_eq!(v["averaging"], "micro");
        assert!(r.to_key_value().lines().any(|l| l == "precision=75.00"));
    }

    #[test]
    fn table_is_aligned() {
        let rows = vec![
            TableRow {
                system: "supervised".into(),
                reports: vec![MetricReport::from_counts(1, 1, 1), MetricReport::from_counts(2, 0, 0)],
            },
            TableRow {
                system: "adversarial+unlabeled".into(),
                reports: vec![MetricReport::from_counts(3, 1, 0)],
            },
        ];
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().skip(1).collect();
        assert!(lines[0].starts_with("System"));
        assert!(lines[2].contains("75.00 ± 35.36"));
        assert_eq!(rows[0].mean_f1(), 75.0);
    }
}
