//! Python bindings: synthesis, training, prediction and scoring.

use std::path::PathBuf;

use disfluency_core::corpus::{
    load_corpus, Corpus, CorpusFormat, DisfluencyType, LabelTag, Origin, ParallelPair, TaggedSentence,
    UnlabeledSentence,
};
use disfluency_core::evaluate::{apply_correction, predict, score, MetricReport};
use disfluency_core::seqgan::{ModelConfig, SeqGan};
use disfluency_core::synth::{synthesize_corpus, toy::ToyLanguage, SynthConfig};
use disfluency_core::textnorm::{normalize as normalize_text, Vocabulary};
use disfluency_core::trainer::{load_trained, save_trained, train, CheckpointMeta, TrainConfig, TrainMode};
use disfluency_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

const LANGUAGE: &str = "en";

create_exception!(
    disfluency,
    DisfluencyError,
    PyValueError,
    "Raised for any pipeline error; the message starts with the error code."
);

fn to_py(e: Error) -> PyErr {
    DisfluencyError::new_err(format!("{}: {e}", e.code()))
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for disfluency_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse_labels(labels: &[String]) -> PyResult<Vec<LabelTag>> {
    labels
        .iter()
        .map(|l| l.parse::<LabelTag>().map_err(DisfluencyError::new_err))
        .collect()
}

fn label_strings(labels: &[LabelTag]) -> Vec<String> {
    labels.iter().map(|l| l.as_str().to_string()).collect()
}

type PairTuple = (Vec<String>, Vec<String>, Vec<String>);

fn pair_tuple(p: &ParallelPair) -> PairTuple {
    (
        p.disfluent().tokens().to_vec(),
        label_strings(p.disfluent().labels()),
        p.fluent().to_vec(),
    )
}

fn report_dict<'py>(py: Python<'py>, r: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tp", r.tp)?;
    d.set_item("fp", r.fp)?;
    d.set_item("fn", r.fn_)?;
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("f1", r.f1)?;
    d.set_item("exact_match_rate", r.exact_match_rate)?;
    d.set_item("sentences", r.sentences)?;
    d.set_item("tokens", r.tokens)?;
    d.set_item("degenerate", r.degenerate)?;
    Ok(d)
}

/// Lowercases, strips punctuation and splits into word tokens.
#[pyfunction]
fn normalize(text: &str) -> Vec<String> {
    normalize_text(text)
}

/// Word lists used by the injection rules.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Lexicons {
    inner: disfluency_core::synth::Lexicons,
}

#[pymethods]
impl Lexicons {
    #[staticmethod]
    fn english() -> Self {
        Self {
            inner: disfluency_core::synth::Lexicons::english(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (path, language = LANGUAGE))]
    fn load(path: PathBuf, language: &str) -> PyResult<Self> {
        Ok(Self {
            inner: disfluency_core::synth::Lexicons::load(path, language).or_py()?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Lexicons(language={:?}, filled_pauses={}, interjections={}, discourse_markers={}, edit_phrases={})",
            self.inner.language,
            self.inner.filled_pauses.len(),
            self.inner.interjections.len(),
            self.inner.discourse_markers.len(),
            self.inner.edit_phrases.len()
        )
    }
}

fn synth_config(budget: f64, seed: u64, types: Option<Vec<String>>) -> PyResult<SynthConfig> {
    let mut cfg = SynthConfig::conversational(budget, seed);
    if let Some(types) = types {
        cfg.type_weights = [0.0; 7];
        for t in types {
            let t: DisfluencyType = t.parse().or_py()?;
            cfg.set_weight(t, 1.0);
        }
    }
    cfg.validate().or_py()?;
    Ok(cfg)
}

/// Injects disfluencies into fluent token sequences.
///
/// Returns `(tokens, labels, fluent)` triples with labels `"F"`/`"D"`.
#[pyfunction]
#[pyo3(signature = (sentences, lexicons = None, budget = 0.2, seed = 0, types = None))]
fn synthesize(
    py: Python<'_>,
    sentences: Vec<Vec<String>>,
    lexicons: Option<Lexicons>,
    budget: f64,
    seed: u64,
    types: Option<Vec<String>>,
) -> PyResult<Vec<PairTuple>> {
    let cfg = synth_config(budget, seed, types)?;
    let lex = lexicons
        .map(|l| l.inner)
        .unwrap_or_else(disfluency_core::synth::Lexicons::english);
    let corpus = py.detach(|| synthesize_corpus(&sentences, &cfg, &lex)).or_py()?;
    Ok(corpus.labeled.iter().map(pair_tuple).collect())
}

/// Fluent sentences from the built-in synthetic toy language.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn toy_sentences(n: usize, seed: u64) -> Vec<Vec<String>> {
    ToyLanguage::base().sentences(n, seed)
}

/// Reads a `.jsonl` or `.tsv` corpus into labeled triples and unlabeled
/// token lists.
#[pyfunction]
fn read_corpus(path: PathBuf) -> PyResult<(Vec<PairTuple>, Vec<Vec<String>>)> {
    let c = load_corpus(&path, CorpusFormat::from_path(&path)).or_py()?;
    Ok((
        c.labeled.iter().map(pair_tuple).collect(),
        c.unlabeled.iter().map(|u| u.tokens().to_vec()).collect(),
    ))
}

/// Token-level micro precision/recall/F1 of the DISFLUENT class, in percent.
#[pyfunction]
fn score_labels<'py>(py: Python<'py>, gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let gold: Vec<Vec<LabelTag>> = gold.iter().map(|g| parse_labels(g)).collect::<PyResult<_>>()?;
    let pred: Vec<Vec<LabelTag>> = pred.iter().map(|p| parse_labels(p)).collect::<PyResult<_>>()?;
    report_dict(py, &score(&gold, &pred).or_py()?)
}

fn build_corpus(labeled: Vec<(Vec<String>, Vec<String>)>, unlabeled: Vec<Vec<String>>) -> PyResult<Corpus> {
    let pairs = labeled
        .into_iter()
        .map(|(tokens, labels)| {
            let labels = parse_labels(&labels)?;
            Ok(ParallelPair::from_tagged(
                TaggedSentence::new(tokens, labels, LANGUAGE).or_py()?,
            ))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mut corpus = Corpus::with_labeled(LANGUAGE, pairs).or_py()?;
    for tokens in unlabeled {
        corpus
            .unlabeled
            .push(UnlabeledSentence::new(tokens, LANGUAGE, Origin::Unlabeled).or_py()?);
    }
    Ok(corpus)
}

/// A trained tagger with its vocabulary.
#[pyclass(frozen)]
struct Tagger {
    model: SeqGan,
    vocab: Vocabulary,
    meta: CheckpointMeta,
}

#[pymethods]
impl Tagger {
    /// Trains a tagger on `(tokens, labels)` pairs plus optional unlabeled
    /// token lists. `mode` is `supervised`, `adversarial` or
    /// `adversarial+unlabeled`.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (labeled, unlabeled = Vec::new(), mode = "adversarial+unlabeled", steps = 2000, seed = 0, model_dim = None, max_len = None))]
    fn train(
        py: Python<'_>,
        labeled: Vec<(Vec<String>, Vec<String>)>,
        unlabeled: Vec<Vec<String>>,
        mode: &str,
        steps: usize,
        seed: u64,
        model_dim: Option<usize>,
        max_len: Option<usize>,
    ) -> PyResult<Self> {
        let mode: TrainMode = mode.parse().or_py()?;
        let corpus = build_corpus(labeled, unlabeled)?;
        let cfg = TrainConfig {
            steps,
            eval_every: 0,
            ..TrainConfig::desk(mode, seed)
        };
        cfg.validate().or_py()?;
        py.detach(|| {
            let vocab = Vocabulary::build(&[&corpus], 1)?;
            let mut model_cfg = ModelConfig::desk(vocab.len());
            if let Some(d) = model_dim {
                model_cfg.encoder.model_dim = d;
            }
            if let Some(l) = max_len {
                model_cfg.encoder.max_len = l;
            }
            model_cfg.validate()?;
            let out = train(&corpus, &vocab, model_cfg, &cfg, None, None, |_| {})?;
            let meta = out.meta(&cfg, steps);
            Ok(Self {
                model: out.model,
                vocab,
                meta,
            })
        })
        .or_py()
    }

    /// Loads `checkpoint` and its `.meta.json` sidecar; the vocabulary
    /// defaults to `vocab.txt` beside the checkpoint.
    #[staticmethod]
    #[pyo3(signature = (checkpoint, vocab = None))]
    fn load(checkpoint: PathBuf, vocab: Option<PathBuf>) -> PyResult<Self> {
        let (model, meta) = load_trained(&checkpoint).or_py()?;
        let vocab_path = vocab.unwrap_or_else(|| checkpoint.with_file_name("vocab.txt"));
        let vocab = Vocabulary::load(vocab_path).or_py()?;
        if vocab.fingerprint() != meta.vocab_hash {
            return Err(to_py(Error::VocabMismatch {
                expected: meta.vocab_hash.clone(),
                actual: vocab.fingerprint(),
            }));
        }
        Ok(Self { model, vocab, meta })
    }

    /// Writes `DIR/model.ckpt`, its metadata and `DIR/vocab.txt`; returns
    /// the checkpoint path.
    fn save(&self, dir: PathBuf) -> PyResult<PathBuf> {
        std::fs::create_dir_all(&dir).map_err(|e| {
            to_py(Error::Io {
                path: dir.clone(),
                source: e,
            })
        })?;
        let ck = dir.join("model.ckpt");
        save_trained(&ck, &self.model.params, &self.meta).or_py()?;
        self.vocab.save(dir.join("vocab.txt")).or_py()?;
        Ok(ck)
    }

    /// Per-token `"F"`/`"D"` labels for each token list.
    #[pyo3(signature = (sentences, jobs = 1))]
    fn predict(&self, py: Python<'_>, sentences: Vec<Vec<String>>, jobs: usize) -> PyResult<Vec<Vec<String>>> {
        let pred = py
            .detach(|| predict(&self.model, &self.meta.vocab_hash, &self.vocab, &sentences, jobs))
            .or_py()?;
        Ok(pred.iter().map(|p| label_strings(p)).collect())
    }

    /// Normalizes raw text and drops the tokens predicted disfluent.
    fn correct(&self, text: &str) -> PyResult<String> {
        let tokens = normalize_text(text);
        let pred = predict(&self.model, &self.meta.vocab_hash, &self.vocab, &[tokens.as_slice()], 1).or_py()?;
        let n = pred[0].len();
        let mut kept = apply_correction(&tokens[..n], &pred[0]).or_py()?;
        kept.extend_from_slice(&tokens[n..]);
        Ok(kept.join(" "))
    }

    /// Scores predictions against `(tokens, labels)` pairs.
    #[pyo3(signature = (pairs, jobs = 1))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        pairs: Vec<(Vec<String>, Vec<String>)>,
        jobs: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let gold: Vec<Vec<LabelTag>> = pairs.iter().map(|(_, l)| parse_labels(l)).collect::<PyResult<_>>()?;
        let sentences: Vec<&[String]> = pairs.iter().map(|(t, _)| t.as_slice()).collect();
        let pred = predict(&self.model, &self.meta.vocab_hash, &self.vocab, &sentences, jobs).or_py()?;
        let truncated: Vec<&[LabelTag]> = gold.iter().zip(&pred).map(|(g, p)| &g[..p.len()]).collect();
        report_dict(py, &score(&truncated, &pred).or_py()?)
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.meta.train.mode.as_str()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    #[getter]
    fn max_len(&self) -> usize {
        self.model.config.max_len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Tagger(mode={:?}, vocab_size={}, steps={})",
            self.mode(),
            self.vocab.len(),
            self.meta.step
        )
    }
}

#[pymodule]
fn disfluency(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DisfluencyError", m.py().get_type::<DisfluencyError>())?;
    m.add_class::<Lexicons>()?;
    m.add_class::<Tagger>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(toy_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(read_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(score_labels, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_strings_round_trip() {
        let raw: Vec<String> = ["F", "D", "D"].iter().map(|s| s.to_string()).collect();
        assert_eq!(label_strings(&parse_labels(&raw).unwrap()), raw);
    }

    #[test]
    fn corpus_from_python_values() {
        let c = build_corpus(
            vec![(vec!["uh".into(), "yes".into()], vec!["D".into(), "F".into()])],
            vec![vec!["no".into()]],
        )
        .unwrap();
        assert_eq!(c.labeled[0].fluent(), ["yes".to_string()]);
        assert_eq!(c.unlabeled.len(), 1);
    }
}
