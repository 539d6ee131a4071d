//! Data model and on-disk formats for labeled, unlabeled and parallel
//! disfluency corpora.
//!
//! Every word of a disfluent sentence carries a [`LabelTag`]. Reparandum
//! and interregnum material is `DISFLUENT`; the repair and the rest of the
//! sentence are `FLUENT`, so dropping the disfluent tokens yields the
//! corrected sentence.
//!
//! Two formats are supported:
//!
//! * JSONL (canonical): an optional header `{"corpus_language":"bn"}`
//!   followed by one object per sentence with fields `tokens`, `labels`
//!   (absent for unlabeled sentences), optional `fluent`, optional `lang`
//!   and optional `origin`.
//! * TSV: `token<TAB>label` per line, blank line between sentences, lines
//!   with a token and no label form unlabeled sentences. `# corpus_language=xx`
//!   and `# lang=xx` comment lines carry language tags.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const UNDETERMINED_LANGUAGE: &str = "und";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelTag {
    Fluent,
    Disfluent,
}

impl LabelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelTag::Fluent => "F",
            LabelTag::Disfluent => "D",
        }
    }

    /// Class index used by the token head: 0 = fluent, 1 = disfluent.
    pub fn class_index(self) -> usize {
        match self {
            LabelTag::Fluent => 0,
            LabelTag::Disfluent => 1,
        }
    }

    pub fn from_class_index(index: usize) -> Self {
        if index == 1 {
            LabelTag::Disfluent
        } else {
            LabelTag::Fluent
        }
    }

    pub fn is_disfluent(self) -> bool {
        self == LabelTag::Disfluent
    }
}

impl fmt::Display for LabelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" => Ok(LabelTag::Fluent),
            "D" => Ok(LabelTag::Disfluent),
            other => Err(format!("unknown label {other:?} (expected \"F\" or \"D\")")),
        }
    }
}

impl Serialize for LabelTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LabelTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The seven disfluency classes the synthesizer knows how to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisfluencyType {
    FilledPause,
    Interjection,
    DiscourseMarker,
    RepetitionCorrection,
    FalseStart,
    Edit,
    Stutter,
}

impl DisfluencyType {
    pub const ALL: [DisfluencyType; 7] = [
        DisfluencyType::FilledPause,
        DisfluencyType::Interjection,
        DisfluencyType::DiscourseMarker,
        DisfluencyType::RepetitionCorrection,
        DisfluencyType::FalseStart,
        DisfluencyType::Edit,
        DisfluencyType::Stutter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisfluencyType::FilledPause => "filled_pause",
            DisfluencyType::Interjection => "interjection",
            DisfluencyType::DiscourseMarker => "discourse_marker",
            DisfluencyType::RepetitionCorrection => "repetition_correction",
            DisfluencyType::FalseStart => "false_start",
            DisfluencyType::Edit => "edit",
            DisfluencyType::Stutter => "stutter",
        }
    }

    pub fn index(self) -> usize {
        DisfluencyType::ALL.iter().position(|&t| t == self).unwrap()
    }
}

impl fmt::Display for DisfluencyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DisfluencyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DisfluencyType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown disfluency type {s:?}")))
    }
}

fn check_tokens(tokens: &[String]) -> std::result::Result<(), String> {
    if tokens.is_empty() {
        return Err("sentence has no tokens".into());
    }
    for t in tokens {
        if t.is_empty() {
            return Err("empty token".into());
        }
        if t.chars().any(char::is_whitespace) {
            return Err(format!("token {t:?} contains whitespace"));
        }
    }
    Ok(())
}

/// Word tokens with one label each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    tokens: Vec<String>,
    labels: Vec<LabelTag>,
    language: String,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, labels: Vec<LabelTag>, language: impl Into<String>) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::LengthMismatch {
                line: 0,
                tokens: tokens.len(),
                labels: labels.len(),
            });
        }
        check_tokens(&tokens).map_err(Error::InvalidSentence)?;
        Ok(Self {
            tokens,
            labels,
            language: language.into(),
        })
    }

    /// A sentence with every token labeled fluent.
    pub fn fluent(tokens: Vec<String>, language: impl Into<String>) -> Result<Self> {
        let labels = vec![LabelTag::Fluent; tokens.len()];
        Self::new(tokens, labels, language)
    }

    pub(crate) fn from_parts_unchecked(tokens: Vec<String>, labels: Vec<LabelTag>, language: String) -> Self {
        debug_assert_eq!(tokens.len(), labels.len());
        Self {
            tokens,
            labels,
            language,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn labels(&self) -> &[LabelTag] {
        &self.labels
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn disfluent_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_disfluent()).count()
    }

    /// Tokens labeled fluent, in order.
    pub fn fluent_tokens(&self) -> Vec<String> {
        self.tokens
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| !l.is_disfluent())
            .map(|(t, _)| t.clone())
            .collect()
    }
}

/// A disfluent sentence together with its corrected form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelPair {
    disfluent: TaggedSentence,
    fluent: Vec<String>,
}

impl ParallelPair {
    pub fn new(disfluent: TaggedSentence, fluent: Vec<String>) -> Result<Self> {
        let recovered = disfluent.fluent_tokens();
        if recovered != fluent {
            return Err(Error::alignment(format!(
                "fluent side {:?} does not match FLUENT-labeled tokens {:?}",
                fluent.join(" "),
                recovered.join(" ")
            )));
        }
        Ok(Self { disfluent, fluent })
    }

    /// Builds the pair by deriving the fluent side from the labels.
    pub fn from_tagged(disfluent: TaggedSentence) -> Self {
        let fluent = disfluent.fluent_tokens();
        Self { disfluent, fluent }
    }

    pub fn disfluent(&self) -> &TaggedSentence {
        &self.disfluent
    }

    pub fn fluent(&self) -> &[String] {
        &self.fluent
    }

    pub fn into_disfluent(self) -> TaggedSentence {
        self.disfluent
    }
}

/// Where an unlabeled sentence came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Raw unlabeled data.
    #[default]
    Unlabeled,
    /// A labeled pair whose labels were dropped when mixing corpora.
    Stripped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlabeledSentence {
    tokens: Vec<String>,
    language: String,
    origin: Origin,
}

impl UnlabeledSentence {
    pub fn new(tokens: Vec<String>, language: impl Into<String>, origin: Origin) -> Result<Self> {
        check_tokens(&tokens).map_err(Error::InvalidSentence)?;
        Ok(Self {
            tokens,
            language: language.into(),
            origin,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub labeled: Vec<ParallelPair>,
    pub unlabeled: Vec<UnlabeledSentence>,
    language: String,
}

impl Corpus {
    pub fn new(language: impl Into<String>) -> Result<Self> {
        let language = language.into();
        if language.trim().is_empty() {
            return Err(Error::Config("corpus language tag must be non-empty".into()));
        }
        Ok(Self {
            labeled: Vec::new(),
            unlabeled: Vec::new(),
            language,
        })
    }

    pub fn with_labeled(language: impl Into<String>, labeled: Vec<ParallelPair>) -> Result<Self> {
        let mut corpus = Self::new(language)?;
        corpus.labeled = labeled;
        Ok(corpus)
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty() && self.unlabeled.is_empty()
    }

    /// Token sequences of every sentence, labeled (disfluent side) first.
    pub fn all_token_sequences(&self) -> impl Iterator<Item = &[String]> {
        self.labeled
            .iter()
            .map(|p| p.disfluent().tokens())
            .chain(self.unlabeled.iter().map(|u| u.tokens()))
    }

    /// Fraction of labeled tokens marked disfluent.
    pub fn disfluent_fraction(&self) -> f64 {
        let (d, n) = self.labeled.iter().fold((0usize, 0usize), |(d, n), p| {
            (d + p.disfluent().disfluent_count(), n + p.disfluent().len())
        });
        if n == 0 {
            0.0
        } else {
            d as f64 / n as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("conll") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<LabelTag>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fluent: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Origin>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonHeader {
    corpus_language: String,
}

enum Record {
    Labeled(ParallelPair),
    Unlabeled(UnlabeledSentence),
}

fn with_line(err: Error, line: usize) -> Error {
    match err {
        Error::LengthMismatch { tokens, labels, .. } => Error::LengthMismatch { line, tokens, labels },
        Error::Alignment { message, .. } => Error::Alignment {
            line: Some(line),
            message,
        },
        Error::InvalidSentence(message) => Error::Format { line, message },
        other => other,
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Format {
        line: 0,
        message: format!("file is not valid UTF-8: {e}"),
    })?;
    parse_corpus(&text, format)
}

pub fn parse_corpus(text: &str, format: CorpusFormat) -> Result<Corpus> {
    match format {
        CorpusFormat::Jsonl => parse_jsonl(text),
        CorpusFormat::Tsv => parse_tsv(text),
    }
}

fn assemble(header_lang: Option<String>, records: Vec<Record>) -> Result<Corpus> {
    let language = header_lang
        .or_else(|| {
            records.iter().find_map(|r| match r {
                Record::Labeled(p) => Some(p.disfluent().language().to_string()),
                Record::Unlabeled(_) => None,
            })
        })
        .or_else(|| {
            records.iter().find_map(|r| match r {
                Record::Unlabeled(u) => Some(u.language().to_string()),
                Record::Labeled(_) => None,
            })
        })
        .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_string());
    let mut corpus = Corpus::new(language)?;
    for r in records {
        match r {
            Record::Labeled(p) => corpus.labeled.push(p),
            Record::Unlabeled(u) => corpus.unlabeled.push(u),
        }
    }
    Ok(corpus)
}

fn parse_jsonl(text: &str) -> Result<Corpus> {
    let mut header_lang = None;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if records.is_empty() && header_lang.is_none() {
            if let Ok(h) = serde_json::from_str::<JsonHeader>(raw) {
                header_lang = Some(h.corpus_language);
                continue;
            }
        }
        let rec: JsonRecord = serde_json::from_str(raw).map_err(|e| Error::Format {
            line,
            message: e.to_string(),
        })?;
        let record = json_record(rec, header_lang.as_deref()).map_err(|e| with_line(e, line))?;
        records.push(record);
    }
    assemble(header_lang, records)
}

fn json_record(rec: JsonRecord, default_lang: Option<&str>) -> Result<Record> {
    let lang = rec
        .lang
        .or_else(|| default_lang.map(str::to_string))
        .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_string());
    match rec.labels {
        Some(labels) => {
            let sentence = TaggedSentence::new(rec.tokens, labels, lang)?;
            let pair = match rec.fluent {
                Some(fluent) => ParallelPair::new(sentence, fluent)?,
                None => ParallelPair::from_tagged(sentence),
            };
            Ok(Record::Labeled(pair))
        }
        None => {
            if rec.fluent.is_some() {
                return Err(Error::InvalidSentence("`fluent` given without `labels`".into()));
            }
            Ok(Record::Unlabeled(UnlabeledSentence::new(
                rec.tokens,
                lang,
                rec.origin.unwrap_or_default(),
            )?))
        }
    }
}

fn parse_tsv(text: &str) -> Result<Corpus> {
    struct Pending {
        start_line: usize,
        tokens: Vec<String>,
        labels: Vec<Option<LabelTag>>,
        lang: Option<String>,
        origin: Option<Origin>,
    }

    fn flush(p: &mut Option<Pending>, default_lang: Option<&str>, out: &mut Vec<Record>) -> Result<()> {
        let Some(p) = p.take() else { return Ok(()) };
        if p.tokens.is_empty() {
            return Ok(());
        }
        let lang = p
            .lang
            .or_else(|| default_lang.map(str::to_string))
            .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_string());
        let labeled = p.labels.iter().filter(|l| l.is_some()).count();
        let record = if labeled == 0 {
            UnlabeledSentence::new(p.tokens, lang, p.origin.unwrap_or_default()).map(Record::Unlabeled)
        } else if labeled != p.tokens.len() {
            Err(Error::LengthMismatch {
                line: p.start_line,
                tokens: p.tokens.len(),
                labels: labeled,
            })
        } else {
            let labels = p.labels.into_iter().map(Option::unwrap).collect();
            TaggedSentence::new(p.tokens, labels, lang).map(|s| Record::Labeled(ParallelPair::from_tagged(s)))
        };
        out.push(record.map_err(|e| with_line(e, p.start_line))?);
        Ok(())
    }

    let mut header_lang: Option<String> = None;
    let mut records = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut next_lang: Option<String> = None;
    let mut next_origin: Option<Origin> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            flush(&mut pending, header_lang.as_deref(), &mut records)?;
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("corpus_language=") {
                header_lang = Some(v.to_string());
            } else if let Some(v) = comment.strip_prefix("lang=") {
                next_lang = Some(v.to_string());
            } else if comment == "origin=stripped" {
                next_origin = Some(Origin::Stripped);
            }
            continue;
        }
        let mut cols = raw.split('\t');
        let token = cols.next().unwrap_or_default();
        let label = match cols.next() {
            None => None,
            Some(l) => Some(
                l.trim()
                    .parse::<LabelTag>()
                    .map_err(|message| Error::Format { line, message })?,
            ),
        };
        if cols.next().is_some() {
            return Err(Error::Format {
                line,
                message: "expected at most two tab-separated columns".into(),
            });
        }
        let p = pending.get_or_insert_with(|| Pending {
            start_line: line,
            tokens: Vec::new(),
            labels: Vec::new(),
            lang: next_lang.take(),
            origin: next_origin.take(),
        });
        p.tokens.push(token.to_string());
        p.labels.push(label);
    }
    flush(&mut pending, header_lang.as_deref(), &mut records)?;
    assemble(header_lang, records)
}

/// Canonical serialization of a corpus in the given format.
pub fn render_corpus(corpus: &Corpus, format: CorpusFormat) -> String {
    match format {
        CorpusFormat::Jsonl => render_jsonl(corpus),
        CorpusFormat::Tsv => render_tsv(corpus),
    }
}

fn render_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    let header = JsonHeader {
        corpus_language: corpus.language.clone(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for pair in &corpus.labeled {
        let s = pair.disfluent();
        let rec = JsonRecord {
            tokens: s.tokens.clone(),
            labels: Some(s.labels.clone()),
            fluent: Some(pair.fluent.clone()),
            lang: Some(s.language.clone()),
            origin: None,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    for u in &corpus.unlabeled {
        let rec = JsonRecord {
            tokens: u.tokens.clone(),
            labels: None,
            fluent: None,
            lang: Some(u.language.clone()),
            origin: (u.origin != Origin::Unlabeled).then_some(u.origin),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn render_tsv(corpus: &Corpus) -> String {
    let mut out = format!("# corpus_language={}\n", corpus.language);
    for pair in &corpus.labeled {
        let s = pair.disfluent();
        out.push('\n');
        out.push_str(&format!("# lang={}\n", s.language));
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            out.push_str(&format!("{t}\t{l}\n"));
        }
    }
    for u in &corpus.unlabeled {
        out.push('\n');
        out.push_str(&format!("# lang={}\n", u.language));
        if u.origin == Origin::Stripped {
            out.push_str("# origin=stripped\n");
        }
        for t in &u.tokens {
            out.push_str(t);
            out.push('\n');
        }
    }
    out
}

/// Writes the corpus to a sibling temp file and renames it into place.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    write_atomic(path.as_ref(), render_corpus(corpus, format).as_bytes())
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Seeded shuffle-and-split of the labeled pairs. Unlabeled sentences stay
/// with the training half.
pub fn split_corpus(corpus: &Corpus, n_train: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if n_train > corpus.labeled.len() {
        return Err(Error::Range(format!(
            "n_train = {n_train} exceeds the {} labeled pairs",
            corpus.labeled.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.labeled.len()).collect();
    order.shuffle(&mut seed::rng(seed, "split"));
    let mut train = Corpus::new(corpus.language.clone())?;
    let mut test = Corpus::new(corpus.language.clone())?;
    for (rank, &i) in order.iter().enumerate() {
        let pair = corpus.labeled[i].clone();
        if rank < n_train {
            train.labeled.push(pair);
        } else {
            test.labeled.push(pair);
        }
    }
    train.unlabeled = corpus.unlabeled.clone();
    Ok((train, test))
}

/// Keeps the labeled pairs of `labeled_src` and pools everything in
/// `unlabeled_src` (its labels dropped) as unlabeled data.
pub fn mix_corpora(labeled_src: &Corpus, unlabeled_src: &Corpus) -> Corpus {
    let mut out = labeled_src.clone();
    out.unlabeled = unlabeled_src.unlabeled.clone();
    out.unlabeled
        .extend(unlabeled_src.labeled.iter().map(|p| UnlabeledSentence {
            tokens: p.disfluent().tokens().to_vec(),
            language: p.disfluent().language().to_string(),
            origin: Origin::Stripped,
        }));
    out
}
