//! Rule-based injection of disfluencies into fluent sentences.
//!
//! Each rule inserts or duplicates material and labels everything it adds
//! `DISFLUENT`; original tokens keep their `FLUENT` label and their order,
//! so dropping disfluent tokens always gives back the source sentence.
//! Reparanda precede their repair: in a repetition the *earlier* copy is
//! the disfluent one.

mod lexicon;
pub mod toy;

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

pub use lexicon::Lexicons;

use crate::corpus::{Corpus, DisfluencyType, LabelTag, ParallelPair, TaggedSentence};
use crate::error::{Error, Result};
use crate::seed;

/// Maximum deviation allowed between the requested and achieved
/// disfluent-token fraction of a synthesized corpus.
pub const BUDGET_TOLERANCE: f64 = 0.02;

const INTERJECTION_START_BIAS: f64 = 0.6;
const MAX_FRAGMENT_CHARS: usize = 3;
const MAX_FALSE_START_TOKENS: usize = 3;

/// A sentence under construction: tokens with labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Draft {
    pub tokens: Vec<String>,
    pub labels: Vec<LabelTag>,
}

impl Draft {
    pub fn fluent(tokens: &[String]) -> Self {
        Self {
            tokens: tokens.to_vec(),
            labels: vec![LabelTag::Fluent; tokens.len()],
        }
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

    fn fluent_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_disfluent())
            .map(|(i, _)| i)
    }

    fn fluent_count(&self) -> usize {
        self.fluent_positions().count()
    }

    /// Inserts `material` before position `pos`, all labeled disfluent.
    pub fn insert_disfluent(&mut self, pos: usize, material: &[String]) {
        assert!(pos <= self.len(), "insert position out of range");
        self.tokens.splice(pos..pos, material.iter().cloned());
        self.labels
            .splice(pos..pos, std::iter::repeat_n(LabelTag::Disfluent, material.len()));
    }

    /// Duplicates `tokens[start..start + len]` immediately before itself;
    /// the earlier copy is the reparandum.
    pub fn repeat_window(&mut self, start: usize, len: usize) {
        assert!(len >= 1 && start + len <= self.len(), "repeat window out of range");
        let copy: Vec<String> = self.tokens[start..start + len].to_vec();
        self.insert_disfluent(start, &copy);
    }

    pub fn into_pair(self, language: &str) -> ParallelPair {
        ParallelPair::from_tagged(TaggedSentence::from_parts_unchecked(
            self.tokens,
            self.labels,
            language.to_string(),
        ))
    }
}

/// A strict prefix of `word`, 1 to 3 characters long.
pub fn stutter_fragment<R: Rng + ?Sized>(word: &str, rng: &mut R) -> Result<String> {
    let n = word.chars().count();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "cannot stutter the single-character word {word:?}"
        )));
    }
    let len = rng.random_range(1..=MAX_FRAGMENT_CHARS.min(n - 1));
    Ok(word.chars().take(len).collect())
}

/// Extra inputs for the rules that need material from outside the sentence.
#[derive(Clone, Copy, Debug)]
pub struct InjectOptions<'a> {
    pub stutter_max_fragments: usize,
    /// Sentence a false start is borrowed from; the sentence's own tail is
    /// used when absent.
    pub donor: Option<&'a [String]>,
    /// Words an edit reparandum may be drawn from; the sentence's own words
    /// are used when absent.
    pub word_pool: Option<&'a [String]>,
}

impl Default for InjectOptions<'_> {
    fn default() -> Self {
        Self {
            stutter_max_fragments: 1,
            donor: None,
            word_pool: None,
        }
    }
}

pub fn inject<R: Rng + ?Sized>(
    fluent: &[String],
    dtype: DisfluencyType,
    rng: &mut R,
    lex: &Lexicons,
) -> Result<ParallelPair> {
    inject_with(fluent, dtype, rng, lex, &InjectOptions::default())
}

pub fn inject_with<R: Rng + ?Sized>(
    fluent: &[String],
    dtype: DisfluencyType,
    rng: &mut R,
    lex: &Lexicons,
    opts: &InjectOptions<'_>,
) -> Result<ParallelPair> {
    if fluent.is_empty() {
        return Err(Error::Precondition("cannot inject into an empty sentence".into()));
    }
    let mut draft = Draft::fluent(fluent);
    apply(&mut draft, dtype, rng, lex, opts)?;
    Ok(draft.into_pair(&lex.language))
}

/// Checks whether `dtype` can be applied to `draft` without drawing.
pub fn feasible(draft: &Draft, dtype: DisfluencyType, lex: &Lexicons) -> bool {
    let lexicon_ok = match dtype {
        DisfluencyType::FilledPause => !lex.filled_pauses.is_empty(),
        DisfluencyType::Interjection => !lex.interjections.is_empty(),
        DisfluencyType::DiscourseMarker => !lex.discourse_markers.is_empty(),
        DisfluencyType::Edit => !lex.edit_phrases.is_empty(),
        _ => true,
    };
    let shape_ok = match dtype {
        DisfluencyType::FalseStart => draft.fluent_count() >= 2,
        DisfluencyType::Stutter => stutter_targets(draft).next().is_some(),
        _ => draft.fluent_count() >= 1,
    };
    lexicon_ok && shape_ok
}

fn stutter_targets(draft: &Draft) -> impl Iterator<Item = usize> + '_ {
    draft
        .fluent_positions()
        .filter(|&i| draft.tokens[i].chars().count() >= 2)
}

/// Applies one rule of type `dtype` to the draft in place.
pub fn apply<R: Rng + ?Sized>(
    draft: &mut Draft,
    dtype: DisfluencyType,
    rng: &mut R,
    lex: &Lexicons,
    opts: &InjectOptions<'_>,
) -> Result<()> {
    match dtype {
        DisfluencyType::FilledPause => {
            Lexicons::require_nonempty(&lex.filled_pauses, "filled pause")?;
            let pos = rng.random_range(0..=draft.len());
            let filler = lex.filled_pauses.choose(rng).unwrap().clone();
            draft.insert_disfluent(pos, &[filler]);
        }
        DisfluencyType::Interjection => {
            Lexicons::require_nonempty(&lex.interjections, "interjection")?;
            let pos = if rng.random_bool(INTERJECTION_START_BIAS) {
                0
            } else {
                rng.random_range(0..=draft.len())
            };
            let word = lex.interjections.choose(rng).unwrap().clone();
            draft.insert_disfluent(pos, &[word]);
        }
        DisfluencyType::DiscourseMarker => {
            Lexicons::require_nonempty(&lex.discourse_markers, "discourse marker")?;
            let marker = lex.discourse_markers.choose(rng).unwrap().clone();
            draft.insert_disfluent(0, &marker);
        }
        DisfluencyType::RepetitionCorrection => {
            if draft.fluent_count() == 0 {
                return Err(Error::Precondition("repetition needs at least one token".into()));
            }
            let len = rng.random_range(1..=2usize.min(draft.len()));
            let start = rng.random_range(0..=draft.len() - len);
            draft.repeat_window(start, len);
        }
        DisfluencyType::FalseStart => {
            let own: Vec<String> = draft.fluent_positions().map(|i| draft.tokens[i].clone()).collect();
            if own.len() < 2 {
                return Err(Error::Precondition("false start needs at least two tokens".into()));
            }
            let fragment: Vec<String> = match opts.donor.filter(|d| !d.is_empty()) {
                Some(donor) => {
                    let k = rng.random_range(1..=MAX_FALSE_START_TOKENS.min(donor.len()));
                    donor[..k].to_vec()
                }
                None => {
                    let k = rng.random_range(1..=MAX_FALSE_START_TOKENS.min(own.len() - 1));
                    own[own.len() - k..].to_vec()
                }
            };
            draft.insert_disfluent(0, &fragment);
        }
        DisfluencyType::Edit => {
            Lexicons::require_nonempty(&lex.edit_phrases, "edit phrase")?;
            let targets: Vec<usize> = draft.fluent_positions().collect();
            let &idx = targets
                .choose(rng)
                .ok_or_else(|| Error::Precondition("edit needs at least one token".into()))?;
            let true_word = draft.tokens[idx].clone();
            let pick = |pool: &[String], rng: &mut R| -> Option<String> {
                let candidates: Vec<&String> = pool.iter().filter(|w| **w != true_word).collect();
                candidates.choose(rng).map(|w| (*w).clone())
            };
            let own = draft.tokens.clone();
            let reparandum = opts
                .word_pool
                .and_then(|p| pick(p, rng))
                .or_else(|| pick(&own, rng))
                .or_else(|| lex.filled_pauses.choose(rng).cloned())
                .ok_or_else(|| Error::Lexicon("no word available for an edit reparandum".into()))?;
            let phrase = lex.edit_phrases.choose(rng).unwrap();
            let mut material = Vec::with_capacity(1 + phrase.len());
            material.push(reparandum);
            material.extend(phrase.iter().cloned());
            draft.insert_disfluent(idx, &material);
        }
        DisfluencyType::Stutter => {
            let targets: Vec<usize> = stutter_targets(draft).collect();
            let &idx = targets
                .choose(rng)
                .ok_or_else(|| Error::Precondition("stutter needs a word of at least two characters".into()))?;
            let n = rng.random_range(1..=opts.stutter_max_fragments.max(1));
            let word = draft.tokens[idx].clone();
            let fragments = (0..n)
                .map(|_| stutter_fragment(&word, rng))
                .collect::<Result<Vec<_>>>()?;
            draft.insert_disfluent(idx, &fragments);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Target fraction of disfluent tokens in the output corpus.
    pub budget: f64,
    /// Sampling weight per type, indexed like [`DisfluencyType::ALL`].
    pub type_weights: [f64; 7],
    pub max_injections_per_sentence: usize,
    pub stutter_max_fragments: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Six conversational types weighted equally, no stutter.
    pub fn conversational(budget: f64, seed: u64) -> Self {
        Self {
            budget,
            type_weights: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0],
            max_injections_per_sentence: 4,
            stutter_max_fragments: 2,
            seed,
        }
    }

    pub fn only(dtype: DisfluencyType, budget: f64, seed: u64) -> Self {
        let mut type_weights = [0.0; 7];
        type_weights[dtype.index()] = 1.0;
        Self {
            budget,
            type_weights,
            max_injections_per_sentence: 4,
            stutter_max_fragments: 2,
            seed,
        }
    }

    pub fn weight(&self, dtype: DisfluencyType) -> f64 {
        self.type_weights[dtype.index()]
    }

    pub fn set_weight(&mut self, dtype: DisfluencyType, w: f64) {
        self.type_weights[dtype.index()] = w;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.budget < 1.0) {
            return Err(Error::Config(format!("budget must lie in (0, 1), got {}", self.budget)));
        }
        if self.type_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("type weights must be finite and nonnegative".into()));
        }
        if !self.type_weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Config("at least one type weight must be positive".into()));
        }
        if self.max_injections_per_sentence == 0 {
            return Err(Error::Config("max_injections_per_sentence must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthReport {
    pub sentences: usize,
    pub tokens: usize,
    pub disfluent_tokens: usize,
    pub achieved_fraction: f64,
    pub type_counts: BTreeMap<DisfluencyType, usize>,
}

/// Every intermediate state of one sentence's injection chain.
struct Chain {
    states: Vec<Draft>,
    types: Vec<DisfluencyType>,
}

fn build_chain(
    index: usize,
    sentences: &[Vec<String>],
    word_pool: &[String],
    cfg: &SynthConfig,
    lex: &Lexicons,
) -> Result<Chain> {
    let mut rng = seed::rng_indexed(seed::derive(cfg.seed, "synth"), index as u64);
    let mut draft = Draft::fluent(&sentences[index]);
    let mut states = vec![draft.clone()];
    let mut types = Vec::new();
    for _ in 0..cfg.max_injections_per_sentence {
        let options: Vec<(DisfluencyType, f64)> = DisfluencyType::ALL
            .iter()
            .map(|&t| (t, cfg.weight(t)))
            .filter(|&(t, w)| w > 0.0 && feasible(&draft, t, lex))
            .collect();
        let Ok(&(dtype, _)) = options.choose_weighted(&mut rng, |o| o.1) else {
            break;
        };
        let donor = if sentences.len() > 1 {
            let mut j = rng.random_range(0..sentences.len() - 1);
            if j >= index {
                j += 1;
            }
            Some(sentences[j].as_slice())
        } else {
            None
        };
        let opts = InjectOptions {
            stutter_max_fragments: cfg.stutter_max_fragments,
            donor,
            word_pool: Some(word_pool),
        };
        apply(&mut draft, dtype, &mut rng, lex, &opts)?;
        states.push(draft.clone());
        types.push(dtype);
    }
    Ok(Chain { states, types })
}

pub fn synthesize_corpus(fluent_sentences: &[Vec<String>], cfg: &SynthConfig, lex: &Lexicons) -> Result<Corpus> {
    synthesize_with_report(fluent_sentences, cfg, lex, 1).map(|(c, _)| c)
}

/// Generates one disfluent pair per input sentence.
///
/// Each sentence gets its own seeded chain of up to
/// `max_injections_per_sentence` injections (so the result does not depend
/// on `jobs`); a sequential pass then picks, per sentence, the chain length
/// that keeps the running disfluent fraction closest to the budget.
pub fn synthesize_with_report(
    fluent_sentences: &[Vec<String>],
    cfg: &SynthConfig,
    lex: &Lexicons,
    jobs: usize,
) -> Result<(Corpus, SynthReport)> {
    cfg.validate()?;
    for (dtype, list_empty) in [
        (DisfluencyType::FilledPause, lex.filled_pauses.is_empty()),
        (DisfluencyType::Interjection, lex.interjections.is_empty()),
        (DisfluencyType::DiscourseMarker, lex.discourse_markers.is_empty()),
        (DisfluencyType::Edit, lex.edit_phrases.is_empty()),
    ] {
        if cfg.weight(dtype) > 0.0 && list_empty {
            return Err(Error::Lexicon(format!(
                "{dtype} has positive weight but its lexicon list is empty"
            )));
        }
    }
    if let Some(i) = fluent_sentences.iter().position(|s| s.is_empty()) {
        return Err(Error::Precondition(format!("fluent sentence {i} is empty")));
    }

    let mut word_pool: Vec<String> = fluent_sentences.iter().flatten().cloned().collect();
    word_pool.sort();
    word_pool.dedup();

    let n = fluent_sentences.len();
    let jobs = jobs.max(1).min(n.max(1));
    let chains: Vec<Chain> = if jobs == 1 {
        (0..n)
            .map(|i| build_chain(i, fluent_sentences, &word_pool, cfg, lex))
            .collect::<Result<_>>()?
    } else {
        let chunk = n.div_ceil(jobs);
        let parts: Vec<Result<Vec<Chain>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    let word_pool = &word_pool;
                    s.spawn(move || {
                        (start..(start + chunk).min(n))
                            .map(|i| build_chain(i, fluent_sentences, word_pool, cfg, lex))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("synthesis worker panicked"))
                .collect()
        });
        let mut chains = Vec::with_capacity(n);
        for p in parts {
            chains.extend(p?);
        }
        chains
    };

    let mut corpus = Corpus::new(lex.language.clone())?;
    let mut type_counts: BTreeMap<DisfluencyType, usize> = BTreeMap::new();
    let (mut total_d, mut total_t) = (0usize, 0usize);
    for chain in chains {
        let first = usize::from(chain.states.len() > 1);
        let mut best = first;
        let mut best_err = f64::INFINITY;
        for (k, state) in chain.states.iter().enumerate().skip(first) {
            let frac = (total_d + state.disfluent_count()) as f64 / (total_t + state.len()) as f64;
            let err = (frac - cfg.budget).abs();
            if err < best_err {
                best = k;
                best_err = err;
            }
        }
        for &t in &chain.types[..best] {
            *type_counts.entry(t).or_default() += 1;
        }
        let chosen = chain.states.into_iter().nth(best).unwrap();
        total_d += chosen.disfluent_count();
        total_t += chosen.len();
        corpus.labeled.push(chosen.into_pair(&lex.language));
    }

    let achieved = if total_t == 0 {
        0.0
    } else {
        total_d as f64 / total_t as f64
    };
    if n > 0 && (achieved - cfg.budget).abs() > BUDGET_TOLERANCE {
        return Err(Error::BudgetUnreachable {
            budget: cfg.budget,
            achieved,
        });
    }
    let report = SynthReport {
        sentences: n,
        tokens: total_t,
        disfluent_tokens: total_d,
        achieved_fraction: achieved,
        type_counts,
    };
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn labels(s: &str) -> Vec<LabelTag> {
        s.split_whitespace().map(|l| l.parse().unwrap()).collect()
    }

    #[test]
    fn filled_pause_rule() {
        let mut d = Draft::fluent(&toks("what about the event"));
        d.insert_disfluent(3, &toks("uh"));
        assert_eq!(d.tokens, toks("what about the uh event"));
        assert_eq!(d.labels, labels("F F F D F"));
    }

    #[test]
    fn repetition_rule_marks_earlier_copy() {
        let mut d = Draft::fluent(&toks("i am going"));
        d.repeat_window(1, 1);
        assert_eq!(d.tokens, toks("i am am going"));
        assert_eq!(d.labels, labels("F D F F"));
        let pair = d.into_pair("en");
        assert_eq!(pair.fluent(), toks("i am going").as_slice());
    }

    #[test]
    fn stutter_rule() {
        let mut d = Draft::fluent(&toks("it was quite funny"));
        d.insert_disfluent(3, &toks("fu"));
        assert_eq!(d.tokens, toks("it was quite fu funny"));
        assert_eq!(d.labels, labels("F F F D F"));
    }

    #[test]
    fn stutter_fragment_bounds() {
        let mut rng = seed::rng(0, "t");
        for _ in 0..200 {
            let f = stutter_fragment("funny", &mut rng).unwrap();
            assert!((1..=3).contains(&f.len()) && "funny".starts_with(&f));
            assert_eq!(stutter_fragment("go", &mut rng).unwrap(), "g");
        }
        assert!(matches!(stutter_fragment("a", &mut rng), Err(Error::Precondition(_))));
        // characters, not bytes
        let f = stutter_fragment("घर", &mut rng).unwrap();
        assert_eq!(f, "घ");
    }

    #[test]
    fn precondition_and_lexicon_errors() {
        let lex = Lexicons::english();
        let mut rng = seed::rng(0, "t");
        assert!(matches!(
            inject(&toks("hello"), DisfluencyType::FalseStart, &mut rng, &lex),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            inject(&toks("a i"), DisfluencyType::Stutter, &mut rng, &lex),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            inject(&[], DisfluencyType::FilledPause, &mut rng, &lex),
            Err(Error::Precondition(_))
        ));
        let mut empty = lex.clone();
        empty.filled_pauses.clear();
        assert!(matches!(
            inject(&toks("a b"), DisfluencyType::FilledPause, &mut rng, &empty),
            Err(Error::Lexicon(_))
        ));
    }

    #[test]
    fn discourse_marker_goes_first_and_edit_precedes_true_word() {
        let lex = Lexicons::english();
        let mut rng = seed::rng(3, "t");
        for _ in 0..50 {
            let p = inject(
                &toks("this is a good plan"),
                DisfluencyType::DiscourseMarker,
                &mut rng,
                &lex,
            )
            .unwrap();
            assert!(p.disfluent().labels()[0].is_disfluent());
            let p = inject(&toks("we need four tickets"), DisfluencyType::Edit, &mut rng, &lex).unwrap();
            let l = p.disfluent().labels();
            let first_d = l.iter().position(|l| l.is_disfluent()).unwrap();
            let last_d = l.iter().rposition(|l| l.is_disfluent()).unwrap();
            assert!(l[first_d..=last_d].iter().all(|l| l.is_disfluent()));
            assert!(!l[last_d + 1].is_disfluent(), "edit must be followed by the true word");
        }
    }

    #[test]
    fn one_pause_per_four_tokens_hits_budget_exactly() {
        let sentences: Vec<Vec<String>> = (0..40).map(|i| toks(&format!("a b c w{i}"))).collect();
        let cfg = SynthConfig::only(DisfluencyType::FilledPause, 0.2, 1);
        let (c, report) = synthesize_with_report(&sentences, &cfg, &Lexicons::english(), 1).unwrap();
        assert_eq!(report.achieved_fraction, 0.2);
        assert_eq!(c.disfluent_fraction(), 0.2);
        assert_eq!(report.type_counts[&DisfluencyType::FilledPause], 40);
    }

    #[test]
    fn unreachable_budget_is_reported() {
        let sentences: Vec<Vec<String>> = (0..20).map(|_| toks("a b c d e f g h i j")).collect();
        let mut cfg = SynthConfig::only(DisfluencyType::FilledPause, 0.6, 1);
        cfg.max_injections_per_sentence = 1;
        match synthesize_corpus(&sentences, &cfg, &Lexicons::english()) {
            Err(Error::BudgetUnreachable { achieved, .. }) => assert!((achieved - 1.0 / 11.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn synthesis_is_independent_of_job_count() {
        let sentences = toy::ToyLanguage::base().sentences(60, 9);
        let cfg = SynthConfig::conversational(0.2, 11);
        let lex = Lexicons::english();
        let (a, _) = synthesize_with_report(&sentences, &cfg, &lex, 1).unwrap();
        let (b, _) = synthesize_with_report(&sentences, &cfg, &lex, 4).unwrap();
        assert_eq!(a, b);
        let (c, _) = synthesize_with_report(&sentences, &cfg, &lex, 1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SynthConfig::conversational(1.0, 0);
        assert!(cfg.validate().is_err());
        cfg.budget = 0.2;
        cfg.type_weights = [0.0; 7];
        assert!(cfg.validate().is_err());
        cfg.type_weights[0] = -1.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn every_rule_preserves_source(
            words in proptest::collection::vec("[a-z]{1,6}", 2..12),
            type_idx in 0usize..7,
            seed in any::<u64>(),
            max_frag in 1usize..4,
        ) {
            let dtype = DisfluencyType::ALL[type_idx];
            let lex = Lexicons::english();
            let mut rng = seed::rng(seed, "prop");
            let donor = toks("mondays dont work for me");
            let opts = InjectOptions { stutter_max_fragments: max_frag, donor: Some(&donor), word_pool: None };
            match inject_with(&words, dtype, &mut rng, &lex, &opts) {
                Ok(pair) => {
                    prop_assert_eq!(pair.fluent(), words.as_slice());
                    prop_assert_eq!(pair.disfluent().fluent_tokens(), words.clone());
                    prop_assert!(pair.disfluent().disfluent_count() >= 1);
                }
                Err(Error::Precondition(_)) => {
                    prop_assert!(dtype == DisfluencyType::Stutter);
                    prop_assert!(words.iter().all(|w| w.chars().count() < 2));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
