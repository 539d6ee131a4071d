//! Preprocessing: punctuation removal, lower-casing, word tokenization and
//! integer encoding against a word-level vocabulary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

pub const DEFAULT_MAX_LEN: usize = 32;
pub const DEFAULT_MIN_FREQ: usize = 1;

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Strips Unicode punctuation (categories P*), lower-cases and splits on
/// whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|&c| !is_punctuation(c))
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    min_freq: usize,
}

impl Vocabulary {
    /// Counts tokens across every labeled and unlabeled sentence and keeps
    /// those seen at least `min_freq` times. Ids are assigned by descending
    /// frequency, ties broken lexicographically.
    pub fn build(corpora: &[&Corpus], min_freq: usize) -> Result<Self> {
        let seqs = corpora.iter().flat_map(|c| c.all_token_sequences());
        Self::from_sequences(seqs, min_freq)
    }

    pub fn from_sequences<'a, I, S>(seqs: I, min_freq: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]> + 'a,
    {
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seq in seqs {
            for tok in seq.as_ref() {
                if tok == PAD_TOKEN || tok == UNK_TOKEN {
                    continue;
                }
                *counts.entry(tok.clone()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let id_to_token: Vec<String> = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_id_list(id_to_token, min_freq))
    }

    fn from_id_list(id_to_token: Vec<String>, min_freq: usize) -> Self {
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            token_to_id,
            id_to_token,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Maps tokens to ids, truncating to `max_len` and padding with PAD.
    /// The mask is 1 on real tokens and 0 on padding.
    pub fn encode(&self, sentence: &[String], max_len: usize) -> (Vec<usize>, Vec<bool>) {
        assert!(max_len >= 1, "max_len must be at least 1");
        let mut ids = vec![PAD_ID; max_len];
        let mut mask = vec![false; max_len];
        for (i, tok) in sentence.iter().take(max_len).enumerate() {
            ids[i] = self.id(tok);
            mask[i] = true;
        }
        (ids, mask)
    }

    /// Text form: a header line, then one token per line in id order.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#vocab size={} pad={PAD_ID} unk={UNK_ID} min_freq={}\n",
            self.len(),
            self.min_freq
        );
        for t in &self.id_to_token {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format {
            line: 1,
            message: "missing vocabulary header".into(),
        })?;
        let mut size = None;
        let mut min_freq = DEFAULT_MIN_FREQ;
        let body = header.strip_prefix("#vocab").ok_or_else(|| Error::Format {
            line: 1,
            message: "vocabulary header must start with #vocab".into(),
        })?;
        for field in body.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::Format {
                line: 1,
                message: format!("bad header field {field:?}"),
            })?;
            let v: usize = v.parse().map_err(|_| Error::Format {
                line: 1,
                message: format!("bad number in {field:?}"),
            })?;
            match k {
                "size" => size = Some(v),
                "pad" if v != PAD_ID => {
                    return Err(Error::Format {
                        line: 1,
                        message: format!("pad id must be {PAD_ID}"),
                    })
                }
                "unk" if v != UNK_ID => {
                    return Err(Error::Format {
                        line: 1,
                        message: format!("unk id must be {UNK_ID}"),
                    })
                }
                "min_freq" => min_freq = v,
                _ => {}
            }
        }
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        if Some(tokens.len()) != size {
            return Err(Error::Format {
                line: 1,
                message: format!("header size {size:?} but {} tokens listed", tokens.len()),
            });
        }
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(Error::Format {
                line: 2,
                message: "first two entries must be the PAD and UNK tokens".into(),
            });
        }
        let vocab = Self::from_id_list(tokens, min_freq);
        if vocab.token_to_id.len() != vocab.id_to_token.len() {
            return Err(Error::Format {
                line: 0,
                message: "duplicate vocabulary entries".into(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::corpus::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Hex SHA-256 of the text form; checkpoints record it.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn build_vocab(corpora: &[&Corpus], min_freq: usize) -> Result<Vocabulary> {
    Vocabulary::build(corpora, min_freq)
}

pub fn encode(sentence: &[String], vocab: &Vocabulary, max_len: usize) -> (Vec<usize>, Vec<bool>) {
    vocab.encode(sentence, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ParallelPair, TaggedSentence};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn corpus_of(sentences: &[&str]) -> Corpus {
        let labeled = sentences
            .iter()
            .map(|s| ParallelPair::from_tagged(TaggedSentence::fluent(toks(s), "en").unwrap()))
            .collect();
        Corpus::with_labeled("en", labeled).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize("Well, you know, this is a good plan."),
            toks("well you know this is a good plan")
        );
        assert!(normalize("").is_empty());
        assert_eq!(normalize("Um it was quite fu funny"), toks("um it was quite fu funny"));
        // danda is punctuation
        assert_eq!(normalize("मैं घर जा रहा हूँ।"), toks("मैं घर जा रहा हूँ"));
        assert_eq!(normalize("  «Hello»  \u{2014}  WORLD!! "), toks("hello world"));
    }

    #[test]
    fn vocab_threshold_and_counting() {
        let c = corpus_of(&["uh the uh", "a uh b"]);
        let v = build_vocab(&[&c], 2).unwrap();
        assert!(v.contains("uh"));
        assert!(!v.contains("b"));
        assert_eq!(v.id("uh"), 2);

        let single = corpus_of(&["x y z w"]);
        assert_eq!(build_vocab(&[&single], 1).unwrap().len(), 4 + 2);

        let c2 = corpus_of(&["uh the uh", "a uh b"]);
        assert_eq!(build_vocab(&[&c], 1).unwrap(), build_vocab(&[&c2], 1).unwrap());
        assert!(build_vocab(&[&c], 0).is_err());
    }

    #[test]
    fn vocab_order_is_frequency_then_lexicographic() {
        let c = corpus_of(&["b a c a b d"]);
        let v = build_vocab(&[&c], 1).unwrap();
        let order: Vec<_> = (2..v.len()).map(|i| v.token(i).unwrap()).collect();
        assert_eq!(order, ["a", "b", "c", "d"]);
    }

    #[test]
    fn encode_pads_truncates_and_maps_unknowns() {
        let c = corpus_of(&["well you know"]);
        let v = build_vocab(&[&c], 1).unwrap();
        let (ids, mask) = v.encode(&toks("well"), 4);
        assert_eq!(ids, vec![v.id("well"), 0, 0, 0]);
        assert_eq!(mask, vec![true, false, false, false]);
        assert_eq!(v.encode(&toks("zebra"), 2).0, vec![UNK_ID, PAD_ID]);
        let long: Vec<String> = (0..10).map(|_| "well".to_string()).collect();
        let (ids, mask) = v.encode(&long, 8);
        assert_eq!(ids.len(), 8);
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn text_round_trip_and_fingerprint() {
        let c = corpus_of(&["मैं घर", "what about the uh event"]);
        let v = build_vocab(&[&c], 1).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        let other = build_vocab(&[&corpus_of(&["x"])], 1).unwrap();
        assert_ne!(other.fingerprint(), v.fingerprint());
        assert!(Vocabulary::from_text("#vocab size=3 pad=0 unk=1\n[PAD]\n[UNK]\n").is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once.join(" ")), once.clone());
            prop_assert!(once.iter().all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        }

        #[test]
        fn encode_lengths_and_mask(words in proptest::collection::vec("[a-e]{1,3}", 0..20), max_len in 1usize..16) {
            let c = corpus_of(&["a b c"]);
            let v = build_vocab(&[&c], 1).unwrap();
            let (ids, mask) = v.encode(&words, max_len);
            prop_assert_eq!(ids.len(), max_len);
            prop_assert_eq!(mask.len(), max_len);
            for (id, m) in ids.iter().zip(&mask) {
                if !m { prop_assert_eq!(*id, PAD_ID); }
            }
            prop_assert_eq!(mask.iter().filter(|m| **m).count(), words.len().min(max_len));
        }
    }
}
