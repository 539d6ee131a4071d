use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textnorm::normalize;

/// Word lists the injection rules draw from.
///
/// File format: section headers `[filled_pauses]`, `[interjections]`,
/// `[discourse_markers]`, `[edit_phrases]`, then one entry per line with
/// multi-word entries space-separated. Blank lines and `#` comments are
/// ignored. Entries are normalized on load.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicons {
    pub language: String,
    pub filled_pauses: Vec<String>,
    pub interjections: Vec<String>,
    pub discourse_markers: Vec<Vec<String>>,
    pub edit_phrases: Vec<Vec<String>>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl Lexicons {
    /// Built-in lexicon for the synthetic English-like language.
    pub fn english() -> Self {
        Self {
            language: "en".into(),
            filled_pauses: words("uh um er ah hmm mm"),
            interjections: words("ugh oh wow hey yeah oops"),
            discourse_markers: ["well", "you know", "i mean", "like", "so", "actually", "okay so"]
                .iter()
                .map(|s| words(s))
                .collect(),
            edit_phrases: ["i'm sorry", "i mean", "sorry", "no wait", "rather"]
                .iter()
                .map(|s| s.split_whitespace().flat_map(normalize).collect())
                .collect(),
        }
    }

    pub fn parse(text: &str, language: impl Into<String>) -> Result<Self> {
        let mut lex = Self {
            language: language.into(),
            filled_pauses: Vec::new(),
            interjections: Vec::new(),
            discourse_markers: Vec::new(),
            edit_phrases: Vec::new(),
        };
        let mut section: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    s @ ("filled_pauses" | "interjections" | "discourse_markers" | "edit_phrases") => s,
                    other => {
                        return Err(Error::Lexicon(format!("line {}: unknown section [{other}]", idx + 1)));
                    }
                });
                continue;
            }
            let entry = normalize(line);
            if entry.is_empty() {
                continue;
            }
            match section {
                Some("filled_pauses") => lex.filled_pauses.extend(entry),
                Some("interjections") => lex.interjections.extend(entry),
                Some("discourse_markers") => lex.discourse_markers.push(entry),
                Some("edit_phrases") => lex.edit_phrases.push(entry),
                _ => {
                    return Err(Error::Lexicon(format!(
                        "line {}: entry {line:?} outside of any section",
                        idx + 1
                    )))
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>, language: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Lexicon(format!("cannot read lexicon {}: {e}", path.display())))?;
        Self::parse(&text, language)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[filled_pauses]");
        for w in &self.filled_pauses {
            let _ = writeln!(out, "{w}");
        }
        let _ = writeln!(out, "\n[interjections]");
        for w in &self.interjections {
            let _ = writeln!(out, "{w}");
        }
        let _ = writeln!(out, "\n[discourse_markers]");
        for e in &self.discourse_markers {
            let _ = writeln!(out, "{}", e.join(" "));
        }
        let _ = writeln!(out, "\n[edit_phrases]");
        for e in &self.edit_phrases {
            let _ = writeln!(out, "{}", e.join(" "));
        }
        out
    }

    pub(crate) fn require_nonempty<T>(list: &[T], what: &str) -> Result<()> {
        if list.is_empty() {
            Err(Error::Lexicon(format!("{what} list is empty")))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_round_trips_through_text() {
        let en = Lexicons::english();
        assert_eq!(en.edit_phrases[0], vec!["im", "sorry"]);
        let back = Lexicons::parse(&en.to_text(), "en").unwrap();
        assert_eq!(back, en);
    }

    #[test]
    fn rejects_entries_outside_sections() {
        assert!(matches!(Lexicons::parse("uh\n", "en"), Err(Error::Lexicon(_))));
        assert!(matches!(Lexicons::parse("[bogus]\nuh\n", "en"), Err(Error::Lexicon(_))));
    }

    #[test]
    fn missing_file_is_lexicon_error() {
        assert!(matches!(
            Lexicons::load("/no/such/file.lex", "en"),
            Err(Error::Lexicon(_))
        ));
    }
}
