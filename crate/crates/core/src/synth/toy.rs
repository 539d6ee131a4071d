//! A small template grammar producing fluent sentences for a synthetic
//! English-like language and related "dialects" of it. Used to build
//! desk-scale corpora when no real fluent transcripts are at hand.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::Lexicons;
use crate::seed;

const PRONOUNS: &[&str] = &["i", "you", "we", "they", "he", "she"];
const DETERMINERS: &[&str] = &["the", "a", "my", "your", "this", "that", "our"];
const PREPOSITIONS: &[&str] = &["to", "from", "with", "near", "for", "at", "in"];
const AUXILIARIES: &[&str] = &["will", "can", "should", "might", "must"];

const NOUNS: &[&str] = &[
    "plan", "event", "ticket", "car", "house", "book", "train", "meeting", "letter", "phone", "dinner", "teacher",
    "doctor", "friend", "market", "garden", "river", "movie", "song", "window", "table", "report", "bag", "dog",
    "city", "village", "school", "bridge", "road", "shirt", "camera", "bottle", "lamp", "key", "door", "bicycle",
    "kitchen", "office", "festival", "wedding", "exam", "lesson", "question", "answer", "story", "picture", "flight",
    "hotel", "museum", "library", "coffee", "sandwich", "package", "message", "computer", "garage", "blanket",
    "umbrella", "painting", "concert", "stadium", "tower", "island", "forest", "mountain", "beach", "engine",
    "printer", "ladder", "basket", "jacket", "pillow", "mirror", "wallet", "ribbon", "candle",
];

// (base, past)
const VERBS: &[(&str, &str)] = &[
    ("see", "saw"),
    ("buy", "bought"),
    ("bring", "brought"),
    ("find", "found"),
    ("need", "needed"),
    ("want", "wanted"),
    ("clean", "cleaned"),
    ("open", "opened"),
    ("close", "closed"),
    ("fix", "fixed"),
    ("paint", "painted"),
    ("visit", "visited"),
    ("call", "called"),
    ("sell", "sold"),
    ("carry", "carried"),
    ("book", "booked"),
    ("check", "checked"),
    ("move", "moved"),
    ("watch", "watched"),
    ("build", "built"),
    ("borrow", "borrowed"),
    ("return", "returned"),
    ("order", "ordered"),
    ("send", "sent"),
    ("lose", "lost"),
    ("take", "took"),
    ("leave", "left"),
    ("plan", "planned"),
    ("cancel", "cancelled"),
    ("share", "shared"),
];

const ADJECTIVES: &[&str] = &[
    "good",
    "new",
    "old",
    "big",
    "small",
    "red",
    "blue",
    "quiet",
    "busy",
    "funny",
    "early",
    "late",
    "cheap",
    "expensive",
    "beautiful",
    "broken",
    "clean",
    "dirty",
    "heavy",
    "light",
    "long",
    "short",
    "warm",
    "cold",
    "strange",
    "simple",
    "famous",
    "empty",
    "crowded",
    "wooden",
];

const PLACES: &[&str] = &[
    "home",
    "work",
    "london",
    "delhi",
    "mumbai",
    "kolkata",
    "pune",
    "california",
    "downtown",
    "campus",
    "station",
    "airport",
    "hospital",
    "temple",
    "park",
];

const TIMES: &[&str] = &[
    "today",
    "tomorrow",
    "yesterday",
    "tonight",
    "now",
    "later",
    "soon",
    "monday",
    "tuesday",
    "friday",
    "sunday",
    "again",
    "early",
    "everyday",
];

/// Draws an index with probability proportional to 1/(rank+1).
fn zipf_index<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let total: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for r in 0..n {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return r;
        }
    }
    n - 1
}

#[derive(Clone, Debug)]
pub struct ToyLanguage {
    name: String,
    shift: f64,
    dialect_seed: u64,
}

impl ToyLanguage {
    /// The base language, tagged "en".
    pub fn base() -> Self {
        Self {
            name: "en".into(),
            shift: 0.0,
            dialect_seed: 0,
        }
    }

    /// A related dialect: each content word independently takes a dialect
    /// surface form with probability `shift`. Function words are shared.
    pub fn dialect(name: impl Into<String>, shift: f64, dialect_seed: u64) -> Self {
        Self {
            name: name.into(),
            shift: shift.clamp(0.0, 1.0),
            dialect_seed,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Surface form of a content word in this dialect.
    pub fn form(&self, word: &str) -> String {
        if self.shift == 0.0 {
            return word.to_string();
        }
        let h = seed::derive(self.dialect_seed, word);
        if (h >> 11) as f64 / (1u64 << 53) as f64 >= self.shift {
            return word.to_string();
        }
        let shifted: String = word
            .chars()
            .map(|c| match c {
                'a' => 'o',
                'e' => 'i',
                'i' => 'e',
                'o' => 'u',
                'u' => 'a',
                other => other,
            })
            .collect();
        format!("{shifted}a")
    }

    fn content<R: Rng + ?Sized>(&self, list: &[&str], rng: &mut R) -> String {
        self.form(list[zipf_index(list.len(), rng)])
    }

    fn noun_phrase<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<String>) {
        out.push(DETERMINERS.choose(rng).unwrap().to_string());
        if rng.random_bool(0.4) {
            out.push(self.content(ADJECTIVES, rng));
        }
        out.push(self.content(NOUNS, rng));
    }

    fn verb<R: Rng + ?Sized>(&self, past: bool, rng: &mut R) -> String {
        let (base, past_form) = VERBS[zipf_index(VERBS.len(), rng)];
        self.form(if past { past_form } else { base })
    }

    /// One fluent sentence.
    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<String> {
        let mut s = Vec::new();
        let push = |s: &mut Vec<String>, w: &str| s.push(w.to_string());
        match rng.random_range(0..7) {
            0 => {
                push(&mut s, PRONOUNS.choose(rng).unwrap());
                s.push(self.verb(true, rng));
                self.noun_phrase(rng, &mut s);
                if rng.random_bool(0.5) {
                    push(&mut s, PREPOSITIONS.choose(rng).unwrap());
                    s.push(self.content(PLACES, rng));
                }
                if rng.random_bool(0.5) {
                    s.push(self.content(TIMES, rng));
                }
            }
            1 => {
                push(&mut s, PRONOUNS.choose(rng).unwrap());
                push(&mut s, AUXILIARIES.choose(rng).unwrap());
                s.push(self.verb(false, rng));
                self.noun_phrase(rng, &mut s);
                s.push(self.content(TIMES, rng));
            }
            2 => {
                push(&mut s, "can");
                push(&mut s, "you");
                s.push(self.verb(false, rng));
                self.noun_phrase(rng, &mut s);
                if rng.random_bool(0.6) {
                    push(&mut s, PREPOSITIONS.choose(rng).unwrap());
                    self.noun_phrase(rng, &mut s);
                }
            }
            3 => {
                self.noun_phrase(rng, &mut s);
                push(&mut s, if rng.random_bool(0.5) { "is" } else { "was" });
                if rng.random_bool(0.3) {
                    push(&mut s, "very");
                }
                s.push(self.content(ADJECTIVES, rng));
                if rng.random_bool(0.4) {
                    s.push(self.content(TIMES, rng));
                }
            }
            4 => {
                push(&mut s, "what");
                push(&mut s, "about");
                self.noun_phrase(rng, &mut s);
                if rng.random_bool(0.4) {
                    push(&mut s, "at");
                    s.push(self.content(PLACES, rng));
                }
            }
            5 => {
                push(&mut s, PRONOUNS.choose(rng).unwrap());
                push(&mut s, "need");
                s.push(self.content(&["two", "three", "four", "five", "some", "many"], rng));
                s.push(self.content(NOUNS, rng));
                push(&mut s, "for");
                self.noun_phrase(rng, &mut s);
            }
            _ => {
                push(&mut s, PRONOUNS.choose(rng).unwrap());
                push(&mut s, "am");
                push(&mut s, "going");
                push(&mut s, "to");
                s.push(self.content(PLACES, rng));
                if rng.random_bool(0.5) {
                    push(&mut s, "with");
                    self.noun_phrase(rng, &mut s);
                }
                if rng.random_bool(0.5) {
                    s.push(self.content(TIMES, rng));
                }
            }
        }
        s
    }

    /// `n` fluent sentences, deterministic in `seed`.
    pub fn sentences(&self, n: usize, seed: u64) -> Vec<Vec<String>> {
        let mut rng = seed::rng(seed, &format!("toy/{}", self.name));
        (0..n).map(|_| self.sentence(&mut rng)).collect()
    }

    /// English lexicons, relabeled for this dialect, with the dialect
    /// transform applied to interjections.
    pub fn lexicons(&self) -> Lexicons {
        let mut lex = Lexicons::english();
        lex.language = self.name.clone();
        lex.interjections = lex.interjections.iter().map(|w| self.form(w)).collect();
        lex
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize;

    #[test]
    fn sentences_are_normalized_and_deterministic() {
        let lang = ToyLanguage::base();
        let a = lang.sentences(200, 5);
        assert_eq!(a, lang.sentences(200, 5));
        assert_ne!(a, lang.sentences(200, 6));
        for s in &a {
            assert!(s.len() >= 2);
            assert_eq!(&normalize(&s.join(" ")), s);
        }
    }

    #[test]
    fn dialect_shares_function_words_and_shifts_some_content() {
        let base = ToyLanguage::base();
        let hi = ToyLanguage::dialect("hi", 0.5, 1);
        assert_eq!(base.form("plan"), "plan");
        let shifted = NOUNS.iter().filter(|w| hi.form(w) != **w).count();
        assert!(shifted > 10 && shifted < NOUNS.len() - 10, "{shifted}");
        assert_eq!(hi.form("plan"), hi.form("plan"));
        assert_eq!(ToyLanguage::dialect("x", 1.0, 1).form("plan"), "plona");
    }
}
