//! Event text normalization: tokenize, drop stopwords, stem, canonicalize numbers.
//!
//! The log dialect wraps keys in `@...@` and values in `#...#`, separated by
//! `=` and `,`, with `&...&` around the event title. Those characters and
//! whitespace are delimiters; `.` and `-` stay inside tokens so dotted UIDs
//! (`1.3.12.2.1107`) and values like `cr-ca` survive intact.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// One raw log event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: String,
    pub event_type: String,
    pub event_id: String,
    pub text: String,
}

/// Preprocessed tokens of one event, in left-to-right order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub event_id: String,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(event_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            event_id: event_id.into(),
            tokens,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }
}

/// Stopword set used by [`preprocess_event`].
///
/// Matching is case-sensitive against the raw fragment, before lowercasing:
/// the list is lowercase, so `"of"` is dropped while `"Of"`, `"A"` or `"Off"`
/// survive as `of`, `a`, `off`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Stopwords(words.into_iter().map(Into::into).collect())
    }

    /// The embedded English list (one word per line in `stopwords_en.txt`).
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// Parses a newline-delimited list; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '&' | '@' | '=' | '#' | ',') || c.is_whitespace()
}

/// Splits on the dialect delimiters, keeping the original case.
fn fragments(text: &str) -> impl Iterator<Item = &str> {
    text.split(is_delimiter).filter(|f| !f.is_empty())
}

/// Splits raw event text into lowercase fragments.
pub fn tokenize(text: &str) -> Vec<String> {
    fragments(text).map(str::to_lowercase).collect()
}

/// True for canonical or raw decimal numbers: optional minus, digits, at most
/// one `.` followed by digits.
pub fn is_decimal(token: &str) -> bool {
    let digits = token.strip_prefix('-').unwrap_or(token);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    all_digits(int) && frac.is_none_or(all_digits)
}

/// True when `token` is in canonical NUMBER form (exactly two fraction digits).
pub fn is_number_token(token: &str) -> bool {
    is_decimal(token) && token.split_once('.').is_some_and(|(_, f)| f.len() == 2)
}

/// Rewrites a decimal number with exactly two fraction digits, rounding half
/// away from zero. Anything that is not a decimal passes through unchanged.
///
/// Rounding is done on the digit string, so `59.975` becomes `59.98` without
/// binary floating-point error.
pub fn normalize_number(token: &str) -> String {
    if !is_decimal(token) {
        return token.to_string();
    }
    let (negative, digits) = match token.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, token),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));

    // Scaled integer digits: int ++ first two fraction digits, as a decimal string.
    let mut scaled: Vec<u8> = int.bytes().map(|b| b - b'0').collect();
    let frac_bytes: Vec<u8> = frac.bytes().map(|b| b - b'0').collect();
    scaled.push(frac_bytes.first().copied().unwrap_or(0));
    scaled.push(frac_bytes.get(1).copied().unwrap_or(0));
    if frac_bytes.get(2).is_some_and(|&d| d >= 5) {
        let mut i = scaled.len();
        loop {
            if i == 0 {
                scaled.insert(0, 1);
                break;
            }
            i -= 1;
            if scaled[i] == 9 {
                scaled[i] = 0;
            } else {
                scaled[i] += 1;
                break;
            }
        }
    }

    let split = scaled.len() - 2;
    let int_part: String = scaled[..split]
        .iter()
        .map(|d| char::from(b'0' + d))
        .collect::<String>();
    let int_part = int_part.trim_start_matches('0');
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let frac_part: String = scaled[split..].iter().map(|d| char::from(b'0' + d)).collect();

    let is_zero = int_part == "0" && frac_part == "00";
    let sign = if negative && !is_zero { "-" } else { "" };
    format!("{sign}{int_part}.{frac_part}")
}

/// Ordered suffix table: `(suffix, replacement, guard)`. At each step the
/// longest matching suffix whose result is an acceptable stem is applied; the
/// process repeats until no rule fires, which makes [`stem`] idempotent.
///
/// `guard` lists characters that must NOT precede the suffix.
const SUFFIX_RULES: &[(&str, &str, &str)] = &[
    ("ation", "", ""),
    ("ient", "y", ""),
    ("ated", "", ""),
    ("eed", "ee", ""),
    ("ing", "", ""),
    ("ion", "", ""),
    ("ice", "", ""),
    ("ist", "", ""),
    ("al", "", ""),
    ("an", "", ""),
    ("en", "", ""),
    ("er", "", ""),
    ("ic", "", ""),
    ("th", "", ""),
    ("us", "", ""),
    ("e", "", "e"),
    ("s", "", "lsu"),
];

/// Final double consonants collapsed to one (`trigg` -> `trig`).
const UNDOUBLE: &[&str] = &["bb", "dd", "gg", "mm", "nn", "pp", "rr", "tt"];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

/// A stem starting with a vowel needs two letters; otherwise three letters
/// with a vowel in the second or third position.
fn acceptable(stem: &str) -> bool {
    let b = stem.as_bytes();
    match b.first() {
        None => false,
        Some(&c) if is_vowel(c) => b.len() >= 2,
        Some(_) => b.len() >= 3 && (is_vowel(b[1]) || is_vowel(b[2])),
    }
}

fn strip_once(word: &str) -> Option<String> {
    let mut best: Option<(usize, String)> = None;
    for &(suffix, replacement, guard) in SUFFIX_RULES {
        let Some(base) = word.strip_suffix(suffix) else {
            continue;
        };
        if base.chars().last().is_some_and(|c| guard.contains(c)) {
            continue;
        }
        let candidate = format!("{base}{replacement}");
        if !acceptable(&candidate) {
            continue;
        }
        if best.as_ref().is_none_or(|(len, _)| suffix.len() > *len) {
            best = Some((suffix.len(), candidate));
        }
    }
    if let Some((_, stem)) = best {
        return Some(stem);
    }
    UNDOUBLE
        .iter()
        .find(|d| word.ends_with(*d))
        .map(|_| word[..word.len() - 1].to_string())
        .filter(|s| acceptable(s))
}

/// Suffix-stripping stemmer for lowercase, non-numeric tokens.
pub fn stem(word: &str) -> String {
    let mut current = word.to_string();
    while let Some(next) = strip_once(&current) {
        current = next;
    }
    current
}

/// Tokenize, drop stopwords, stem words and canonicalize numbers.
pub fn preprocess_event(event: &EventRecord, stopwords: &Stopwords) -> TokenSequence {
    TokenSequence::new(event.event_id.clone(), preprocess_text(&event.text, stopwords))
}

pub fn preprocess_text(text: &str, stopwords: &Stopwords) -> Vec<String> {
    fragments(text)
        .filter(|f| !stopwords.contains(f))
        .map(|f| {
            let lower = f.to_lowercase();
            if is_decimal(&lower) {
                normalize_number(&lower)
            } else if lower.bytes().any(|b| b.is_ascii_alphabetic()) {
                stem(&lower)
            } else {
                lower
            }
        })
        .collect()
}

pub fn preprocess_corpus(events: &[EventRecord], stopwords: &Stopwords) -> Vec<TokenSequence> {
    events
        .iter()
        .map(|e| preprocess_event(e, stopwords))
        .collect()
}
