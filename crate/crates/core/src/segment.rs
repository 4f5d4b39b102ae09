//! Rule-based sentence splitting with character offsets.
//!
//! Offsets count Unicode scalar values (`char`s), not bytes. A boundary is
//! placed after a run of `.`, `!` or `?` (plus any closing quotes or
//! brackets) when the next non-space character starts a new sentence: an
//! uppercase letter, a digit, or an opening quote. A single `.` ending a
//! word from the abbreviation list never ends a sentence.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Abbreviations after which a period does not end a sentence, one per line.
pub const ABBREVIATIONS: &str = include_str!("../resources/abbreviations.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    /// False for a trailing fragment without terminal punctuation.
    pub terminated: bool,
}

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect()
    })
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}' | '\u{00AB}')
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || is_opening(c)
}

/// True when the single period at `dot` closes a listed abbreviation.
fn ends_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    while start < dot && is_opening(chars[start]) {
        start += 1;
    }
    let token: String = chars[start..=dot].iter().collect();
    abbreviations().contains(&token.to_lowercase())
}

pub fn split_sentences(source: &str) -> Vec<Sentence> {
    let chars: Vec<char> = source.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;

    let push = |out: &mut Vec<Sentence>, s: usize, e: usize, terminated: bool| {
        out.push(Sentence {
            text: chars[s..e].iter().collect(),
            char_start: s,
            char_end: e,
            terminated,
        });
    };

    while i < n {
        let c = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(i);
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }

        let mut end = i;
        while end < n && is_terminal(chars[end]) {
            end += 1;
        }
        let single_period = end - i == 1 && c == '.';
        while end < n && is_closing(chars[end]) {
            end += 1;
        }

        let boundary = if end == n {
            true
        } else if chars[end].is_whitespace() {
            let mut k = end;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            k == n || starts_sentence(chars[k])
        } else {
            false
        };

        if boundary && !(single_period && end < n && ends_abbreviation(&chars, i)) {
            push(&mut out, start.take().unwrap_or(i), end, true);
        }
        i = end;
    }

    if let Some(s) = start {
        let mut e = n;
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if e > s {
            push(&mut out, s, e, false);
        }
    }
    out
}

/// Substring by character offsets.
pub fn char_slice(source: &str, start: usize, end: usize) -> String {
    source.chars().skip(start).take(end.saturating_sub(start)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        split_sentences(s).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn empty_and_blank() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n\t ").is_empty());
    }

    #[test]
    fn two_plain_sentences() {
        assert_eq!(texts("Hello world. It rained."), ["Hello world.", "It rained."]);
    }

    #[test]
    fn abbreviation_suppresses_boundary() {
        assert_eq!(texts("Dr. Smith left. He ran."), ["Dr. Smith left.", "He ran."]);
        assert_eq!(texts("It hit the U.S. Then it left."), ["It hit the U.S. Then it left."]);
    }

    #[test]
    fn decimal_without_terminal() {
        let s = split_sentences("Pi is 3.14 exactly");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text, "Pi is 3.14 exactly");
        assert!(!s[0].terminated);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        assert_eq!(
            texts("He said \"Stop.\" Then he left!"),
            ["He said \"Stop.\"", "Then he left!"]
        );
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(texts("Wait. then go."), ["Wait. then go."]);
    }

    #[test]
    fn punctuation_runs() {
        assert_eq!(texts("Really?! Yes... 3 more."), ["Really?!", "Yes...", "3 more."]);
    }

    #[test]
    fn offsets_are_chars() {
        let src = "  Café é. Über alles.  ";
        let s = split_sentences(src);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].char_start, 2);
        assert_eq!(char_slice(src, s[1].char_start, s[1].char_end), "Über alles.");
        assert!(s.iter().all(|x| x.terminated));
    }
}
