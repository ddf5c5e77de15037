//! Rule-based noun tagger used for offline mention extraction.
//!
//! Capitalized tokens inside a sentence are proper nouns. A capitalized
//! sentence-initial token is a common noun when the lexicon knows it and a
//! proper noun otherwise. Lowercase tokens are common nouns when the lexicon
//! knows them (after plural stripping) or when they occur at least
//! [`FREQUENT_NOUN_MIN`] times in the text. Adjacent nouns of the same class
//! separated by exactly one space are merged into one mention.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Occurrence count at which an unknown lowercase token counts as a noun.
pub const FREQUENT_NOUN_MIN: usize = 3;

static NOUNS_RAW: &str = include_str!("data/nouns.txt");
static STOPWORDS_RAW: &str = include_str!("data/stopwords.txt");

fn nouns() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| NOUNS_RAW.split_whitespace().collect())
}

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_RAW.split_whitespace().collect())
}

pub fn is_stopword(lower: &str) -> bool {
    stopwords().contains(lower)
}

/// Lexicon lookup with naive English plural stripping.
pub fn is_lexicon_noun(lower: &str) -> bool {
    let set = nouns();
    if set.contains(lower) {
        return true;
    }
    if let Some(stem) = lower.strip_suffix("ies") {
        if set.contains(format!("{stem}y").as_str()) {
            return true;
        }
    }
    if let Some(stem) = lower.strip_suffix("es") {
        if set.contains(stem) {
            return true;
        }
    }
    if let Some(stem) = lower.strip_suffix('s') {
        if set.contains(stem) {
            return true;
        }
    }
    false
}

/// A noun or noun-phrase mention with char offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    /// char offsets
    pub start: usize,
    pub end: usize,
    pub sentence_initial: bool,
    /// whitespace between the previous token and this one is a single space
    pub single_space_before: bool,
}

fn is_connector(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

pub(crate) fn tokenize(text: &str) -> Vec<Token<'_>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut gap_start = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < chars.len() {
            let c = chars[i].1;
            if c.is_alphanumeric() {
                i += 1;
            } else if is_connector(c) && i + 1 < chars.len() && chars[i + 1].1.is_alphanumeric() {
                i += 2;
            } else {
                break;
            }
        }
        let gap = &chars[gap_start..start];
        let sentence_initial = tokens.is_empty()
            || gap
                .iter()
                .any(|&(_, c)| matches!(c, '.' | '!' | '?' | '\n' | ':' | ';'));
        let single_space_before = gap.len() == 1 && gap[0].1 == ' ';
        let byte_start = chars[start].0;
        let byte_end = chars.get(i).map_or(text.len(), |&(b, _)| b);
        tokens.push(Token {
            text: &text[byte_start..byte_end],
            start,
            end: i,
            sentence_initial,
            single_space_before,
        });
        gap_start = i;
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NounClass {
    Proper,
    Common,
}

fn classify(token: &Token<'_>, lower: &str, counts: &HashMap<String, usize>) -> Option<NounClass> {
    let n_chars = token.end - token.start;
    if n_chars < 2 || is_stopword(lower) {
        return None;
    }
    let first = token.text.chars().next()?;
    if first.is_numeric() {
        return None;
    }
    if first.is_uppercase() {
        if token.sentence_initial && is_lexicon_noun(lower) {
            return Some(NounClass::Common);
        }
        return Some(NounClass::Proper);
    }
    if is_lexicon_noun(lower) || counts.get(lower).copied().unwrap_or(0) >= FREQUENT_NOUN_MIN {
        return Some(NounClass::Common);
    }
    None
}

/// Extracts noun and noun-phrase mentions with exact char offsets.
pub fn extract_mentions(text: &str) -> Vec<Mention> {
    let tokens = tokenize(text);
    let lowers: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for (tok, lower) in tokens.iter().zip(&lowers) {
        if tok.text.chars().next().is_some_and(char::is_lowercase) {
            *counts.entry(lower.clone()).or_default() += 1;
        }
    }

    let mut mentions = Vec::new();
    let mut run: Option<(NounClass, usize, usize)> = None;
    let char_to_byte: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let flush = |run: &mut Option<(NounClass, usize, usize)>, out: &mut Vec<Mention>| {
        if let Some((_, start, end)) = run.take() {
            out.push(Mention {
                surface: text[char_to_byte[start]..char_to_byte[end]].to_string(),
                start,
                end,
            });
        }
    };
    for (tok, lower) in tokens.iter().zip(&lowers) {
        let class = classify(tok, lower, &counts);
        match (class, run) {
            (Some(c), Some((rc, start, _))) if c == rc && tok.single_space_before && !tok.sentence_initial => {
                run = Some((rc, start, tok.end));
            }
            (Some(c), _) => {
                flush(&mut run, &mut mentions);
                run = Some((c, tok.start, tok.end));
            }
            (None, _) => flush(&mut run, &mut mentions),
        }
    }
    flush(&mut run, &mut mentions);
    mentions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        extract_mentions(text).into_iter().map(|m| m.surface).collect()
    }

    // Hand-applied tagger rules on the sentence:
    //   Irish   sentence-initial, capitalized, not in lexicon  -> proper
    //   Water   capitalized, mid-sentence                      -> proper (merged)
    //   charges lowercase, lexicon "charge"+s                   -> common
    //   protest lowercase, lexicon                              -> common (merged)
    //   in      stopword
    //   Dublin  capitalized, mid-sentence                      -> proper
    #[test]
    fn irish_water_sentence() {
        let text = "Irish Water charges protest in Dublin";
        let ms = extract_mentions(text);
        assert_eq!(
            ms,
            vec![
                Mention {
                    surface: "Irish Water".into(),
                    start: 0,
                    end: 11
                },
                Mention {
                    surface: "charges protest".into(),
                    start: 12,
                    end: 27
                },
                Mention {
                    surface: "Dublin".into(),
                    start: 31,
                    end: 37
                },
            ]
        );
    }

    #[test]
    fn empty_and_function_words() {
        assert!(extract_mentions("").is_empty());
        assert!(extract_mentions("the the of of").is_empty());
    }

    #[test]
    fn offsets_are_chars() {
        let text = "Café owners met Zoë Ní Bhriain in Galway.";
        for m in extract_mentions(text) {
            let got: String = text.chars().skip(m.start).take(m.end - m.start).collect();
            assert_eq!(got, m.surface);
        }
        assert!(surfaces(text).contains(&"Zoë Ní Bhriain".to_string()));
    }

    #[test]
    fn frequent_unknown_nouns_kept() {
        let text = "blorp is here. we saw blorp and more blorp today";
        assert_eq!(surfaces(text), ["blorp", "blorp", "blorp"]);
        assert!(surfaces("blorp and blorp").is_empty());
    }

    #[test]
    fn punctuation_breaks_merge() {
        assert_eq!(surfaces("Kenny, Martin and Adams"), ["Kenny", "Martin", "Adams"]);
        assert_eq!(surfaces("Kim Jong-nam died"), ["Kim Jong-nam"]);
        // double space does not merge
        assert_eq!(surfaces("met Enda  Kenny"), ["Enda", "Kenny"]);
    }

    #[test]
    fn sentence_start_common_noun() {
        assert_eq!(
            surfaces("Protesters gathered. Police arrived"),
            ["Protesters", "Police"]
        );
    }
}
