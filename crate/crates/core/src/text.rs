//! Text cleaning and surface tokenization.
//!
//! Cleaning removes links, account tags, e-mail addresses, emoji, quoted
//! spans and encoding debris, and collapses runs of a repeated punctuation
//! mark into one. Casing, stopwords and spelling are left alone.
//!
//! Tokens are whitespace-delimited words with leading and trailing
//! punctuation runs detached as separate tokens. Each token remembers
//! whether it was preceded by a space, so [`detokenize`] reverses
//! [`tokenize`] exactly on cleaned text.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_properties::{GeneralCategory, GeneralCategoryGroup, UnicodeEmoji, UnicodeGeneralCategory};

static QUOTE_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)\[quote[^\]]*\].*?\[/quote\]").unwrap());
static QUOTE_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*>.*$").unwrap());
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|ftp://|www\.)\S+").unwrap());
static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{L}\p{N}._%+\-]+@[\p{L}\p{N}\-]+(?:\.[\p{L}\p{N}\-]+)+").unwrap());
static ACCOUNT_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[\p{L}\p{N}_.]+").unwrap());

/// Upper bound on cleaning passes. Every pass that changes the string makes
/// it strictly shorter, so the loop reaches a fixed point long before this.
const MAX_PASSES: usize = 16;

/// Cleans one raw post body. Total and idempotent; never lengthens its input.
pub fn clean_text(raw: &str) -> String {
    let mut current = raw.to_string();
    for _ in 0..MAX_PASSES {
        let next = clean_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn clean_pass(s: &str) -> String {
    let s = fix_mojibake(s);
    let s = QUOTE_BLOCK.replace_all(&s, " ");
    let s = QUOTE_LINE.replace_all(&s, "");
    let s: String = s.chars().filter(|&c| !is_debris(c)).collect();
    let s = URL.replace_all(&s, " ");
    let s = EMAIL.replace_all(&s, " ");
    let s = ACCOUNT_TAG.replace_all(&s, " ");
    let s = strip_emoji(&s);
    let s = collapse_repeated_punctuation(&s);
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replacement characters and invisible control/format characters.
fn is_debris(c: char) -> bool {
    if c == '\u{FFFD}' {
        return true;
    }
    if c.is_whitespace() {
        return false;
    }
    // ZWJ and variation selectors are handled together with the emoji they glue.
    if c == '\u{200D}' {
        return false;
    }
    matches!(c.general_category(), GeneralCategory::Control | GeneralCategory::Format)
}

fn is_emoji(c: char) -> bool {
    // '#', '*' and the digits carry the Emoji property but are ordinary text here.
    !c.is_ascii() && c.is_emoji_char_or_emoji_component()
}

fn strip_emoji(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_run = false;
    for c in s.chars() {
        if is_emoji(c) || (in_run && is_variation_selector(c)) {
            if !in_run {
                out.push(' ');
                in_run = true;
            }
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}

fn is_variation_selector(c: char) -> bool {
    ('\u{FE00}'..='\u{FE0F}').contains(&c)
}

/// True for Unicode punctuation (P*) and the ASCII punctuation set.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// True when the token is non-empty and consists solely of punctuation.
pub fn is_punctuation_only(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punctuation)
}

fn collapse_repeated_punctuation(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev: Option<char> = None;
    for c in s.chars() {
        if prev == Some(c) && is_punctuation(c) {
            continue;
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

/// Repairs UTF-8 text that was decoded as Latin-1 / Windows-1252, word by word.
fn fix_mojibake(s: &str) -> String {
    if s.is_ascii() {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    for c in s.chars() {
        if c.is_whitespace() {
            out.push_str(&repair_word(&word));
            word.clear();
            out.push(c);
        } else {
            word.push(c);
        }
    }
    out.push_str(&repair_word(&word));
    out
}

fn repair_word(word: &str) -> String {
    if word.is_ascii() {
        return word.to_string();
    }
    let Some(bytes) = word.chars().map(cp1252_byte).collect::<Option<Vec<u8>>>() else {
        return word.to_string();
    };
    match String::from_utf8(bytes) {
        Ok(repaired) if repaired != word => repaired,
        _ => word.to_string(),
    }
}

/// Inverse of the Windows-1252 decoding table (Latin-1 for the C1 range gaps).
fn cp1252_byte(c: char) -> Option<u8> {
    let b = match c {
        '\u{0000}'..='\u{00FF}' => c as u32 as u8,
        '€' => 0x80,
        '‚' => 0x82,
        'ƒ' => 0x83,
        '„' => 0x84,
        '…' => 0x85,
        '†' => 0x86,
        '‡' => 0x87,
        'ˆ' => 0x88,
        '‰' => 0x89,
        'Š' => 0x8A,
        '‹' => 0x8B,
        'Œ' => 0x8C,
        'Ž' => 0x8E,
        '‘' => 0x91,
        '’' => 0x92,
        '“' => 0x93,
        '”' => 0x94,
        '•' => 0x95,
        '–' => 0x96,
        '—' => 0x97,
        '˜' => 0x98,
        '™' => 0x99,
        'š' => 0x9A,
        '›' => 0x9B,
        'œ' => 0x9C,
        'ž' => 0x9E,
        'Ÿ' => 0x9F,
        _ => return None,
    };
    Some(b)
}

/// A surface token. `space_before` records whether whitespace preceded it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub space_before: bool,
}

impl Token {
    pub fn new(text: impl Into<String>, space_before: bool) -> Self {
        Self { text: text.into(), space_before }
    }
}

/// Splits on whitespace, then detaches the leading and trailing punctuation
/// runs of each word. A word made only of punctuation stays one token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (i, word) in text.split_whitespace().enumerate() {
        let spaced = i > 0;
        if is_punctuation_only(word) {
            tokens.push(Token::new(word, spaced));
            continue;
        }
        let start = word.find(|c: char| !is_punctuation(c)).unwrap_or(0);
        let end = word
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punctuation(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(word.len());
        let mut first = true;
        for piece in [&word[..start], &word[start..end], &word[end..]] {
            if piece.is_empty() {
                continue;
            }
            tokens.push(Token::new(piece, spaced && first));
            first = false;
        }
    }
    tokens
}

pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && t.space_before {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

/// Surface strings of a token list.
pub fn surface(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(|t| t.text.clone()).collect()
}

/// Renders bare token strings, attaching punctuation-only tokens to the
/// preceding word.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let spaced: Vec<Token> = tokens
        .iter()
        .map(|t| Token::new(t.as_ref(), !is_punctuation_only(t.as_ref())))
        .collect();
    detokenize(&spaced)
}
