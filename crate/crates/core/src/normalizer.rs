//! Character classification and Arabic text normalization.
//!
//! Normalization removes tashkeel, tatweel, emoji and HTML markup (entities
//! are decoded first, then tags are replaced by a space), then collapses
//! whitespace. It is applied until a fixed point so that the result is
//! idempotent even for nested markup such as `&amp;lt;b&amp;gt;`.

use std::sync::LazyLock;

use regex::Regex;
use unicode_properties::{GeneralCategoryGroup, UnicodeEmoji, UnicodeGeneralCategory};

use crate::corpus::{Document, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CharClass {
    ArabicLetter,
    ArabicDiacritic,
    Tatweel,
    Digit,
    Punctuation,
    Whitespace,
    Emoji,
    Other,
}

pub const TATWEEL: char = '\u{0640}';

fn in_arabic_block(c: char) -> bool {
    matches!(c,
        '\u{0600}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08FF}'
        | '\u{FB50}'..='\u{FDFF}'
        | '\u{FE70}'..='\u{FEFF}')
}

fn is_digit(c: char) -> bool {
    matches!(c, '0'..='9' | '\u{0660}'..='\u{0669}' | '\u{06F0}'..='\u{06F9}')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

fn is_emoji(c: char) -> bool {
    // ASCII digits, '#' and '*' carry the Emoji property; ZWJ joins Arabic
    // letters as well as emoji sequences.
    !c.is_ascii() && c != '\u{200D}' && c.is_emoji_char_or_emoji_component()
}

/// Total classification of Unicode scalar values. Checks run in a fixed
/// priority so the classes never overlap; Arabic-block digits and
/// punctuation (e.g. `٣`, `؟`, `،`) are classified as such rather than as
/// letters.
pub fn classify_char(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Whitespace
    } else if c == TATWEEL {
        CharClass::Tatweel
    } else if matches!(c, '\u{064B}'..='\u{065F}' | '\u{0670}') {
        CharClass::ArabicDiacritic
    } else if is_digit(c) {
        CharClass::Digit
    } else if in_arabic_block(c) && !is_punctuation(c) {
        CharClass::ArabicLetter
    } else if is_emoji(c) {
        CharClass::Emoji
    } else if is_punctuation(c) {
        CharClass::Punctuation
    } else {
        CharClass::Other
    }
}

static TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)<!--.*?-->|<![A-Za-z][^<>]*>|</?[A-Za-z][A-Za-z0-9:-]*(?:\s[^<>]*)?/?>").unwrap()
});

static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(?:#[0-9]{1,7}|#[xX][0-9A-Fa-f]{1,6}|[A-Za-z][A-Za-z0-9]{1,31});").unwrap());

const NAMED_ENTITIES: &[(&str, char)] = &[
    ("amp", '&'),
    ("lt", '<'),
    ("gt", '>'),
    ("quot", '"'),
    ("apos", '\''),
    ("nbsp", '\u{00A0}'),
    ("shy", '\u{00AD}'),
    ("copy", '\u{00A9}'),
    ("reg", '\u{00AE}'),
    ("trade", '\u{2122}'),
    ("hellip", '\u{2026}'),
    ("mdash", '\u{2014}'),
    ("ndash", '\u{2013}'),
    ("laquo", '\u{00AB}'),
    ("raquo", '\u{00BB}'),
    ("lsquo", '\u{2018}'),
    ("rsquo", '\u{2019}'),
    ("ldquo", '\u{201C}'),
    ("rdquo", '\u{201D}'),
    ("bull", '\u{2022}'),
    ("middot", '\u{00B7}'),
    ("deg", '\u{00B0}'),
    ("times", '\u{00D7}'),
    ("divide", '\u{00F7}'),
    ("sect", '\u{00A7}'),
    ("para", '\u{00B6}'),
    ("cent", '\u{00A2}'),
    ("pound", '\u{00A3}'),
    ("yen", '\u{00A5}'),
    ("euro", '\u{20AC}'),
    ("zwnj", '\u{200C}'),
    ("zwj", '\u{200D}'),
    ("lrm", '\u{200E}'),
    ("rlm", '\u{200F}'),
];

fn decode_entity(entity: &str) -> Option<char> {
    let body = &entity[1..entity.len() - 1];
    if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    NAMED_ENTITIES.iter().find(|(name, _)| *name == body).map(|&(_, c)| c)
}

/// Replaces recognised entities; unknown named entities are left as-is.
pub fn decode_entities(text: &str) -> String {
    ENTITY
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let m = &caps[0];
            decode_entity(m).map_or_else(|| m.to_owned(), String::from)
        })
        .into_owned()
}

/// Replaces each tag or comment with a single space.
pub fn strip_tags(text: &str) -> String {
    TAG.replace_all(text, " ").into_owned()
}

pub fn contains_tag(text: &str) -> bool {
    TAG.is_match(text)
}

/// True if `text` holds a decodable named or numeric entity.
pub fn contains_entity(text: &str) -> bool {
    ENTITY.find_iter(text).any(|m| decode_entity(m.as_str()).is_some())
}

fn normalize_once(text: &str) -> String {
    let stripped = strip_tags(&decode_entities(text));
    let mut out = String::with_capacity(stripped.len());
    let mut pending_space = false;
    for c in stripped.chars() {
        match classify_char(c) {
            CharClass::ArabicDiacritic | CharClass::Tatweel | CharClass::Emoji => {}
            CharClass::Whitespace => pending_space = true,
            _ => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
            }
        }
    }
    out
}

pub fn normalize_text(text: &str) -> String {
    let mut current = normalize_once(text);
    loop {
        let next = normalize_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Normalizes every sentence and drops those left empty. Returns `None`
/// when no sentence survives.
pub fn normalize_document(doc: Document) -> Option<Document> {
    let sentences: Vec<Sentence> =
        doc.sentences.iter().map(|s| normalize_text(s.text())).filter(|t| !t.is_empty()).map(Sentence::new).collect();
    if sentences.is_empty() {
        None
    } else {
        Some(Document { sentences, ..doc })
    }
}

/// Arabic letters over non-whitespace code points; 0 for blank input.
pub fn arabic_ratio(text: &str) -> f64 {
    let mut arabic = 0usize;
    let mut total = 0usize;
    for c in text.chars() {
        match classify_char(c) {
            CharClass::Whitespace => {}
            CharClass::ArabicLetter => {
                arabic += 1;
                total += 1;
            }
            _ => total += 1,
        }
    }
    if total == 0 {
        0.0
    } else {
        arabic as f64 / total as f64
    }
}

pub fn has_arabic_letter(text: &str) -> bool {
    text.chars().any(|c| classify_char(c) == CharClass::ArabicLetter)
}
