//! Phrase normalization. Every noun phrase that becomes a graph node, and
//! every query entity matched against one, passes through here, so the
//! function must be idempotent.

use unicode_normalization::UnicodeNormalization;

const QUOTE_PAIRS: [(char, char); 4] = [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')];

/// Lowercased Unicode NFC with whitespace collapsed to single spaces and
/// enclosing quote pairs stripped. May return an empty string; callers drop
/// empty phrases.
pub fn normalize_phrase(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let composed: String = lowered.nfc().collect();
    let collapsed = collapse_whitespace(&composed);
    let mut phrase = collapsed.as_str();
    loop {
        let stripped = strip_quote_pair(phrase).trim();
        if stripped == phrase {
            break;
        }
        phrase = stripped;
    }
    // Stripping quotes can expose inner whitespace runs at the edges only;
    // interior runs were already collapsed, so a final trim suffices.
    phrase.to_string()
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_quote_pair(s: &str) -> &str {
    let mut chars = s.chars();
    let (first, last) = match (chars.next(), chars.next_back()) {
        (Some(f), Some(l)) => (f, l),
        _ => return s,
    };
    for (open, close) in QUOTE_PAIRS {
        if first == open && last == close {
            return &s[open.len_utf8()..s.len() - close.len_utf8()];
        }
    }
    s
}
