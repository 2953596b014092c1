//! Shared text normalization helpers.
//!
//! Every module that compares or matches text goes through these functions so
//! that cosmetic differences (case, whitespace runs) never break equality.

/// Collapse every run of whitespace to a single space and trim the ends.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Unicode-aware lowercasing plus whitespace collapse.
///
/// This is the canonical form used for sentence fingerprints, title
/// comparison, and lexicon scanning.
pub fn normalize(s: &str) -> String {
    collapse_whitespace(&s.to_lowercase())
}

/// Case fold for matching. Uses full Unicode lowercasing rather than
/// ASCII-only folding so non-English phrases compare correctly.
pub fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// A word character for token-boundary purposes: letters and digits.
pub fn is_word_char(ch: char) -> bool {
    ch.is_alphanumeric()
}
