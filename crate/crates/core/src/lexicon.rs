//! Shareable phrase lexicons and their compiled multi-pattern matchers.
//!
//! A lexicon file is UTF-8 text: `#` comment lines, `!id:` / `!version:` /
//! `!category:` header directives, then one pattern per line. The pattern
//! grammar is deliberately tiny — literals, one optional suffix group
//! (`kitten(s)`), and a trailing wildcard (`13y*`) — enough to express the
//! notations that appear in shared detection lists without growing into
//! general regular expressions.
//!
//! Matching is Unicode case-folded and single-pass over the text for the
//! whole lexicon. Short patterns are token-boundary matched by default so
//! that e.g. `teen` does not fire inside `seventeen`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{fold, is_word_char};

/// Patterns whose matchable stem is at most this many characters are
/// boundary-matched by default.
const BOUNDARY_DEFAULT_MAX_CHARS: usize = 5;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error("empty lexicon")]
    Empty,
    #[error("missing !category directive")]
    MissingCategory,
}

/// Lexicon category. Determines how downstream stages use the match flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Target,
    Sexual,
    SurveyTrigger,
    Violence,
    GenderGirl,
    GenderBoy,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Target,
        Category::Sexual,
        Category::SurveyTrigger,
        Category::Violence,
        Category::GenderGirl,
        Category::GenderBoy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Target => "target",
            Category::Sexual => "sexual",
            Category::SurveyTrigger => "survey-trigger",
            Category::Violence => "violence",
            Category::GenderGirl => "gender-girl",
            Category::GenderBoy => "gender-boy",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(Category::Target),
            "sexual" => Ok(Category::Sexual),
            "survey-trigger" => Ok(Category::SurveyTrigger),
            "violence" => Ok(Category::Violence),
            "gender-girl" => Ok(Category::GenderGirl),
            "gender-boy" => Ok(Category::GenderBoy),
            other => Err(format!("unknown category: {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Literal,
    OptionalSuffix,
    TrailingWildcard,
}

/// One detection pattern as written in a lexicon file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconPattern {
    pub raw: String,
    pub kind: PatternKind,
    pub boundary: bool,
}

impl LexiconPattern {
    /// Parse a single pattern, applying the default boundary rule: stems of
    /// five characters or fewer match at token boundaries only.
    pub fn parse(raw: &str) -> Result<LexiconPattern, LexiconError> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(LexiconError::Pattern("empty pattern".to_string()));
        }

        let stars = raw.matches('*').count();
        let opens = raw.matches('(').count();
        let closes = raw.matches(')').count();

        if stars > 0 {
            if stars > 1 || !raw.ends_with('*') {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": wildcard is only allowed once, at the end"
                )));
            }
            if opens > 0 || closes > 0 {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": wildcard and suffix group cannot be combined"
                )));
            }
            let stem = &raw[..raw.len() - 1];
            if stem.is_empty() {
                return Err(LexiconError::Pattern(
                    "\"*\": wildcard needs a stem".to_string(),
                ));
            }
            return Ok(LexiconPattern {
                raw: raw.to_string(),
                kind: PatternKind::TrailingWildcard,
                boundary: default_boundary(stem),
            });
        }

        if opens > 0 || closes > 0 {
            if opens != 1 || closes != 1 {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": exactly one (…) group is allowed"
                )));
            }
            let open = raw.find('(').unwrap();
            let close = raw.find(')').unwrap();
            if close < open {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": malformed (…) group"
                )));
            }
            let suffix = &raw[open + 1..close];
            if suffix.is_empty() || suffix.chars().any(|c| c.is_whitespace()) {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": suffix group must be a non-empty token fragment"
                )));
            }
            let before = raw[..open].chars().next_back();
            if !matches!(before, Some(c) if is_word_char(c)) {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": suffix group must follow a token"
                )));
            }
            let after = raw[close + 1..].chars().next();
            if matches!(after, Some(c) if is_word_char(c)) {
                return Err(LexiconError::Pattern(format!(
                    "\"{raw}\": suffix group must end its token"
                )));
            }
            let base: String = format!("{}{}", &raw[..open], &raw[close + 1..]);
            return Ok(LexiconPattern {
                raw: raw.to_string(),
                kind: PatternKind::OptionalSuffix,
                boundary: default_boundary(&base),
            });
        }

        Ok(LexiconPattern {
            raw: raw.to_string(),
            kind: PatternKind::Literal,
            boundary: default_boundary(raw),
        })
    }

    /// Same as [`LexiconPattern::parse`] but with an explicit boundary flag.
    pub fn parse_with_boundary(raw: &str, boundary: bool) -> Result<LexiconPattern, LexiconError> {
        let mut pattern = LexiconPattern::parse(raw)?;
        pattern.boundary = boundary;
        Ok(pattern)
    }

    /// The literal needle strings this pattern can match, case-folded, and
    /// whether the right side is open (trailing wildcard).
    fn variants(&self) -> Vec<(String, bool)> {
        match self.kind {
            PatternKind::Literal => vec![(fold(&self.raw), false)],
            PatternKind::TrailingWildcard => {
                vec![(fold(&self.raw[..self.raw.len() - 1]), true)]
            }
            PatternKind::OptionalSuffix => {
                let open = self.raw.find('(').unwrap();
                let close = self.raw.find(')').unwrap();
                let base = format!("{}{}", &self.raw[..open], &self.raw[close + 1..]);
                let with_suffix = format!(
                    "{}{}{}",
                    &self.raw[..open],
                    &self.raw[open + 1..close],
                    &self.raw[close + 1..]
                );
                vec![(fold(&base), false), (fold(&with_suffix), false)]
            }
        }
    }
}

fn default_boundary(stem: &str) -> bool {
    stem.chars().count() <= BOUNDARY_DEFAULT_MAX_CHARS
}

/// A parsed, versioned phrase list of one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub id: String,
    pub version: String,
    pub category: Category,
    pub patterns: Vec<LexiconPattern>,
}

impl Lexicon {
    /// Render back to the shareable file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("!id: {}\n", self.id));
        out.push_str(&format!("!version: {}\n", self.version));
        out.push_str(&format!("!category: {}\n", self.category));
        for pattern in &self.patterns {
            out.push_str(&pattern.raw);
            out.push('\n');
        }
        out
    }
}

/// Parse a lexicon file. Errors carry the offending line number.
pub fn parse_lexicon(text: &str) -> Result<Lexicon, LexiconError> {
    let mut id = String::new();
    let mut version = String::new();
    let mut category: Option<Category> = None;
    let mut patterns: Vec<LexiconPattern> = Vec::new();
    let mut seen_raw: BTreeSet<String> = BTreeSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(directive) = line.strip_prefix('!') {
            let (key, value) = directive.split_once(':').ok_or(LexiconError::Parse {
                line: line_no,
                message: format!("directive \"!{directive}\" is missing a colon"),
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "id" => id = value,
                "version" => version = value,
                "category" => {
                    category = Some(value.parse().map_err(|message| LexiconError::Parse {
                        line: line_no,
                        message,
                    })?);
                }
                other => {
                    return Err(LexiconError::Parse {
                        line: line_no,
                        message: format!("unknown directive \"!{other}\""),
                    });
                }
            }
            continue;
        }

        let pattern = LexiconPattern::parse(line).map_err(|e| LexiconError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen_raw.insert(pattern.raw.clone()) {
            return Err(LexiconError::Parse {
                line: line_no,
                message: format!("duplicate pattern \"{}\"", pattern.raw),
            });
        }
        patterns.push(pattern);
    }

    if patterns.is_empty() {
        return Err(LexiconError::Empty);
    }
    let category = category.ok_or(LexiconError::MissingCategory)?;

    Ok(Lexicon {
        id,
        version,
        category,
        patterns,
    })
}

/// One pattern occurrence in scanned text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    /// The pattern as written in the lexicon.
    pub pattern: String,
    /// Byte offset into the case-folded scan text.
    pub offset: usize,
}

/// Exhaustive result of scanning one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub matched: bool,
    pub hits: Vec<Hit>,
    pub scanned_length: usize,
}

impl MatchResult {
    /// Distinct matched pattern strings.
    pub fn matched_patterns(&self) -> BTreeSet<&str> {
        self.hits.iter().map(|h| h.pattern.as_str()).collect()
    }
}

#[derive(Debug)]
struct NeedleMeta {
    pattern_idx: usize,
    wildcard: bool,
    first_char: char,
    last_char: char,
}

/// Immutable multi-pattern matcher: one automaton pass per scan, boundary
/// rules applied per pattern. Safe to share across threads.
#[derive(Debug)]
pub struct CompiledMatcher {
    automaton: AhoCorasick,
    needles: Vec<NeedleMeta>,
    patterns: Vec<LexiconPattern>,
}

impl CompiledMatcher {
    pub fn compile(lexicon: &Lexicon) -> CompiledMatcher {
        CompiledMatcher::from_patterns(lexicon.patterns.clone())
    }

    pub fn from_patterns(patterns: Vec<LexiconPattern>) -> CompiledMatcher {
        let mut needle_strings: Vec<String> = Vec::new();
        let mut needles: Vec<NeedleMeta> = Vec::new();
        for (pattern_idx, pattern) in patterns.iter().enumerate() {
            for (needle, wildcard) in pattern.variants() {
                needles.push(NeedleMeta {
                    pattern_idx,
                    wildcard,
                    first_char: needle.chars().next().unwrap_or(' '),
                    last_char: needle.chars().next_back().unwrap_or(' '),
                });
                needle_strings.push(needle);
            }
        }
        let automaton =
            AhoCorasick::new(&needle_strings).expect("pattern set is within automaton limits");
        CompiledMatcher {
            automaton,
            needles,
            patterns,
        }
    }

    pub fn patterns(&self) -> &[LexiconPattern] {
        &self.patterns
    }

    fn hit_ok(&self, folded: &str, needle: &NeedleMeta, start: usize, end: usize) -> bool {
        let pattern = &self.patterns[needle.pattern_idx];
        if !pattern.boundary {
            return true;
        }
        if is_word_char(needle.first_char) {
            if let Some(prev) = folded[..start].chars().next_back() {
                if is_word_char(prev) {
                    return false;
                }
            }
        }
        if !needle.wildcard && is_word_char(needle.last_char) {
            if let Some(next) = folded[end..].chars().next() {
                if is_word_char(next) {
                    return false;
                }
            }
        }
        true
    }

    /// Scan a text and report every pattern occurrence, offsets ascending.
    /// Equivalent to scanning each pattern independently.
    pub fn match_text(&self, text: &str) -> MatchResult {
        let folded = fold(text);
        let mut found: BTreeSet<(usize, usize)> = BTreeSet::new();
        for m in self.automaton.find_overlapping_iter(&folded) {
            let needle = &self.needles[m.pattern().as_usize()];
            if self.hit_ok(&folded, needle, m.start(), m.end()) {
                found.insert((m.start(), needle.pattern_idx));
            }
        }
        let mut hits: Vec<Hit> = found
            .into_iter()
            .map(|(offset, idx)| Hit {
                pattern: self.patterns[idx].raw.clone(),
                offset,
            })
            .collect();
        hits.sort_by(|a, b| (a.offset, a.pattern.as_str()).cmp(&(b.offset, b.pattern.as_str())));
        MatchResult {
            matched: !hits.is_empty(),
            hits,
            scanned_length: folded.len(),
        }
    }

    /// True if any pattern matches; stops at the first valid hit.
    pub fn is_match(&self, text: &str) -> bool {
        let folded = fold(text);
        self.automaton.find_overlapping_iter(&folded).any(|m| {
            self.hit_ok(
                &folded,
                &self.needles[m.pattern().as_usize()],
                m.start(),
                m.end(),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matcher_of(lines: &[&str]) -> CompiledMatcher {
        let text = format!(
            "!id: t\n!version: 1\n!category: target\n{}\n",
            lines.join("\n")
        );
        CompiledMatcher::compile(&parse_lexicon(&text).unwrap())
    }

    #[test]
    fn parses_three_pattern_kinds() {
        let lex = parse_lexicon(
            "# placeholder fixtures\n!id: demo\n!version: 3\n!category: target\nchildfoo\nkitten(s)\n13y*\n",
        )
        .unwrap();
        assert_eq!(lex.id, "demo");
        assert_eq!(lex.version, "3");
        assert_eq!(lex.category, Category::Target);
        let kinds: Vec<PatternKind> = lex.patterns.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            vec![
                PatternKind::Literal,
                PatternKind::OptionalSuffix,
                PatternKind::TrailingWildcard
            ]
        );
    }

    #[test]
    fn malformed_group_errors_with_line_number() {
        let err = parse_lexicon("!category: target\nok\nbad(ss\n").unwrap_err();
        match err {
            LexiconError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_body_is_empty_lexicon() {
        let err = parse_lexicon("# only comments\n!category: target\n").unwrap_err();
        assert_eq!(err.to_string(), "empty lexicon");
    }

    #[test]
    fn unknown_category_errors() {
        let err = parse_lexicon("!category: nonsense\nfoo\n").unwrap_err();
        assert!(err.to_string().contains("unknown category"));
    }

    #[test]
    fn duplicate_pattern_errors() {
        let err = parse_lexicon("!category: target\nfoo bar\nfoo bar\n").unwrap_err();
        assert!(err.to_string().contains("duplicate pattern"));
    }

    #[test]
    fn wildcard_must_be_final() {
        assert!(LexiconPattern::parse("a*b").is_err());
        assert!(LexiconPattern::parse("*").is_err());
        assert!(LexiconPattern::parse("a**").is_err());
    }

    #[test]
    fn default_boundary_follows_stem_length() {
        assert!(LexiconPattern::parse("teen").unwrap().boundary);
        assert!(LexiconPattern::parse("13y*").unwrap().boundary);
        assert!(!LexiconPattern::parse("kitten(s)").unwrap().boundary);
        assert!(
            !LexiconPattern::parse("long explicit phrase")
                .unwrap()
                .boundary
        );
    }

    #[test]
    fn case_folded_match_at_offset_zero() {
        let m = matcher_of(&["childfoo"]);
        let result = m.match_text("ChildFoo site");
        assert!(result.matched);
        assert_eq!(result.hits[0].offset, 0);
        assert_eq!(result.hits[0].pattern, "childfoo");
    }

    #[test]
    fn optional_suffix_with_boundary() {
        let pattern = LexiconPattern::parse_with_boundary("kitten(s)", true).unwrap();
        let m = CompiledMatcher::from_patterns(vec![pattern]);
        assert!(m.is_match("kitten"));
        assert!(m.is_match("kittens"));
        assert!(!m.is_match("kittenish"));
    }

    #[test]
    fn trailing_wildcard_matches_token_prefix() {
        let m = matcher_of(&["13y*"]);
        assert!(m.is_match("13yo clips"));
        assert!(m.is_match("13y"));
        assert!(!m.is_match("w13yo"));
    }

    #[test]
    fn boundary_blocks_inner_matches() {
        let m = matcher_of(&["teen"]);
        assert!(m.is_match("teen videos"));
        assert!(!m.is_match("seventeen"));
    }

    #[test]
    fn long_patterns_substring_match() {
        let m = matcher_of(&["explicit sample phrase"]);
        assert!(m.is_match("anexplicit sample phrases"));
    }

    #[test]
    fn empty_text_matches_nothing() {
        let m = matcher_of(&["childfoo"]);
        let result = m.match_text("");
        assert!(!result.matched);
        assert!(result.hits.is_empty());
        assert_eq!(result.scanned_length, 0);
    }

    #[test]
    fn two_patterns_two_hits_ascending() {
        let m = matcher_of(&["alpha", "bravo"]);
        let result = m.match_text("xx bravo yy alpha");
        assert_eq!(result.hits.len(), 2);
        assert_eq!(result.hits[0].pattern, "bravo");
        assert_eq!(result.hits[1].pattern, "alpha");
        assert!(result.hits[0].offset < result.hits[1].offset);
    }

    #[test]
    fn case_invariant_matched_set() {
        let m = matcher_of(&["childfoo", "kitten(s)", "13y*"]);
        let text = "Kittens and 13YO and CHILDFOO";
        let lower = m.match_text(text);
        let upper = m.match_text(&text.to_uppercase());
        assert_eq!(lower.matched_patterns(), upper.matched_patterns());
    }

    #[test]
    fn compile_is_deterministic() {
        let lex = parse_lexicon("!category: target\nchildfoo\nkitten(s)\n13y*\n").unwrap();
        let a = CompiledMatcher::compile(&lex);
        let b = CompiledMatcher::compile(&lex);
        let text = "kittens and 13yo and childfoo everywhere";
        assert_eq!(a.match_text(text), b.match_text(text));
    }

    #[test]
    fn lexicon_round_trips_through_file_format() {
        let lex =
            parse_lexicon("!id: x\n!version: 2\n!category: sexual\nfoo bar\nbaz(s)\n").unwrap();
        let rendered = lex.to_file_string();
        let back = parse_lexicon(&rendered).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn unicode_case_folding() {
        let m = matcher_of(&["straße video"]);
        assert!(m.is_match("STRASSE video") || m.is_match("Straße Video"));
        let m2 = matcher_of(&["тест"]);
        assert!(m2.is_match("ТЕСТ фраза"));
    }
}
