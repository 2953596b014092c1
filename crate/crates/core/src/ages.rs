//! Exact-age mentions and broad age-indicating terms in search sessions.
//!
//! For an age like 13, the generated surface forms cover `13y`, `13yo`,
//! `13+y…`, `13-y…`, `13 y…`, `13teen`, `thirteen year…`, `thirteen-year…`,
//! `13boy(s)` and `13girl(s)`. Every generated pattern is token-boundary
//! matched, so `18yo` never counts towards age 8.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use thiserror::Error;

use crate::lexicon::{CompiledMatcher, LexiconPattern};
use crate::sessions::Session;

pub const MIN_AGE: u8 = 0;
pub const MAX_AGE: u8 = 19;

/// Broad age-indicating terms, counted per session. `teen` is only counted
/// in sessions already flagged by the target lexicon.
pub const BROAD_TERMS: [&str; 7] = [
    "toddler", "infant", "baby", "pthc", "preteen", "lolita", "teen",
];

const WORD_FORMS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

#[derive(Debug, Error)]
pub enum AgesError {
    #[error("age {0} is out of range ({MIN_AGE}-{MAX_AGE})")]
    AgeOutOfRange(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The patterns that identify one exact age.
#[derive(Debug, Clone)]
pub struct AgePatternSet {
    pub age: u8,
    pub patterns: Vec<LexiconPattern>,
}

/// Generate the pattern set for one age. All patterns boundary-matched.
pub fn build_age_patterns(age: u8) -> Result<AgePatternSet, AgesError> {
    if age > MAX_AGE {
        return Err(AgesError::AgeOutOfRange(age));
    }
    let word = WORD_FORMS[age as usize];
    let mut raws: Vec<String> = vec![format!("{age}y*")];
    for separator in [' ', '+', '-'] {
        raws.push(format!("{age}{separator}y*"));
    }
    if (13..=19).contains(&age) {
        raws.push(format!("{age}teen"));
    }
    raws.push(format!("{word} year*"));
    raws.push(format!("{word}-year*"));
    for gender in ["boy", "girl"] {
        raws.push(format!("{age}{gender}"));
        raws.push(format!("{age}{gender}s"));
    }

    let patterns = raws
        .iter()
        .map(|raw| {
            LexiconPattern::parse_with_boundary(raw, true)
                .expect("generated age patterns are grammatical")
        })
        .collect();
    Ok(AgePatternSet { age, patterns })
}

/// Matches all ages 0-19 in a single scan.
pub struct AgeExtractor {
    matcher: CompiledMatcher,
    age_of: HashMap<String, u8>,
}

impl Default for AgeExtractor {
    fn default() -> Self {
        AgeExtractor::new()
    }
}

impl AgeExtractor {
    pub fn new() -> AgeExtractor {
        let mut all_patterns = Vec::new();
        let mut age_of = HashMap::new();
        for age in MIN_AGE..=MAX_AGE {
            let set = build_age_patterns(age).expect("ages 0-19 are in range");
            for pattern in set.patterns {
                age_of.insert(pattern.raw.clone(), age);
                all_patterns.push(pattern);
            }
        }
        AgeExtractor {
            matcher: CompiledMatcher::from_patterns(all_patterns),
            age_of,
        }
    }

    /// Ages mentioned anywhere in a text.
    pub fn ages_in(&self, text: &str) -> BTreeSet<u8> {
        self.matcher
            .match_text(text)
            .hits
            .iter()
            .map(|hit| self.age_of[&hit.pattern])
            .collect()
    }

    /// Union of ages revealed by any query of the session. A session can
    /// mention several ages and contributes to each.
    pub fn extract_ages(&self, session: &Session) -> BTreeSet<u8> {
        let mut ages = BTreeSet::new();
        for event in &session.queries {
            ages.extend(self.ages_in(&event.query));
        }
        ages
    }
}

/// Session counts per exact age (0-19, zeros included) and per broad term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeHistogram {
    pub exact_counts: BTreeMap<u8, u64>,
    pub broad_counts: BTreeMap<String, u64>,
}

fn broad_matchers() -> Vec<(&'static str, CompiledMatcher)> {
    BROAD_TERMS
        .iter()
        .map(|term| {
            let pattern = LexiconPattern::parse_with_boundary(term, true)
                .expect("broad terms are plain literals");
            (*term, CompiledMatcher::from_patterns(vec![pattern]))
        })
        .collect()
}

/// Count age mentions over sessions.
///
/// `exact_counts[a]` is the number of sessions whose queries reveal age
/// `a`; `broad_counts[t]` is the number of sessions containing term `t`,
/// with `teen` restricted to sessions matched by the target lexicon.
pub fn age_histogram(
    sessions: &[Session],
    extractor: &AgeExtractor,
    target_matcher: &CompiledMatcher,
) -> AgeHistogram {
    let mut exact_counts: BTreeMap<u8, u64> = (MIN_AGE..=MAX_AGE).map(|a| (a, 0)).collect();
    let mut broad_counts: BTreeMap<String, u64> =
        BROAD_TERMS.iter().map(|t| (t.to_string(), 0)).collect();
    let broad = broad_matchers();

    for session in sessions {
        for age in extractor.extract_ages(session) {
            *exact_counts.get_mut(&age).unwrap() += 1;
        }
        let is_target = session
            .queries
            .iter()
            .any(|q| target_matcher.is_match(&q.query));
        for (term, matcher) in &broad {
            if *term == "teen" && !is_target {
                continue;
            }
            if session.queries.iter().any(|q| matcher.is_match(&q.query)) {
                *broad_counts.get_mut(*term).unwrap() += 1;
            }
        }
    }

    AgeHistogram {
        exact_counts,
        broad_counts,
    }
}

/// CSV `age,count`, one row per age 0-19.
pub fn write_age_csv<W: Write>(mut out: W, histogram: &AgeHistogram) -> Result<(), AgesError> {
    writeln!(out, "age,count")?;
    for (age, count) in &histogram.exact_counts {
        writeln!(out, "{age},{count}")?;
    }
    Ok(())
}

/// CSV `term,count` in the fixed broad-term order.
pub fn write_broad_csv<W: Write>(mut out: W, histogram: &AgeHistogram) -> Result<(), AgesError> {
    writeln!(out, "term,count")?;
    for term in BROAD_TERMS {
        writeln!(out, "{term},{}", histogram.broad_counts[term])?;
    }
    Ok(())
}
