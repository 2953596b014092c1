//! Per-query filtering decisions for a live search engine.
//!
//! Targeted mode redirects detected harmful queries to self-help resources
//! and swaps in the survey prompt for survey-trigger phrases. Strict mode
//! additionally blocks every sexual-category query. Policy is
//! configuration, not code: the mode switch exists because real
//! deployments change policy over time.
//!
//! Decision logging is count-only; query text is never stored.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Category, CompiledMatcher};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("{0} must not be empty")]
    EmptyUrl(&'static str),
    #[error("policy mode {mode} requires a {category} lexicon")]
    MissingCategory {
        mode: PolicyMode,
        category: Category,
    },
    #[error("unknown policy mode: {0}")]
    UnknownMode(String),
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("request stream unreadable: {0}")]
    Input(std::io::Error),
    #[error("response stream failed: {0}")]
    Output(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    /// Intervene only on detected harmful and survey-trigger queries.
    Targeted,
    /// Additionally block all sexual-category queries.
    Strict,
}

impl std::fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyMode::Targeted => "targeted",
            PolicyMode::Strict => "strict",
        })
    }
}

impl std::str::FromStr for PolicyMode {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "targeted" => Ok(PolicyMode::Targeted),
            "strict" => Ok(PolicyMode::Strict),
            other => Err(PolicyError::UnknownMode(other.to_string())),
        }
    }
}

/// Immutable filtering policy: mode, intervention URLs, and one compiled
/// matcher per category. Shareable across concurrent streams.
#[derive(Debug)]
pub struct FilterPolicy {
    mode: PolicyMode,
    help_url: String,
    survey_url: String,
    matchers: BTreeMap<Category, CompiledMatcher>,
}

impl FilterPolicy {
    pub fn new(
        mode: PolicyMode,
        help_url: impl Into<String>,
        survey_url: impl Into<String>,
        matchers: BTreeMap<Category, CompiledMatcher>,
    ) -> Result<FilterPolicy, PolicyError> {
        let help_url = help_url.into();
        let survey_url = survey_url.into();
        if help_url.is_empty() {
            return Err(PolicyError::EmptyUrl("help_url"));
        }
        if survey_url.is_empty() {
            return Err(PolicyError::EmptyUrl("survey_url"));
        }
        let mut required = vec![Category::Target, Category::SurveyTrigger];
        if mode == PolicyMode::Strict {
            required.push(Category::Sexual);
        }
        for category in required {
            if !matchers.contains_key(&category) {
                return Err(PolicyError::MissingCategory { mode, category });
            }
        }
        Ok(FilterPolicy {
            mode,
            help_url,
            survey_url,
            matchers,
        })
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    pub fn help_url(&self) -> &str {
        &self.help_url
    }

    pub fn survey_url(&self) -> &str {
        &self.survey_url
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Action {
    Allow,
    Block,
    RedirectHelp,
    SurveyPrompt,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Allow => "Allow",
            Action::Block => "Block",
            Action::RedirectHelp => "RedirectHelp",
            Action::SurveyPrompt => "SurveyPrompt",
        }
    }
}

/// Outcome for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterDecision {
    pub action: Action,
    pub matched_categories: BTreeSet<Category>,
    pub matched_patterns: Vec<String>,
}

impl FilterDecision {
    /// The URL the caller should present, when the action carries one:
    /// the survey for `SurveyPrompt`, self-help for `RedirectHelp`.
    pub fn url<'a>(&self, policy: &'a FilterPolicy) -> Option<&'a str> {
        match self.action {
            Action::SurveyPrompt => Some(policy.survey_url()),
            Action::RedirectHelp => Some(policy.help_url()),
            Action::Allow | Action::Block => None,
        }
    }
}

/// Decide one query. Pure function of `(query, policy)`.
///
/// Precedence: a survey-trigger match yields `SurveyPrompt` (the survey
/// replaces results even for queries that also match the target lexicon);
/// otherwise a target match redirects to help; otherwise, in strict mode
/// only, a sexual match blocks; everything else is allowed.
pub fn decide(query: &str, policy: &FilterPolicy) -> FilterDecision {
    let mut matched_categories = BTreeSet::new();
    let mut matched_patterns = BTreeSet::new();
    for (category, matcher) in &policy.matchers {
        let result = matcher.match_text(query);
        if result.matched {
            matched_categories.insert(*category);
            matched_patterns.extend(result.matched_patterns().into_iter().map(str::to_string));
        }
    }

    let action = if matched_categories.contains(&Category::SurveyTrigger) {
        Action::SurveyPrompt
    } else if matched_categories.contains(&Category::Target) {
        Action::RedirectHelp
    } else if policy.mode == PolicyMode::Strict && matched_categories.contains(&Category::Sexual) {
        Action::Block
    } else {
        Action::Allow
    };

    FilterDecision {
        action,
        matched_categories,
        matched_patterns: matched_patterns.into_iter().collect(),
    }
}

#[derive(Debug, Deserialize)]
struct FilterRequest {
    id: String,
    query: String,
}

#[derive(Debug, Serialize)]
struct FilterResponse<'a> {
    id: Option<&'a str>,
    action: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    matched_categories: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    url: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

/// Count-only record of a stream run; no query text is retained.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct StreamSummary {
    pub requests: u64,
    pub actions: BTreeMap<&'static str, u64>,
    pub errors: u64,
}

/// Serve line-delimited JSON requests `{id, query}` until the input
/// closes. One response line per request, in request order, flushed per
/// line: `{id, action, matched_categories, url?}`. Malformed requests get
/// `{id: null, action: "Error", reason}` and processing continues.
pub fn serve_stream<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    policy: &FilterPolicy,
) -> Result<StreamSummary, StreamError> {
    let mut summary = StreamSummary::default();
    for line in input.lines() {
        let line = line.map_err(StreamError::Input)?;
        if line.trim().is_empty() {
            continue;
        }
        summary.requests += 1;
        let response_line = match serde_json::from_str::<FilterRequest>(&line) {
            Ok(request) => {
                let decision = decide(&request.query, policy);
                *summary.actions.entry(decision.action.as_str()).or_insert(0) += 1;
                let response = FilterResponse {
                    id: Some(&request.id),
                    action: decision.action.as_str(),
                    matched_categories: Some(
                        decision
                            .matched_categories
                            .iter()
                            .map(|c| c.to_string())
                            .collect(),
                    ),
                    url: decision.url(policy),
                    reason: None,
                };
                serde_json::to_string(&response)
            }
            Err(err) => {
                summary.errors += 1;
                let response = FilterResponse {
                    id: None,
                    action: "Error",
                    matched_categories: None,
                    url: None,
                    reason: Some(err.to_string()),
                };
                serde_json::to_string(&response)
            }
        }
        .expect("responses always serialize");
        output
            .write_all(response_line.as_bytes())
            .and_then(|_| output.write_all(b"\n"))
            .and_then(|_| output.flush())
            .map_err(StreamError::Output)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::parse_lexicon;

    fn matchers(entries: &[(Category, &str)]) -> BTreeMap<Category, CompiledMatcher> {
        entries
            .iter()
            .map(|(category, patterns)| {
                let text = format!("!id: t\n!version: 1\n!category: {category}\n{patterns}\n");
                (
                    *category,
                    CompiledMatcher::compile(&parse_lexicon(&text).unwrap()),
                )
            })
            .collect()
    }

    fn policy(mode: PolicyMode) -> FilterPolicy {
        FilterPolicy::new(
            mode,
            "http://help.example/start",
            "http://survey.example/q",
            matchers(&[
                (Category::Target, "childfoo\nplaceholder phrase"),
                (Category::SurveyTrigger, "surveybait"),
                (Category::Sexual, "adultfoo"),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn survey_trigger_prompts_survey() {
        let p = policy(PolicyMode::Targeted);
        let decision = decide("where surveybait now", &p);
        assert_eq!(decision.action, Action::SurveyPrompt);
        assert_eq!(decision.url(&p), Some("http://survey.example/q"));
    }

    #[test]
    fn target_match_redirects_to_help() {
        let p = policy(PolicyMode::Targeted);
        let decision = decide("childfoo videos", &p);
        assert_eq!(decision.action, Action::RedirectHelp);
        assert_eq!(decision.url(&p), Some("http://help.example/start"));
        assert!(decision.matched_patterns.contains(&"childfoo".to_string()));
    }

    #[test]
    fn benign_query_allowed_in_both_modes() {
        for mode in [PolicyMode::Targeted, PolicyMode::Strict] {
            let decision = decide("weather tomorrow", &policy(mode));
            assert_eq!(decision.action, Action::Allow);
            assert!(decision.matched_categories.is_empty());
        }
    }

    #[test]
    fn sexual_query_blocked_only_in_strict() {
        assert_eq!(
            decide("adultfoo gallery", &policy(PolicyMode::Targeted)).action,
            Action::Allow
        );
        assert_eq!(
            decide("adultfoo gallery", &policy(PolicyMode::Strict)).action,
            Action::Block
        );
    }

    #[test]
    fn survey_outranks_target() {
        let decision = decide("childfoo surveybait", &policy(PolicyMode::Strict));
        assert_eq!(decision.action, Action::SurveyPrompt);
        assert!(decision.matched_categories.contains(&Category::Target));
        assert!(decision
            .matched_categories
            .contains(&Category::SurveyTrigger));
    }

    #[test]
    fn decide_is_case_invariant() {
        let p = policy(PolicyMode::Strict);
        for query in ["childfoo pics", "Adultfoo", "SURVEYBAIT", "plain words"] {
            let lower = decide(query, &p);
            let upper = decide(&query.to_uppercase(), &p);
            assert_eq!(lower.action, upper.action);
            assert_eq!(lower.matched_categories, upper.matched_categories);
        }
    }

    #[test]
    fn allow_iff_relevant_categories_empty() {
        let p = policy(PolicyMode::Targeted);
        // A violence-only match is irrelevant in targeted mode.
        let mut with_violence = matchers(&[
            (Category::Target, "childfoo"),
            (Category::SurveyTrigger, "surveybait"),
            (Category::Violence, "pain"),
        ]);
        let p2 = FilterPolicy::new(
            PolicyMode::Targeted,
            "http://h",
            "http://s",
            std::mem::take(&mut with_violence),
        )
        .unwrap();
        let decision = decide("pain relief", &p2);
        assert_eq!(decision.action, Action::Allow);
        assert!(decision.matched_categories.contains(&Category::Violence));
        let decision = decide("nothing", &p);
        assert_eq!(decision.action, Action::Allow);
    }

    #[test]
    fn policy_validation() {
        let m = matchers(&[
            (Category::Target, "childfoo"),
            (Category::SurveyTrigger, "surveybait"),
        ]);
        assert!(FilterPolicy::new(PolicyMode::Targeted, "", "http://s", m).is_err());

        let m = matchers(&[(Category::Target, "childfoo")]);
        let err = FilterPolicy::new(PolicyMode::Targeted, "http://h", "http://s", m).unwrap_err();
        assert!(err.to_string().contains("survey-trigger"));

        let m = matchers(&[
            (Category::Target, "childfoo"),
            (Category::SurveyTrigger, "surveybait"),
        ]);
        let err = FilterPolicy::new(PolicyMode::Strict, "http://h", "http://s", m).unwrap_err();
        assert!(err.to_string().contains("sexual"));
    }

    #[test]
    fn stream_preserves_order_and_ids() {
        let p = policy(PolicyMode::Strict);
        let input = concat!(
            "{\"id\":\"r1\",\"query\":\"weather\"}\n",
            "{\"id\":\"r2\",\"query\":\"childfoo\"}\n",
            "{\"id\":\"r3\",\"query\":\"surveybait now\"}\n",
        );
        let mut out = Vec::new();
        let summary = serve_stream(input.as_bytes(), &mut out, &p).unwrap();
        assert_eq!(summary.requests, 3);
        assert_eq!(summary.errors, 0);
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["id"], "r1");
        assert_eq!(lines[0]["action"], "Allow");
        assert_eq!(lines[1]["id"], "r2");
        assert_eq!(lines[1]["action"], "RedirectHelp");
        assert_eq!(lines[1]["url"], "http://help.example/start");
        assert_eq!(lines[2]["id"], "r3");
        assert_eq!(lines[2]["action"], "SurveyPrompt");
        assert_eq!(lines[2]["url"], "http://survey.example/q");
    }

    #[test]
    fn malformed_request_yields_error_and_continues() {
        let p = policy(PolicyMode::Targeted);
        let input = "not json at all\n{\"id\":\"ok\",\"query\":\"weather\"}\n";
        let mut out = Vec::new();
        let summary = serve_stream(input.as_bytes(), &mut out, &p).unwrap();
        assert_eq!(summary.requests, 2);
        assert_eq!(summary.errors, 1);
        let text = String::from_utf8(out).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["id"], serde_json::Value::Null);
        assert_eq!(first["action"], "Error");
        assert!(first["reason"].is_string());
        let second: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(second["id"], "ok");
    }

    #[test]
    fn empty_input_clean_exit() {
        let p = policy(PolicyMode::Targeted);
        let mut out = Vec::new();
        let summary = serve_stream("".as_bytes(), &mut out, &p).unwrap();
        assert_eq!(summary.requests, 0);
        assert!(out.is_empty());
    }

    #[test]
    fn stream_matches_batch_decide() {
        let p = policy(PolicyMode::Strict);
        let queries = [
            "weather",
            "childfoo",
            "adultfoo",
            "surveybait",
            "childfoo surveybait",
        ];
        let input: String = queries
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{{\"id\":\"{i}\",\"query\":\"{q}\"}}\n"))
            .collect();
        let mut out = Vec::new();
        serve_stream(input.as_bytes(), &mut out, &p).unwrap();
        for (i, line) in String::from_utf8(out).unwrap().lines().enumerate() {
            let response: serde_json::Value = serde_json::from_str(line).unwrap();
            let decision = decide(queries[i], &p);
            assert_eq!(response["action"], decision.action.as_str());
            let categories: Vec<String> = decision
                .matched_categories
                .iter()
                .map(|c| c.to_string())
                .collect();
            assert_eq!(
                response["matched_categories"],
                serde_json::to_value(&categories).unwrap()
            );
        }
    }
}
