//! Query-log parsing and search-session reconstruction.
//!
//! Sessions are rebuilt purely from HTTP referrer metadata: a request whose
//! referrer carries the previous query continues that session, provided it
//! arrives within the continuation window (five minutes by default). No
//! cookies, addresses, or user identifiers are involved.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Category, CompiledMatcher};

/// "Within five minutes of the last search."
pub const DEFAULT_WINDOW_SECONDS: i64 = 300;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One search request pulled out of an access log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub timestamp: DateTime<Utc>,
    pub query: String,
    /// The query embedded in the referrer, when the referrer is a search
    /// URL of this site. Absent for external or missing referrers.
    pub referrer_query: Option<String>,
    pub line_no: usize,
}

/// Why a log line produced no record. Counted, never fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SkipReason {
    /// Line does not parse as Combined Log Format.
    Malformed,
    /// Timestamp field does not parse.
    BadTimestamp,
    /// Request is not for the search path (assets, other endpoints).
    NotSearch,
    /// Search request without a usable `q` parameter.
    NoQuery,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SkipReason::Malformed => "malformed",
            SkipReason::BadTimestamp => "bad-timestamp",
            SkipReason::NotSearch => "not-search",
            SkipReason::NoQuery => "no-query",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Search(LogRecord),
    Skip(SkipReason),
}

/// Combined Log Format parser bound to one search path.
///
/// A referrer counts as "same-site search" when its path equals the search
/// path; plain CLF lines do not carry the serving host, so host equality
/// cannot be checked here.
#[derive(Debug, Clone)]
pub struct LogParser {
    search_path: String,
}

impl Default for LogParser {
    fn default() -> Self {
        LogParser::new("/search")
    }
}

impl LogParser {
    pub fn new(search_path: impl Into<String>) -> LogParser {
        LogParser {
            search_path: search_path.into(),
        }
    }

    /// Parse one log line:
    /// `host ident user [time] "METHOD path?query HTTP/v" status bytes "referrer" "agent"`.
    pub fn parse_line(&self, line: &str, line_no: usize) -> ParsedLine {
        let Some(fields) = split_clf(line) else {
            return ParsedLine::Skip(SkipReason::Malformed);
        };
        let Ok(parsed) = DateTime::parse_from_str(fields.time, "%d/%b/%Y:%H:%M:%S %z") else {
            return ParsedLine::Skip(SkipReason::BadTimestamp);
        };
        let timestamp = parsed.with_timezone(&Utc);

        let mut request_parts = fields.request.split_whitespace();
        let (Some(_method), Some(target)) = (request_parts.next(), request_parts.next()) else {
            return ParsedLine::Skip(SkipReason::Malformed);
        };
        let (path, query_string) = match target.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (target, None),
        };
        if path != self.search_path {
            return ParsedLine::Skip(SkipReason::NotSearch);
        }
        let Some(query) = query_string.and_then(query_param) else {
            return ParsedLine::Skip(SkipReason::NoQuery);
        };

        let referrer_query = self.referrer_query(fields.referrer);
        ParsedLine::Search(LogRecord {
            timestamp,
            query,
            referrer_query,
            line_no,
        })
    }

    fn referrer_query(&self, referrer: &str) -> Option<String> {
        let referrer = referrer.trim();
        if referrer.is_empty() || referrer == "-" {
            return None;
        }
        let path_and_query = match referrer.find("://") {
            Some(scheme_end) => {
                let after_host = &referrer[scheme_end + 3..];
                let slash = after_host.find('/')?;
                &after_host[slash..]
            }
            None => referrer,
        };
        let (path, query_string) = match path_and_query.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (path_and_query, None),
        };
        if path != self.search_path {
            return None;
        }
        query_string.and_then(query_param)
    }
}

struct ClfFields<'a> {
    time: &'a str,
    request: &'a str,
    referrer: &'a str,
}

fn split_clf(line: &str) -> Option<ClfFields<'_>> {
    let mut s = line.trim_start();
    for _ in 0..3 {
        let pos = s.find(char::is_whitespace)?;
        s = s[pos..].trim_start();
    }
    let s = s.strip_prefix('[')?;
    let close = s.find(']')?;
    let time = &s[..close];

    let s = s[close + 1..].trim_start();
    let s = s.strip_prefix('"')?;
    let end = s.find('"')?;
    let request = &s[..end];

    let s = s[end + 1..].trim_start();
    let pos = s.find(char::is_whitespace)?;
    let status = &s[..pos];
    if status.is_empty() || !status.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let s = s[pos..].trim_start();
    let pos = s.find(char::is_whitespace)?;
    let size = &s[..pos];
    if size != "-" && !size.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }

    let s = s[pos..].trim_start();
    let s = s.strip_prefix('"')?;
    let end = s.find('"')?;
    let referrer = &s[..end];

    let s = s[end + 1..].trim_start();
    let s = s.strip_prefix('"')?;
    s.find('"')?;

    Some(ClfFields {
        time,
        request,
        referrer,
    })
}

/// First `q` parameter of a query string, percent-decoded with plus-as-
/// space, trimmed. `None` when missing or empty.
fn query_param(query_string: &str) -> Option<String> {
    for pair in query_string.split('&') {
        let (key, value) = match pair.split_once('=') {
            Some((k, v)) => (k, v),
            None => (pair, ""),
        };
        if decode_component(key) == "q" {
            let decoded = decode_component(value);
            let trimmed = decoded.trim();
            if trimmed.is_empty() {
                return None;
            }
            return Some(trimmed.to_string());
        }
    }
    None
}

fn hex_digit(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn decode_component(raw: &str) -> String {
    let bytes = raw.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b'%' if i + 2 < bytes.len() => {
                match (hex_digit(bytes[i + 1]), hex_digit(bytes[i + 2])) {
                    (Some(hi), Some(lo)) => {
                        out.push(hi * 16 + lo);
                        i += 3;
                    }
                    _ => {
                        out.push(b'%');
                        i += 1;
                    }
                }
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Outcome of parsing a whole log stream.
#[derive(Debug)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    pub skipped: BTreeMap<SkipReason, u64>,
}

pub fn parse_log<R: BufRead>(input: R, parser: &LogParser) -> Result<ParsedLog, SessionError> {
    let mut records = Vec::new();
    let mut skipped: BTreeMap<SkipReason, u64> = BTreeMap::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parser.parse_line(&line, idx + 1) {
            ParsedLine::Search(record) => records.push(record),
            ParsedLine::Skip(reason) => *skipped.entry(reason).or_insert(0) += 1,
        }
    }
    Ok(ParsedLog { records, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEvent {
    #[serde(with = "crate::timefmt")]
    pub timestamp: DateTime<Utc>,
    pub query: String,
}

/// A referrer-chained sequence of queries from one user interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: u64,
    pub queries: Vec<QueryEvent>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Rebuild sessions from records in file order.
///
/// A record whose referrer query is `r` continues the open session whose
/// last query equals `r`, whose last timestamp is not after the record's,
/// and whose gap is at most `window_seconds` (inclusive). When several
/// sessions qualify, the one with the latest last timestamp wins; a
/// timestamp tie goes to the most recently started session. Referrer-less
/// records and records matching no open session start new sessions.
pub fn reconstruct_sessions(records: &[LogRecord], window_seconds: i64) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    // Last query text -> session indices whose chain currently ends there.
    let mut open: HashMap<String, Vec<usize>> = HashMap::new();

    for record in records {
        let continued = record.referrer_query.as_ref().and_then(|referrer| {
            let candidates = open.get(referrer)?;
            candidates
                .iter()
                .copied()
                .filter(|&idx| {
                    let last = sessions[idx]
                        .queries
                        .last()
                        .expect("sessions are never empty");
                    let gap = (record.timestamp - last.timestamp).num_seconds();
                    gap >= 0 && gap <= window_seconds
                })
                .max_by_key(|&idx| (sessions[idx].queries.last().unwrap().timestamp, idx))
        });

        match continued {
            Some(idx) => {
                let previous = sessions[idx].queries.last().unwrap().query.clone();
                let bucket = open.get_mut(&previous).unwrap();
                bucket.retain(|&i| i != idx);
                if bucket.is_empty() {
                    open.remove(&previous);
                }
                sessions[idx].queries.push(QueryEvent {
                    timestamp: record.timestamp,
                    query: record.query.clone(),
                });
                open.entry(record.query.clone()).or_default().push(idx);
            }
            None => {
                let id = sessions.len() as u64;
                sessions.push(Session {
                    id,
                    queries: vec![QueryEvent {
                        timestamp: record.timestamp,
                        query: record.query.clone(),
                    }],
                });
                open.entry(record.query.clone())
                    .or_default()
                    .push(sessions.len() - 1);
            }
        }
    }

    sessions
}

/// Category flags of a session: a flag is set when any query in the
/// session matches that category's lexicon.
pub fn classify_session(
    session: &Session,
    matchers: &BTreeMap<Category, CompiledMatcher>,
) -> BTreeSet<Category> {
    let mut flags = BTreeSet::new();
    for (category, matcher) in matchers {
        if session.queries.iter().any(|q| matcher.is_match(&q.query)) {
            flags.insert(*category);
        }
    }
    flags
}

/// Counts over a session list: per-category session counts plus
/// co-occurrence counts of target-flagged sessions that also match the
/// violence or gender lexicons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub total_sessions: u64,
    pub category_counts: BTreeMap<Category, u64>,
    pub cooccurrence_counts: BTreeMap<String, u64>,
}

pub fn aggregate(
    sessions: &[Session],
    matchers: &BTreeMap<Category, CompiledMatcher>,
) -> SessionMetrics {
    let mut category_counts: BTreeMap<Category, u64> = matchers.keys().map(|c| (*c, 0)).collect();
    let cooccur_categories: Vec<Category> = [
        Category::Violence,
        Category::GenderGirl,
        Category::GenderBoy,
    ]
    .into_iter()
    .filter(|c| matchers.contains_key(c) && matchers.contains_key(&Category::Target))
    .collect();
    let mut cooccurrence_counts: BTreeMap<String, u64> = cooccur_categories
        .iter()
        .map(|c| (format!("target+{c}"), 0))
        .collect();

    for session in sessions {
        let flags = classify_session(session, matchers);
        for flag in &flags {
            *category_counts.get_mut(flag).unwrap() += 1;
        }
        if flags.contains(&Category::Target) {
            for category in &cooccur_categories {
                if flags.contains(category) {
                    *cooccurrence_counts
                        .get_mut(&format!("target+{category}"))
                        .unwrap() += 1;
                }
            }
        }
    }

    SessionMetrics {
        total_sessions: sessions.len() as u64,
        category_counts,
        cooccurrence_counts,
    }
}

pub fn write_sessions<W: Write>(mut out: W, sessions: &[Session]) -> Result<(), SessionError> {
    for session in sessions {
        serde_json::to_writer(&mut out, session).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sessions<R: BufRead>(input: R) -> Result<Vec<Session>, SessionError> {
    let mut sessions = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let session: Session =
            serde_json::from_str(&line).map_err(|source| SessionError::Malformed {
                line: idx + 1,
                source,
            })?;
        sessions.push(session);
    }
    Ok(sessions)
}

/// Metrics as CSV: `metric,count,share` with shares relative to the
/// session total.
pub fn write_metrics_csv<W: Write>(
    mut out: W,
    metrics: &SessionMetrics,
) -> Result<(), SessionError> {
    writeln!(out, "metric,count,share")?;
    writeln!(out, "total_sessions,{},1", metrics.total_sessions)?;
    let share = |count: u64| {
        if metrics.total_sessions == 0 {
            "0".to_string()
        } else {
            format!("{:.6}", count as f64 / metrics.total_sessions as f64)
        }
    };
    for (category, count) in &metrics.category_counts {
        writeln!(out, "category:{category},{count},{}", share(*count))?;
    }
    for (key, count) in &metrics.cooccurrence_counts {
        writeln!(out, "cooccurrence:{key},{count},{}", share(*count))?;
    }
    Ok(())
}
