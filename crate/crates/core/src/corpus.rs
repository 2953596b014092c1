//! Snapshot ingestion: converts raw page markup into plain-text document
//! records, one per domain, and provides deterministic sampling over them.
//!
//! Corpus files are JSONL, one [`Document`] per line, ordered by domain.
//! Identical input always produces a byte-identical corpus file.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{collapse_whitespace, normalize};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("sample of {requested} domains requested but corpus has only {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("corpus line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One crawled page as delivered by an external snapshot collector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSnapshot {
    pub domain: String,
    pub url_path: String,
    #[serde(with = "crate::timefmt")]
    pub fetched_at: DateTime<Utc>,
    pub markup: String,
}

impl RawSnapshot {
    /// Domain must be non-empty and carry no uppercase characters.
    pub fn is_valid(&self) -> bool {
        !self.domain.is_empty() && !self.domain.chars().any(char::is_uppercase)
    }
}

/// A media reference extracted from markup: the source file name and any
/// caption text that accompanied it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub filename: String,
    pub caption: String,
}

/// Plain-text representation of one website snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub domain: String,
    #[serde(with = "crate::timefmt")]
    pub fetched_at: DateTime<Utc>,
    pub title: String,
    pub body_text: String,
    pub sentences: Vec<String>,
    pub media_refs: Vec<MediaRef>,
}

impl Document {
    /// Build a document from a snapshot, extracting text and splitting
    /// sentences so the type invariants hold by construction.
    pub fn from_snapshot(snapshot: &RawSnapshot) -> Document {
        let extracted = extract_text(&snapshot.markup);
        Document {
            domain: snapshot.domain.clone(),
            fetched_at: snapshot.fetched_at,
            sentences: sentence_split(&extracted.body_text),
            title: extracted.title,
            body_text: extracted.body_text,
            media_refs: extracted.media_refs,
        }
    }

    /// The text surface that detection and classification scan: the title
    /// followed by the body, since not every page repeats its title in the
    /// body text.
    pub fn scan_text(&self) -> String {
        if self.title.is_empty() {
            self.body_text.clone()
        } else if self.body_text.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.body_text)
        }
    }
}

/// Title, body text, and media references pulled out of page markup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractedContent {
    pub title: String,
    pub body_text: String,
    pub media_refs: Vec<MediaRef>,
}

/// Convert arbitrary, possibly malformed markup to plain text.
///
/// Tags are stripped (each one acts as a word separator), script/style/
/// noscript contents are dropped, and image/video source file names plus
/// their captions are kept both in the body text and in `media_refs`. The
/// title comes from the `<title>` element, falling back to the first
/// heading. Never fails: broken markup degrades to best-effort text.
///
/// Re-extracting the returned `body_text` yields it unchanged, so plain
/// text passes through untouched. Only a conservative set of entities is
/// decoded (`&nbsp;` `&quot;` `&apos;` `&#39;`) to keep that re-extraction
/// stable.
pub fn extract_text(markup: &str) -> ExtractedContent {
    let mut body = String::with_capacity(markup.len() / 2);
    let mut title_buf: Option<String> = None;
    let mut heading_buf: Option<String> = None;
    let mut media_refs: Vec<MediaRef> = Vec::new();

    let mut in_title = false;
    let mut in_heading = false;
    let mut title_done = false;
    let mut heading_done = false;

    let mut i = 0usize;
    while i < markup.len() {
        let rest = &markup[i..];

        if rest.starts_with("<!--") {
            match rest.find("-->") {
                Some(end) => i += end + 3,
                None => break,
            }
            body.push(' ');
            continue;
        }

        if let Some(after_lt) = rest.strip_prefix('<') {
            let next = after_lt.chars().next();
            let is_tag = matches!(next, Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?');
            if is_tag {
                let Some(gt) = rest.find('>') else {
                    // Unclosed tag: the remainder is tag soup, drop it.
                    break;
                };
                let tag_src = &rest[1..gt];
                i += gt + 1;
                body.push(' ');

                let (name, closing) = tag_name(tag_src);
                let self_closing = tag_src.trim_end().ends_with('/');

                match name.as_str() {
                    "script" | "style" | "noscript" => {
                        if !closing && !self_closing {
                            i += skip_to_close(&markup[i..], &name);
                        }
                    }
                    "title" => {
                        if closing {
                            if in_title {
                                in_title = false;
                                title_done = true;
                            }
                        } else if !title_done && !self_closing {
                            in_title = true;
                            title_buf.get_or_insert_with(String::new);
                        }
                    }
                    "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                        if closing {
                            if in_heading {
                                in_heading = false;
                                heading_done = true;
                            }
                        } else if !heading_done && !in_heading {
                            in_heading = true;
                            heading_buf.get_or_insert_with(String::new);
                        }
                    }
                    "img" | "video" | "audio" | "source" | "embed" if !closing => {
                        if let Some(media) = media_from_tag(tag_src) {
                            body.push_str(&media.filename);
                            if !media.caption.is_empty() {
                                body.push(' ');
                                body.push_str(&media.caption);
                            }
                            body.push(' ');
                            media_refs.push(media);
                        }
                    }
                    _ => {}
                }
                continue;
            }
            // '<' that does not open a tag is literal text.
            route_char(
                '<',
                &mut body,
                in_title,
                &mut title_buf,
                in_heading,
                &mut heading_buf,
            );
            i += 1;
            continue;
        }

        if rest.starts_with('&') {
            if let Some((repl, used)) = decode_entity(rest) {
                route_char(
                    repl,
                    &mut body,
                    in_title,
                    &mut title_buf,
                    in_heading,
                    &mut heading_buf,
                );
                i += used;
                continue;
            }
            route_char(
                '&',
                &mut body,
                in_title,
                &mut title_buf,
                in_heading,
                &mut heading_buf,
            );
            i += 1;
            continue;
        }

        let ch = rest.chars().next().unwrap();
        route_char(
            ch,
            &mut body,
            in_title,
            &mut title_buf,
            in_heading,
            &mut heading_buf,
        );
        i += ch.len_utf8();
    }

    let title_el = title_buf
        .map(|t| collapse_whitespace(&t))
        .unwrap_or_default();
    let heading = heading_buf
        .map(|t| collapse_whitespace(&t))
        .unwrap_or_default();
    let mut title = if !title_el.is_empty() {
        title_el
    } else {
        heading
    };
    if title.contains(['<', '>']) {
        title = title.replace(['<', '>'], " ");
        title = collapse_whitespace(&title);
    }

    ExtractedContent {
        title,
        body_text: collapse_whitespace(&body),
        media_refs,
    }
}

fn route_char(
    ch: char,
    body: &mut String,
    in_title: bool,
    title_buf: &mut Option<String>,
    in_heading: bool,
    heading_buf: &mut Option<String>,
) {
    if in_title {
        if let Some(buf) = title_buf {
            buf.push(ch);
        }
        return;
    }
    body.push(ch);
    if in_heading {
        if let Some(buf) = heading_buf {
            buf.push(ch);
        }
    }
}

fn tag_name(tag_src: &str) -> (String, bool) {
    let (rest, closing) = match tag_src.strip_prefix('/') {
        Some(rest) => (rest, true),
        None => (tag_src, false),
    };
    let name = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    (name, closing)
}

/// Bytes to skip so that `rest` lands just past `</name ... >`, or to the
/// end of input when the element is never closed.
fn skip_to_close(rest: &str, name: &str) -> usize {
    let hay = rest.as_bytes();
    let needle = name.as_bytes();
    let mut i = 0;
    while i + 2 + needle.len() <= hay.len() {
        if hay[i] == b'<'
            && hay[i + 1] == b'/'
            && hay[i + 2..i + 2 + needle.len()].eq_ignore_ascii_case(needle)
        {
            let mut j = i + 2 + needle.len();
            while j < hay.len() && hay[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < hay.len() && hay[j] == b'>' {
                return j + 1;
            }
        }
        i += 1;
    }
    hay.len()
}

fn decode_entity(rest: &str) -> Option<(char, usize)> {
    const TABLE: [(&str, char); 4] = [
        ("&nbsp;", ' '),
        ("&quot;", '"'),
        ("&apos;", '\''),
        ("&#39;", '\''),
    ];
    let bytes = rest.as_bytes();
    for (pat, repl) in TABLE {
        if let Some(head) = bytes.get(..pat.len()) {
            if head.eq_ignore_ascii_case(pat.as_bytes()) {
                return Some((repl, pat.len()));
            }
        }
    }
    None
}

fn media_from_tag(tag_src: &str) -> Option<MediaRef> {
    let src = attr_value(tag_src, "src")?;
    let filename = media_filename(&src)?;
    let caption = attr_value(tag_src, "alt")
        .or_else(|| attr_value(tag_src, "title"))
        .map(|c| collapse_whitespace(&strip_angle_brackets(&decode_min_entities(&c))))
        .unwrap_or_default();
    Some(MediaRef { filename, caption })
}

// Attribute values are emitted into plain body text, so they must not be
// able to smuggle tag syntax back in.
fn strip_angle_brackets(s: &str) -> String {
    if s.contains(['<', '>']) {
        s.replace(['<', '>'], " ")
    } else {
        s.to_string()
    }
}

fn media_filename(src: &str) -> Option<String> {
    let trimmed = src.trim();
    if trimmed.is_empty() || trimmed.starts_with("data:") {
        return None;
    }
    let no_suffix = trimmed.split(['?', '#']).next().unwrap_or("");
    let base = no_suffix.rsplit('/').next().unwrap_or("");
    // Collapsed like body text, so the stored name always reappears there.
    let base = collapse_whitespace(&strip_angle_brackets(base));
    if base.is_empty() {
        None
    } else {
        Some(base)
    }
}

fn decode_min_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if let Some((repl, used)) = decode_entity(rest) {
            out.push(repl);
            i += used;
            continue;
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Pull one attribute value out of tag source text. Case-insensitive on the
/// attribute name; tolerates single, double, or missing quotes.
fn attr_value(tag_src: &str, attr: &str) -> Option<String> {
    let hay = tag_src.as_bytes();
    let needle = attr.as_bytes();
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        let at_start = i == 0 || hay[i - 1].is_ascii_whitespace();
        if at_start && hay[i..i + needle.len()].eq_ignore_ascii_case(needle) {
            let mut j = i + needle.len();
            while j < hay.len() && hay[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < hay.len() && hay[j] == b'=' {
                j += 1;
                while j < hay.len() && hay[j].is_ascii_whitespace() {
                    j += 1;
                }
                if j >= hay.len() {
                    return Some(String::new());
                }
                let (start, end) = match hay[j] {
                    q @ (b'"' | b'\'') => {
                        let start = j + 1;
                        let mut k = start;
                        while k < hay.len() && hay[k] != q {
                            k += 1;
                        }
                        (start, k)
                    }
                    _ => {
                        let start = j;
                        let mut k = start;
                        while k < hay.len() && !hay[k].is_ascii_whitespace() {
                            k += 1;
                        }
                        (start, k)
                    }
                };
                return Some(String::from_utf8_lossy(&hay[start..end]).into_owned());
            }
        }
        i += 1;
    }
    None
}

/// Split text into normalized sentences: boundaries at terminal punctuation
/// (`. ! ?`) followed by whitespace or end of line, and at newlines. Each
/// sentence is trimmed, lowercased, and whitespace-collapsed; empty
/// fragments are dropped and the terminal punctuation is not kept.
pub fn sentence_split(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    for line in text.split(['\n', '\r']) {
        let mut start = 0usize;
        let mut iter = line.char_indices().peekable();
        while let Some((idx, ch)) = iter.next() {
            if !matches!(ch, '.' | '!' | '?') {
                continue;
            }
            let mut after_run = idx + ch.len_utf8();
            while let Some(&(j, c2)) = iter.peek() {
                if matches!(c2, '.' | '!' | '?') {
                    iter.next();
                    after_run = j + c2.len_utf8();
                } else {
                    break;
                }
            }
            let at_boundary = match iter.peek() {
                None => true,
                Some(&(_, c2)) => c2.is_whitespace(),
            };
            if at_boundary {
                push_sentence(&mut sentences, &line[start..idx]);
                start = after_run;
            }
        }
        push_sentence(&mut sentences, &line[start..]);
    }
    sentences
}

fn push_sentence(out: &mut Vec<String>, fragment: &str) {
    let normalized = normalize(fragment);
    if !normalized.is_empty() {
        out.push(normalized);
    }
}

/// Result of ingesting a snapshot stream.
#[derive(Debug)]
pub struct IngestOutcome {
    pub documents: Vec<Document>,
    pub rejects: usize,
}

/// Read a JSONL stream of [`RawSnapshot`] records and produce one
/// [`Document`] per domain, keeping the newest `fetched_at` per domain.
/// Output is ordered by domain. Malformed or invalid records are skipped
/// and counted, never fatal.
pub fn ingest<R: BufRead>(input: R) -> Result<IngestOutcome, CorpusError> {
    let mut newest: HashMap<String, RawSnapshot> = HashMap::new();
    let mut rejects = 0usize;

    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snapshot: RawSnapshot = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(_) => {
                rejects += 1;
                continue;
            }
        };
        if !snapshot.is_valid() {
            rejects += 1;
            continue;
        }
        match newest.get(&snapshot.domain) {
            Some(current) if current.fetched_at > snapshot.fetched_at => {}
            _ => {
                newest.insert(snapshot.domain.clone(), snapshot);
            }
        }
    }

    let mut documents: Vec<Document> = newest.values().map(Document::from_snapshot).collect();
    documents.sort_by(|a, b| a.domain.cmp(&b.domain));
    Ok(IngestOutcome { documents, rejects })
}

/// Uniform sample of `k` distinct domains, without replacement, reproducible
/// under a fixed seed. The result is sorted by domain.
pub fn sample(corpus: &[Document], k: usize, seed: u64) -> Result<Vec<Document>, CorpusError> {
    let mut by_domain: Vec<(&str, &Document)> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for doc in corpus {
            if seen.insert(doc.domain.as_str()) {
                by_domain.push((doc.domain.as_str(), doc));
            }
        }
    }
    by_domain.sort_by_key(|(domain, _)| *domain);

    let available = by_domain.len();
    if k > available {
        return Err(CorpusError::SampleTooLarge {
            requested: k,
            available,
        });
    }

    let mut order: Vec<usize> = (0..available).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = rng.gen_range(i..available);
        order.swap(i, j);
    }
    let mut chosen: Vec<Document> = order[..k]
        .iter()
        .map(|&idx| by_domain[idx].1.clone())
        .collect();
    chosen.sort_by(|a, b| a.domain.cmp(&b.domain));
    Ok(chosen)
}

/// Write a corpus as JSONL, one document per line.
pub fn write_corpus<W: Write>(mut out: W, documents: &[Document]) -> Result<(), CorpusError> {
    for doc in documents {
        serde_json::to_writer(&mut out, doc).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a corpus file written by [`write_corpus`]. Malformed lines are an
/// error here: corpus files are produced by this toolkit, not foreign input.
pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<Document>, CorpusError> {
    let mut documents = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
                line: idx + 1,
                source,
            })?;
        documents.push(doc);
    }
    Ok(documents)
}
