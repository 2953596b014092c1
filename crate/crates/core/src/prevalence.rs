//! Yearly measurement pipeline: sample the corpus, collapse mirrors, run
//! the detection lexicon, and correct the raw match count with measured
//! false positive and false negative rates.
//!
//! The corrected share keeps the true positives among the matches and adds
//! the estimated misses among the non-matches:
//! `(M * (1 - fp) + (N - M) * fn) / N`.

use std::borrow::Cow;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{sample, Document};
use crate::dedup::{canonical_documents, group_duplicates};
use crate::lexicon::CompiledMatcher;

#[derive(Debug, Error)]
pub enum PrevalenceError {
    #[error("cannot estimate a share over zero unique sites")]
    NoSites,
    #[error("raw matches ({matches}) exceed unique sites ({sites})")]
    MoreMatchesThanSites { matches: usize, sites: usize },
    #[error("{name} rate {value} is outside [0, 1]")]
    BadRate { name: &'static str, value: f64 },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Dedup(#[from] crate::dedup::DedupError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One period's sample counts and the corrected content share.
///
/// `pre_dedup_matches` counts matched domains in the full sample before
/// mirror collapsing; `raw_matches` counts matches among the deduplicated
/// canonical sites. Both are recorded so mirror concentration among
/// matches stays visible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceEstimate {
    pub period: String,
    pub sample_size: usize,
    pub pre_dedup_matches: usize,
    pub unique_sites: usize,
    pub raw_matches: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub corrected_share: f64,
}

fn check_rate(name: &'static str, value: f64) -> Result<(), PrevalenceError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(PrevalenceError::BadRate { name, value });
    }
    Ok(())
}

/// FP/FN-corrected content share.
///
/// `raw_matches` of `unique_sites` matched the detector; `fp_rate` is the
/// share of matches that are false, `fn_rate` the share of non-matches
/// that are actually positive.
pub fn corrected_share(
    raw_matches: usize,
    unique_sites: usize,
    fp_rate: f64,
    fn_rate: f64,
) -> Result<f64, PrevalenceError> {
    if unique_sites == 0 {
        return Err(PrevalenceError::NoSites);
    }
    if raw_matches > unique_sites {
        return Err(PrevalenceError::MoreMatchesThanSites {
            matches: raw_matches,
            sites: unique_sites,
        });
    }
    check_rate("false positive", fp_rate)?;
    check_rate("false negative", fn_rate)?;

    let m = raw_matches as f64;
    let n = unique_sites as f64;
    Ok((m * (1.0 - fp_rate) + (n - m) * fn_rate) / n)
}

/// Run one period's pipeline: sample `k` domains, collapse mirrors, match
/// every canonical document, and produce the corrected estimate.
#[allow(clippy::too_many_arguments)]
pub fn yearly_pipeline(
    corpus: &[Document],
    matcher: &CompiledMatcher,
    k: usize,
    seed: u64,
    fp_rate: f64,
    fn_rate: f64,
    period: &str,
) -> Result<PrevalenceEstimate, PrevalenceError> {
    let sampled = sample(corpus, k, seed)?;
    let pre_dedup_matches = sampled
        .iter()
        .filter(|doc| matcher.is_match(&doc.scan_text()))
        .count();

    let groups = group_duplicates(&sampled)?;
    let canonical = canonical_documents(&sampled, &groups);
    let unique_sites = groups.len();
    let raw_matches = canonical
        .iter()
        .filter(|doc| matcher.is_match(&doc.scan_text()))
        .count();

    let share = corrected_share(raw_matches, unique_sites, fp_rate, fn_rate)?;
    Ok(PrevalenceEstimate {
        period: period.to_string(),
        sample_size: k,
        pre_dedup_matches,
        unique_sites,
        raw_matches,
        fp_rate,
        fn_rate,
        corrected_share: share,
    })
}

/// One line of the manual-validation review sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRow {
    pub domain: String,
    pub title: String,
    pub text_preview: String,
}

const PREVIEW_CHARS: usize = 500;

/// Draw a reproducible review sample: domain, title, and the first 500
/// characters of text per row, ready for human annotation.
pub fn manual_sample(
    corpus: &[Document],
    k: usize,
    seed: u64,
) -> Result<Vec<ReviewRow>, PrevalenceError> {
    let sampled = sample(corpus, k, seed)?;
    Ok(sampled
        .iter()
        .map(|doc| {
            let preview: String = doc.body_text.chars().take(PREVIEW_CHARS).collect();
            ReviewRow {
                domain: doc.domain.clone(),
                title: doc.title.clone(),
                text_preview: preview,
            }
        })
        .collect())
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

/// Review sheet CSV with an empty label column for annotators.
pub fn write_review_sheet<W: Write>(mut out: W, rows: &[ReviewRow]) -> Result<(), PrevalenceError> {
    writeln!(out, "domain,title,text_preview,label")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},",
            csv_field(&row.domain),
            csv_field(&row.title),
            csv_field(&row.text_preview)
        )?;
    }
    Ok(())
}

/// Detector verdict and human judgement for one reviewed site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReviewedSite {
    pub matched: bool,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    pub fp_rate: f64,
    pub fn_rate: f64,
}

/// Measure detector error rates from an annotated review round: the false
/// positive rate is the share of matches the annotators rejected, the
/// false negative rate the share of non-matches they marked positive.
/// Empty denominators yield a zero rate.
pub fn measure_rates(reviews: &[ReviewedSite]) -> ErrorRates {
    let matched = reviews.iter().filter(|r| r.matched).count();
    let false_pos = reviews.iter().filter(|r| r.matched && !r.positive).count();
    let unmatched = reviews.len() - matched;
    let missed = reviews.iter().filter(|r| !r.matched && r.positive).count();
    ErrorRates {
        fp_rate: if matched > 0 {
            false_pos as f64 / matched as f64
        } else {
            0.0
        },
        fn_rate: if unmatched > 0 {
            missed as f64 / unmatched as f64
        } else {
            0.0
        },
    }
}
