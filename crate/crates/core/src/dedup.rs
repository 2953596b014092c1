//! Mirror detection: domains that serve identical content are grouped and
//! collapsed to a single canonical domain before any prevalence counting.
//!
//! "Identical content" means exact equality of the normalized title and the
//! set of normalized sentences. Order and repetition of sentences do not
//! matter; any changed sentence or title does.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::corpus::Document;
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("duplicate domain in input: {0}")]
    DuplicateDomain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Content identity of a document: normalized title plus an
/// order-insensitive digest over its sentence set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub title_norm: String,
    pub sentence_digest: u128,
}

/// A set of domains that share identical content. The canonical domain is
/// always the lexicographically smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteGroup {
    pub canonical_domain: String,
    pub members: Vec<String>,
    pub fingerprint: Fingerprint,
}

impl SiteGroup {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013b;

fn fnv128(state: u128, bytes: &[u8]) -> u128 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

/// Compute the fingerprint of a document.
///
/// Sentences are deduplicated and sorted before hashing, so the digest is
/// invariant to order and multiplicity. Each sentence is length-prefixed in
/// the hash stream so distinct sets cannot collide by concatenation.
pub fn fingerprint(doc: &Document) -> Fingerprint {
    let unique: BTreeSet<&str> = doc.sentences.iter().map(String::as_str).collect();
    let mut digest = FNV128_OFFSET;
    for sentence in &unique {
        digest = fnv128(digest, &(sentence.len() as u64).to_le_bytes());
        digest = fnv128(digest, sentence.as_bytes());
    }
    Fingerprint {
        title_norm: normalize(&doc.title),
        sentence_digest: digest,
    }
}

/// Partition documents (one per domain) into groups of identical content.
///
/// Groups come back sorted by canonical domain, members sorted within each
/// group. A repeated input domain is an error.
pub fn group_duplicates(docs: &[Document]) -> Result<Vec<SiteGroup>, DedupError> {
    let mut seen: HashSet<&str> = HashSet::new();
    for doc in docs {
        if !seen.insert(doc.domain.as_str()) {
            return Err(DedupError::DuplicateDomain(doc.domain.clone()));
        }
    }

    let mut by_print: HashMap<Fingerprint, Vec<String>> = HashMap::new();
    for doc in docs {
        by_print
            .entry(fingerprint(doc))
            .or_default()
            .push(doc.domain.clone());
    }

    let mut groups: Vec<SiteGroup> = by_print
        .into_iter()
        .map(|(fp, mut members)| {
            members.sort();
            SiteGroup {
                canonical_domain: members[0].clone(),
                members,
                fingerprint: fp,
            }
        })
        .collect();
    groups.sort_by(|a, b| a.canonical_domain.cmp(&b.canonical_domain));
    Ok(groups)
}

/// Keep only the canonical document of each group, in group order.
pub fn canonical_documents<'a>(docs: &'a [Document], groups: &[SiteGroup]) -> Vec<&'a Document> {
    let by_domain: HashMap<&str, &Document> = docs.iter().map(|d| (d.domain.as_str(), d)).collect();
    groups
        .iter()
        .filter_map(|g| by_domain.get(g.canonical_domain.as_str()).copied())
        .collect()
}

/// Write the group report: CSV with canonical domain, member count, and the
/// semicolon-joined member list.
pub fn write_group_report<W: Write>(mut out: W, groups: &[SiteGroup]) -> Result<(), DedupError> {
    writeln!(out, "canonical_domain,member_count,members")?;
    for group in groups {
        writeln!(
            out,
            "{},{},{}",
            group.canonical_domain,
            group.member_count(),
            group.members.join(";")
        )?;
    }
    Ok(())
}
