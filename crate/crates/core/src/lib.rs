//! Text-based harmful-content measurement and search-intervention toolkit.
//!
//! The pipeline stages, in the order they run:
//!
//! * [`corpus`] — snapshot ingestion, markup-to-text extraction, sampling
//! * [`dedup`] — mirror detection over content fingerprints
//! * [`lexicon`] — shareable phrase lexicons and multi-pattern matching
//! * [`classifier`] — naive Bayes / decision tree text classification
//! * [`sessions`] — query-log parsing and referrer-chained sessions
//! * [`ages`] — exact-age and broad age-term extraction from sessions
//! * [`prevalence`] — sampled detection with FP/FN-corrected share estimates
//! * [`intervene`] — per-query filtering decisions for a live search engine

pub mod ages;
pub mod classifier;
pub mod corpus;
pub mod dedup;
pub mod intervene;
pub mod lexicon;
pub mod prevalence;
pub mod sessions;
pub mod text;
pub(crate) mod timefmt;
