//! Naive Bayes and decision tree text classifiers over binary
//! token-presence features, plus model persistence and evaluation.
//!
//! Presence features keep the models interpretable: the strongest tokens of
//! a trained Bayes model can be exported directly as lexicon phrases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Default smoothing for token-presence likelihoods, exposed as a flag in
/// the CLI.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("the {0} class has no training examples")]
    EmptyClass(Label),
    #[error("smoothing alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("max_depth must be at least 1")]
    BadDepth,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("model format version {0} is not supported (expected {MODEL_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file: {0}")]
    BadModel(String),
    #[error("labeled example line {line}: {message}")]
    BadExample { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    fn index(self) -> usize {
        match self {
            Label::Positive => 0,
            Label::Negative => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(format!("unknown label: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
}

/// Binary token-presence features: Unicode-lowercased maximal runs of
/// letters and digits, tokens shorter than two characters dropped.
pub fn featurize(text: &str) -> BTreeSet<String> {
    let lowered = text.to_lowercase();
    let mut features = BTreeSet::new();
    let mut token = String::new();
    for ch in lowered.chars().chain(std::iter::once(' ')) {
        if ch.is_alphanumeric() {
            token.push(ch);
        } else if !token.is_empty() {
            if token.chars().count() >= 2 {
                features.insert(std::mem::take(&mut token));
            } else {
                token.clear();
            }
        }
    }
    features
}

#[derive(Debug, Clone, Copy)]
struct TokenStats {
    /// log P(token present | class), indexed by Label::index.
    log_present: [f64; 2],
    /// log P(token absent | class).
    log_absent: [f64; 2],
}

/// Trained naive Bayes model with presence and absence likelihoods for
/// every vocabulary token. Immutable once trained.
#[derive(Debug, Clone)]
pub struct NBModel {
    log_priors: [f64; 2],
    stats: BTreeMap<String, TokenStats>,
    alpha: f64,
}

fn log_absent_from_present(log_present: f64) -> f64 {
    (-log_present.exp()).ln_1p()
}

impl NBModel {
    pub fn smoothing_alpha(&self) -> f64 {
        self.alpha
    }

    pub fn class_log_prior(&self, label: Label) -> f64 {
        self.log_priors[label.index()]
    }

    /// log P(token present | label); `None` for out-of-vocabulary tokens.
    pub fn token_log_likelihood(&self, token: &str, label: Label) -> Option<f64> {
        self.stats.get(token).map(|s| s.log_present[label.index()])
    }

    pub fn token_log_absence(&self, token: &str, label: Label) -> Option<f64> {
        self.stats.get(token).map(|s| s.log_absent[label.index()])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.stats.keys().map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.stats.len()
    }
}

/// Train a naive Bayes model.
///
/// Priors are the class frequencies; the presence likelihood of a token is
/// `(count + alpha) / (class_size + 2 * alpha)` where count is the number
/// of class documents containing the token. The vocabulary is the union of
/// tokens across both classes.
pub fn train_nb(
    positives: &[LabeledExample],
    negatives: &[LabeledExample],
    alpha: f64,
) -> Result<NBModel, ClassifierError> {
    if positives.is_empty() {
        return Err(ClassifierError::EmptyClass(Label::Positive));
    }
    if negatives.is_empty() {
        return Err(ClassifierError::EmptyClass(Label::Negative));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(ClassifierError::BadAlpha(alpha));
    }

    let mut doc_freq: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (class, examples) in [(0usize, positives), (1usize, negatives)] {
        for example in examples {
            for token in featurize(&example.text) {
                doc_freq.entry(token).or_insert([0, 0])[class] += 1;
            }
        }
    }

    let counts = [positives.len() as f64, negatives.len() as f64];
    let total = counts[0] + counts[1];
    let log_priors = [(counts[0] / total).ln(), (counts[1] / total).ln()];

    let stats = doc_freq
        .into_iter()
        .map(|(token, freq)| {
            let mut log_present = [0.0; 2];
            let mut log_absent = [0.0; 2];
            for class in 0..2 {
                let p = (freq[class] as f64 + alpha) / (counts[class] + 2.0 * alpha);
                log_present[class] = p.ln();
                log_absent[class] = log_absent_from_present(log_present[class]);
            }
            (
                token,
                TokenStats {
                    log_present,
                    log_absent,
                },
            )
        })
        .collect();

    Ok(NBModel {
        log_priors,
        stats,
        alpha,
    })
}

/// Classify a text: log-domain Bayes over the presence *and* absence of
/// every vocabulary token. Unknown tokens are ignored. Returns the label
/// and the posterior probability of the positive class; a 0.5 tie goes to
/// negative.
pub fn predict_nb(model: &NBModel, text: &str) -> (Label, f64) {
    let features = featurize(text);
    let mut log_joint = model.log_priors;
    for (token, stats) in &model.stats {
        let present = features.contains(token);
        let source = if present {
            &stats.log_present
        } else {
            &stats.log_absent
        };
        for (joint, term) in log_joint.iter_mut().zip(source) {
            *joint += term;
        }
    }
    let posterior = stable_sigmoid(log_joint[0] - log_joint[1]);
    let posterior = posterior.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let label = if posterior > 0.5 {
        Label::Positive
    } else {
        Label::Negative
    };
    (label, posterior)
}

/// 1 / (1 + e^-x) without overflow at extreme log-odds.
fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluation of a predictor on a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_accuracy: BTreeMap<Label, f64>,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub n: usize,
}

/// Confusion-count evaluation. The false positive rate is the share of
/// negatives classified positive; the false negative rate is the share of
/// positives classified negative.
pub fn evaluate<F>(predict: F, data: &[LabeledExample]) -> Result<EvalReport, ClassifierError>
where
    F: Fn(&str) -> Label,
{
    if data.is_empty() {
        return Err(ClassifierError::EmptyEvalSet);
    }
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for example in data {
        let predicted = predict(&example.text);
        total[example.label.index()] += 1;
        if predicted == example.label {
            correct[example.label.index()] += 1;
        }
    }
    let n = data.len();
    let accuracy = (correct[0] + correct[1]) as f64 / n as f64;
    let mut per_class_accuracy = BTreeMap::new();
    for label in [Label::Positive, Label::Negative] {
        if total[label.index()] > 0 {
            per_class_accuracy.insert(
                label,
                correct[label.index()] as f64 / total[label.index()] as f64,
            );
        }
    }
    let false_negative_rate = if total[0] > 0 {
        (total[0] - correct[0]) as f64 / total[0] as f64
    } else {
        0.0
    };
    let false_positive_rate = if total[1] > 0 {
        (total[1] - correct[1]) as f64 / total[1] as f64
    } else {
        0.0
    };
    Ok(EvalReport {
        accuracy,
        per_class_accuracy,
        false_positive_rate,
        false_negative_rate,
        n,
    })
}

/// Vocabulary tokens ranked by the log-likelihood ratio
/// `log(P(present|positive) / P(present|negative))`, descending. Ties break
/// lexicographically. `k` beyond the vocabulary truncates without error.
pub fn top_features(model: &NBModel, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .stats
        .iter()
        .map(|(token, stats)| (token.clone(), stats.log_present[0] - stats.log_present[1]))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    ranked
}

/// Decision tree node: an internal node tests one token for presence.
#[derive(Debug, Clone, PartialEq)]
pub enum DTNode {
    Leaf {
        label: Label,
        /// Fraction of training examples at this leaf carrying its label.
        purity: f64,
    },
    Split {
        token: String,
        present: Box<DTNode>,
        absent: Box<DTNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DTModel {
    pub root: DTNode,
    pub max_depth: usize,
}

impl DTModel {
    pub fn predict(&self, text: &str) -> Label {
        let features = featurize(text);
        let mut node = &self.root;
        loop {
            match node {
                DTNode::Leaf { label, .. } => return *label,
                DTNode::Split {
                    token,
                    present,
                    absent,
                } => {
                    node = if features.contains(token) {
                        present
                    } else {
                        absent
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &DTNode) -> usize {
            match node {
                DTNode::Leaf { .. } => 0,
                DTNode::Split {
                    present, absent, ..
                } => 1 + walk(present).max(walk(absent)),
            }
        }
        walk(&self.root)
    }
}

/// Train a decision tree with greedy information-gain splits on token
/// presence. Splitting stops at purity, zero gain, or `max_depth`; gain
/// ties break on the lexicographically smallest token.
pub fn train_dt(
    positives: &[LabeledExample],
    negatives: &[LabeledExample],
    max_depth: usize,
) -> Result<DTModel, ClassifierError> {
    if positives.is_empty() {
        return Err(ClassifierError::EmptyClass(Label::Positive));
    }
    if negatives.is_empty() {
        return Err(ClassifierError::EmptyClass(Label::Negative));
    }
    if max_depth == 0 {
        return Err(ClassifierError::BadDepth);
    }

    let mut rows: Vec<(BTreeSet<String>, Label)> = Vec::new();
    for example in positives {
        rows.push((featurize(&example.text), Label::Positive));
    }
    for example in negatives {
        rows.push((featurize(&example.text), Label::Negative));
    }
    let indices: Vec<usize> = (0..rows.len()).collect();
    let root = build_node(&rows, &indices, max_depth);
    Ok(DTModel { root, max_depth })
}

fn entropy(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for count in [pos, total - pos] {
        if count > 0 {
            let p = count as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

fn leaf_for(rows: &[(BTreeSet<String>, Label)], indices: &[usize]) -> DTNode {
    let pos = indices
        .iter()
        .filter(|&&i| rows[i].1 == Label::Positive)
        .count();
    let neg = indices.len() - pos;
    // Majority label; a tie is left uncertain, so negative.
    let label = if pos > neg {
        Label::Positive
    } else {
        Label::Negative
    };
    let majority = pos.max(neg);
    DTNode::Leaf {
        label,
        purity: majority as f64 / indices.len() as f64,
    }
}

fn build_node(rows: &[(BTreeSet<String>, Label)], indices: &[usize], depth_left: usize) -> DTNode {
    let total = indices.len();
    let pos = indices
        .iter()
        .filter(|&&i| rows[i].1 == Label::Positive)
        .count();
    if pos == 0 || pos == total || depth_left == 0 {
        return leaf_for(rows, indices);
    }

    let parent_entropy = entropy(pos, total);
    let mut candidates: BTreeSet<&str> = BTreeSet::new();
    for &i in indices {
        candidates.extend(rows[i].0.iter().map(String::as_str));
    }

    let mut best: Option<(&str, f64)> = None;
    for token in candidates {
        let mut with = (0usize, 0usize); // (pos, total) where token present
        for &i in indices {
            if rows[i].0.contains(token) {
                with.1 += 1;
                if rows[i].1 == Label::Positive {
                    with.0 += 1;
                }
            }
        }
        if with.1 == 0 || with.1 == total {
            continue;
        }
        let without = (pos - with.0, total - with.1);
        let weighted = (with.1 as f64 / total as f64) * entropy(with.0, with.1)
            + (without.1 as f64 / total as f64) * entropy(without.0, without.1);
        let gain = parent_entropy - weighted;
        // Strict > keeps the lexicographically smallest token on ties,
        // since candidates iterate in sorted order.
        if gain > best.map_or(0.0, |(_, g)| g) + 1e-12 {
            best = Some((token, gain));
        }
    }

    let Some((token, _)) = best else {
        return leaf_for(rows, indices);
    };
    let token = token.to_string();
    let (present_idx, absent_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| rows[i].0.contains(&token));
    let present = build_node(rows, &present_idx, depth_left - 1);
    let absent = build_node(rows, &absent_idx, depth_left - 1);
    DTNode::Split {
        token,
        present: Box::new(present),
        absent: Box::new(absent),
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    alpha: f64,
    priors: BTreeMap<Label, f64>,
    vocabulary: Vec<String>,
    likelihoods: Vec<(String, Label, f64)>,
}

/// Persist a model as versioned JSON: priors and the flat
/// `(token, label, log-presence-probability)` triples.
pub fn save_model<W: Write>(mut out: W, model: &NBModel) -> Result<(), ClassifierError> {
    let mut likelihoods = Vec::with_capacity(model.stats.len() * 2);
    for (token, stats) in &model.stats {
        for label in [Label::Positive, Label::Negative] {
            likelihoods.push((token.clone(), label, stats.log_present[label.index()]));
        }
    }
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        alpha: model.alpha,
        priors: BTreeMap::from([
            (Label::Positive, model.log_priors[0]),
            (Label::Negative, model.log_priors[1]),
        ]),
        vocabulary: model.vocabulary().map(str::to_string).collect(),
        likelihoods,
    };
    serde_json::to_writer(&mut out, &file).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Load a model saved by [`save_model`], recomputing absence likelihoods.
pub fn load_model<R: Read>(input: R) -> Result<NBModel, ClassifierError> {
    let file: ModelFile =
        serde_json::from_reader(input).map_err(|e| ClassifierError::BadModel(e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion(file.format_version));
    }
    if file.alpha.is_nan() || file.alpha <= 0.0 {
        return Err(ClassifierError::BadAlpha(file.alpha));
    }
    let mut log_priors = [f64::NAN; 2];
    for (label, lp) in &file.priors {
        log_priors[label.index()] = *lp;
    }
    if log_priors.iter().any(|lp| lp.is_nan()) {
        return Err(ClassifierError::BadModel("missing class prior".to_string()));
    }

    let mut stats: BTreeMap<String, TokenStats> = file
        .vocabulary
        .iter()
        .map(|token| {
            (
                token.clone(),
                TokenStats {
                    log_present: [f64::NAN; 2],
                    log_absent: [f64::NAN; 2],
                },
            )
        })
        .collect();
    for (token, label, lp) in &file.likelihoods {
        let entry = stats.get_mut(token).ok_or_else(|| {
            ClassifierError::BadModel(format!("likelihood for unknown token {token:?}"))
        })?;
        entry.log_present[label.index()] = *lp;
        entry.log_absent[label.index()] = log_absent_from_present(*lp);
    }
    for (token, entry) in &stats {
        if entry.log_present.iter().any(|lp| lp.is_nan()) {
            return Err(ClassifierError::BadModel(format!(
                "token {token:?} is missing a class likelihood"
            )));
        }
    }

    Ok(NBModel {
        log_priors,
        stats,
        alpha: file.alpha,
    })
}

/// Read training data: JSONL of `{"text": …, "label": "positive"|"negative"}`.
pub fn read_labeled<R: BufRead>(input: R) -> Result<Vec<LabeledExample>, ClassifierError> {
    let mut examples = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example: LabeledExample =
            serde_json::from_str(&line).map_err(|e| ClassifierError::BadExample {
                line: idx + 1,
                message: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(text: &str, label: Label) -> LabeledExample {
        LabeledExample {
            text: text.to_string(),
            label,
        }
    }

    fn pos(text: &str) -> LabeledExample {
        ex(text, Label::Positive)
    }

    fn neg(text: &str) -> LabeledExample {
        ex(text, Label::Negative)
    }

    #[test]
    fn featurize_presence_not_counts() {
        let f = featurize("Cat cat CAT");
        assert_eq!(f.into_iter().collect::<Vec<_>>(), vec!["cat"]);
    }

    #[test]
    fn featurize_drops_short_tokens() {
        let f = featurize("a b9 c");
        assert_eq!(f.into_iter().collect::<Vec<_>>(), vec!["b9"]);
    }

    #[test]
    fn featurize_empty() {
        assert!(featurize("").is_empty());
    }

    #[test]
    fn featurize_splits_on_non_word() {
        let f = featurize("one-two_three");
        assert_eq!(
            f.into_iter().collect::<Vec<_>>(),
            vec!["one", "three", "two"]
        );
    }

    #[test]
    fn train_smoothing_matches_hand_formula() {
        let model = train_nb(&[pos("xx")], &[neg("yy")], 0.5).unwrap();
        let p = model
            .token_log_likelihood("xx", Label::Positive)
            .unwrap()
            .exp();
        assert!((p - 0.75).abs() < 1e-12, "got {p}");
        let q = model
            .token_log_likelihood("xx", Label::Negative)
            .unwrap()
            .exp();
        assert!((q - 0.25).abs() < 1e-12, "got {q}");
    }

    #[test]
    fn vocabulary_is_union_of_classes() {
        let model = train_nb(
            &[pos("alpha bravo"), pos("charlie delta")],
            &[neg("echo foxtrot"), neg("golf hotel")],
            0.5,
        )
        .unwrap();
        let vocab: Vec<&str> = model.vocabulary().collect();
        assert_eq!(
            vocab,
            vec!["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]
        );
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(train_nb(&[], &[neg("yy")], 0.5).is_err());
        assert!(train_nb(&[pos("xx")], &[], 0.5).is_err());
    }

    #[test]
    fn symmetric_model_ties_to_negative() {
        let model = train_nb(&[pos("same text here")], &[neg("same text here")], 0.5).unwrap();
        let (label, posterior) = predict_nb(&model, "same text here");
        assert!((posterior - 0.5).abs() < 1e-12);
        assert_eq!(label, Label::Negative);
    }

    #[test]
    fn unknown_tokens_fall_back_to_baseline() {
        let model = train_nb(
            &[pos("alpha bravo"), pos("alpha charlie")],
            &[neg("delta echo")],
            0.5,
        )
        .unwrap();
        let (_, on_unknown) = predict_nb(&model, "zz qq ww");
        let (_, on_empty) = predict_nb(&model, "");
        assert_eq!(on_unknown, on_empty);
    }

    #[test]
    fn posterior_matches_brute_force_on_tiny_model() {
        // Two positives {aa}, {aa,bb}; two negatives {cc}, {bb,cc}.
        let positives = [pos("aa"), pos("aa bb")];
        let negatives = [neg("cc"), neg("bb cc")];
        let alpha = 0.5;
        let model = train_nb(&positives, &negatives, alpha).unwrap();

        let text = "aa cc";
        let features = featurize(text);
        let mut joint = [0.5f64, 0.5]; // equal priors
        for token in ["aa", "bb", "cc"] {
            let present = features.contains(token);
            let df_pos = positives
                .iter()
                .filter(|e| featurize(&e.text).contains(token))
                .count() as f64;
            let df_neg = negatives
                .iter()
                .filter(|e| featurize(&e.text).contains(token))
                .count() as f64;
            let p_pos = (df_pos + alpha) / (2.0 + 2.0 * alpha);
            let p_neg = (df_neg + alpha) / (2.0 + 2.0 * alpha);
            joint[0] *= if present { p_pos } else { 1.0 - p_pos };
            joint[1] *= if present { p_neg } else { 1.0 - p_neg };
        }
        let expected = joint[0] / (joint[0] + joint[1]);
        let (_, got) = predict_nb(&model, text);
        assert!(
            (got - expected).abs() < 1e-9,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn posterior_normalization() {
        let model = train_nb(
            &[pos("alpha bravo"), pos("bravo charlie")],
            &[neg("delta"), neg("delta echo")],
            0.5,
        )
        .unwrap();
        for text in ["alpha", "delta echo", "unrelated words", ""] {
            let (_, p_pos) = predict_nb(&model, text);
            assert!(p_pos > 0.0 && p_pos < 1.0);
        }
    }

    #[test]
    fn positive_only_token_never_lowers_posterior() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let words = ["aa", "bb", "cc", "dd", "ee", "ff"];
        for _ in 0..200 {
            let n = rng.gen_range(1..=10usize);
            let make = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
                let len = rng.gen_range(1..=3);
                (0..len)
                    .map(|_| *words.choose(rng).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            // Balanced classes so smoothed presence odds favour the class
            // a token actually appears in.
            let positives: Vec<LabeledExample> = (0..n).map(|_| pos(&make(&mut rng))).collect();
            let mut negatives: Vec<LabeledExample> = (0..n).map(|_| neg(&make(&mut rng))).collect();
            // "marker" appears only in positive training data.
            let mut positives = positives;
            positives[0].text.push_str(" marker");
            negatives.truncate(n);

            let model = train_nb(&positives, &negatives, 0.5).unwrap();
            let base = "bb cc";
            let (_, without) = predict_nb(&model, base);
            let (_, with) = predict_nb(&model, &format!("{base} marker"));
            assert!(
                with >= without - 1e-12,
                "posterior dropped: {without} -> {with}"
            );
        }
    }

    #[test]
    fn evaluate_all_correct() {
        let data: Vec<LabeledExample> = (0..5)
            .map(|i| pos(&format!("p{i} p{i}x")))
            .chain((0..5).map(|i| neg(&format!("n{i} n{i}x"))))
            .collect();
        let report = evaluate(
            |text| {
                if text.starts_with('p') {
                    Label::Positive
                } else {
                    Label::Negative
                }
            },
            &data,
        )
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.false_positive_rate, 0.0);
        assert_eq!(report.false_negative_rate, 0.0);
        assert_eq!(report.n, 10);
    }

    #[test]
    fn evaluate_always_positive() {
        let data: Vec<LabeledExample> = (0..5)
            .map(|i| pos(&format!("p{i}")))
            .chain((0..5).map(|i| neg(&format!("n{i}"))))
            .collect();
        let report = evaluate(|_| Label::Positive, &data).unwrap();
        assert_eq!(report.accuracy, 0.5);
        assert_eq!(report.false_positive_rate, 1.0);
        assert_eq!(report.false_negative_rate, 0.0);
    }

    #[test]
    fn evaluate_consistency_identity() {
        let data: Vec<LabeledExample> = (0..7)
            .map(|i| pos(&format!("p{i}")))
            .chain((0..3).map(|i| neg(&format!("n{i}"))))
            .collect();
        let report = evaluate(
            |text| {
                if text.contains('0') || text.starts_with('p') {
                    Label::Positive
                } else {
                    Label::Negative
                }
            },
            &data,
        )
        .unwrap();
        let n_pos = 7.0;
        let n_neg = 3.0;
        let reconstructed = 1.0
            - (report.false_positive_rate * n_neg + report.false_negative_rate * n_pos)
                / report.n as f64;
        assert!((report.accuracy - reconstructed).abs() < 1e-12);
    }

    #[test]
    fn evaluate_empty_is_error() {
        assert!(evaluate(|_| Label::Positive, &[]).is_err());
    }

    #[test]
    fn dt_separable_gives_depth_one() {
        let positives = vec![pos("marker aa"), pos("marker bb"), pos("marker cc")];
        let negatives = vec![neg("aa dd"), neg("bb ee"), neg("cc ff")];
        let model = train_dt(&positives, &negatives, 4).unwrap();
        assert_eq!(model.depth(), 1);
        match &model.root {
            DTNode::Split { token, .. } => assert_eq!(token, "marker"),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(model.predict("marker zz"), Label::Positive);
        assert_eq!(model.predict("zz"), Label::Negative);
    }

    #[test]
    fn dt_identical_features_single_leaf() {
        let positives = vec![pos("same words"); 2];
        let negatives = vec![neg("same words"); 3];
        let model = train_dt(&positives, &negatives, 4).unwrap();
        match &model.root {
            DTNode::Leaf { label, purity } => {
                assert_eq!(*label, Label::Negative);
                assert!((purity - 0.6).abs() < 1e-12);
            }
            other => panic!("expected leaf, got {other:?}"),
        }
    }

    #[test]
    fn dt_beats_majority_baseline_on_training_data() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let pos_words = ["red", "green", "blue"];
        let neg_words = ["cold", "warm", "damp"];
        let shared = ["one", "two", "three", "four"];
        let mut data: Vec<LabeledExample> = Vec::new();
        for i in 0..50 {
            let positive = i % 2 == 0;
            let marker = if positive {
                pos_words.choose(&mut rng).unwrap()
            } else {
                neg_words.choose(&mut rng).unwrap()
            };
            let filler: Vec<&str> = (0..rng.gen_range(1..4))
                .map(|_| *shared.choose(&mut rng).unwrap())
                .collect();
            let text = format!("{} {}", marker, filler.join(" "));
            data.push(ex(
                &text,
                if positive {
                    Label::Positive
                } else {
                    Label::Negative
                },
            ));
        }
        let positives: Vec<LabeledExample> = data
            .iter()
            .filter(|e| e.label == Label::Positive)
            .cloned()
            .collect();
        let negatives: Vec<LabeledExample> = data
            .iter()
            .filter(|e| e.label == Label::Negative)
            .cloned()
            .collect();
        let baseline = positives.len().max(negatives.len()) as f64 / data.len() as f64;
        let model = train_dt(&positives, &negatives, 6).unwrap();
        let report = evaluate(|text| model.predict(text), &data).unwrap();
        assert!(
            report.accuracy >= baseline,
            "accuracy {} below baseline {baseline}",
            report.accuracy
        );
    }

    #[test]
    fn dt_training_is_deterministic() {
        let positives = vec![pos("aa bb"), pos("bb cc"), pos("aa cc")];
        let negatives = vec![neg("dd ee"), neg("ee ff")];
        let a = train_dt(&positives, &negatives, 5).unwrap();
        let b = train_dt(&positives, &negatives, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dt_rejects_bad_inputs() {
        assert!(train_dt(&[pos("x")], &[neg("y")], 0).is_err());
        assert!(train_dt(&[], &[neg("y")], 3).is_err());
    }

    #[test]
    fn top_features_ranking() {
        let positives = vec![
            pos("signal shared"),
            pos("signal shared"),
            pos("signal other"),
        ];
        let negatives = vec![neg("noise shared"), neg("noise shared"), neg("noise other")];
        let model = train_nb(&positives, &negatives, 0.5).unwrap();
        let ranked = top_features(&model, 10);
        assert_eq!(ranked[0].0, "signal");
        let symmetric: Vec<&(String, f64)> = ranked
            .iter()
            .filter(|(t, _)| t == "shared" || t == "other")
            .collect();
        for (_, llr) in &symmetric {
            assert!(llr.abs() < 1e-12);
        }
        assert_eq!(ranked.last().unwrap().0, "noise");
    }

    #[test]
    fn top_features_truncates_and_sorts() {
        let positives = vec![pos("t1 t2 t3 t4 t5"), pos("t1 t2 t6 t7")];
        let negatives = vec![neg("t8 t9 t10")];
        let model = train_nb(&positives, &negatives, 0.5).unwrap();
        let ranked = top_features(&model, 3);
        assert_eq!(ranked.len(), 3);
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        let all = top_features(&model, 1000);
        assert_eq!(all.len(), model.vocabulary_size());
    }

    #[test]
    fn model_round_trips_through_file() {
        let model = train_nb(
            &[pos("alpha bravo charlie"), pos("bravo delta")],
            &[neg("echo foxtrot"), neg("foxtrot golf hotel")],
            0.5,
        )
        .unwrap();
        let mut buf = Vec::new();
        save_model(&mut buf, &model).unwrap();
        let loaded = load_model(&buf[..]).unwrap();
        for text in ["alpha bravo", "echo", "hotel alpha", ""] {
            let (l1, p1) = predict_nb(&model, text);
            let (l2, p2) = predict_nb(&loaded, text);
            assert_eq!(l1, l2);
            assert!((p1 - p2).abs() < 1e-12);
        }
    }

    #[test]
    fn model_file_version_is_checked() {
        let model = train_nb(&[pos("xx")], &[neg("yy")], 0.5).unwrap();
        let mut buf = Vec::new();
        save_model(&mut buf, &model).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":99");
        assert!(matches!(
            load_model(text.as_bytes()),
            Err(ClassifierError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn likelihood_presence_absence_sum_to_one() {
        let model = train_nb(
            &[pos("alpha bravo"), pos("charlie")],
            &[neg("delta echo"), neg("alpha")],
            0.5,
        )
        .unwrap();
        for token in model.vocabulary().map(str::to_string).collect::<Vec<_>>() {
            for label in [Label::Positive, Label::Negative] {
                let present = model.token_log_likelihood(&token, label).unwrap().exp();
                let absent = model.token_log_absence(&token, label).unwrap().exp();
                assert!((present + absent - 1.0).abs() < 1e-9);
            }
        }
        let total = model.class_log_prior(Label::Positive).exp()
            + model.class_log_prior(Label::Negative).exp();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn read_labeled_reports_line_numbers() {
        let input = "{\"text\":\"ok one\",\"label\":\"positive\"}\nnot json\n";
        let err = read_labeled(input.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
