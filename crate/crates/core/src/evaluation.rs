//! Evaluation harness: confusion metrics, relevance technique comparison,
//! toxicity threshold sweeps, Likert collapsing and inter-rater agreement.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::relevance::{
    classify_relevance, lda_train, training_documents, RelevanceBackends, RelevanceConfig,
    RelevanceError, Strategy,
};

pub const DEFAULT_SWEEP_THRESHOLDS: [f64; 3] = [0.5, 0.7, 0.9];

/// A technique row is flagged incomplete when more than this share of the
/// labeled replies could not be classified.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("confusion counts are all zero")]
    EmptyConfusion,
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label lists are empty")]
    NoLabels,
    #[error("no scored items to sweep")]
    EmptySweep,
    #[error("thresholds must be ascending and inside (0, 1): {0:?}")]
    BadThresholds(Vec<f64>),
    #[error("invalid Likert record {comment_id}: {reason}")]
    Likert { comment_id: String, reason: String },
    #[error("invalid label: {0}")]
    Label(String),
    #[error("labeled reply {0} is not in the corpus")]
    UnknownReply(String),
    #[error("conflicting labels for reply {0}")]
    ConflictingLabels(String),
    #[error("{0}")]
    Relevance(#[from] RelevanceError),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions; precision reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
}

pub fn confusion_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Metrics, EvalError> {
    let total = tp + fp + fn_ + tn;
    if total == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: ratio(tp + tn, total),
        precision,
        recall,
        f1,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    })
}

/// Cohen's kappa for two binary raters. Perfect agreement, including the
/// degenerate case where chance agreement is 1, gives 1.
pub fn cohen_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<f64, EvalError> {
    if labels_a.len() != labels_b.len() {
        return Err(EvalError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let n = labels_a.len() as f64;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as f64;
    let pos_a = labels_a.iter().filter(|&&x| x).count() as f64 / n;
    let pos_b = labels_b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pos_a * pos_b + (1.0 - pos_a) * (1.0 - pos_b);
    if p_e == 1.0 {
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRecord {
    pub comment_id: String,
    ratings: [u8; 5],
}

impl LikertRecord {
    /// Five ratings on the 1 (not at all toxic) to 5 (very toxic) scale.
    pub fn new(comment_id: &str, ratings: &[u8]) -> Result<Self, EvalError> {
        let bad = |reason: String| EvalError::Likert {
            comment_id: comment_id.to_string(),
            reason,
        };
        let ratings: [u8; 5] = ratings
            .try_into()
            .map_err(|_| bad(format!("expected 5 ratings, got {}", ratings.len())))?;
        if let Some(r) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(bad(format!("rating {r} outside 1..=5")));
        }
        Ok(Self {
            comment_id: comment_id.to_string(),
            ratings,
        })
    }

    pub fn ratings(&self) -> &[u8; 5] {
        &self.ratings
    }
}

/// Toxic when the median rating is above 3 ("moderately toxic").
pub fn collapse_likert(record: &LikertRecord) -> bool {
    let mut r = record.ratings;
    r.sort_unstable();
    r[2] > 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportLayout {
    /// Technique, precision, recall, accuracy, F1.
    Relevance,
    /// Model @ threshold, accuracy, precision, recall, F1.
    Threshold,
}

impl ReportLayout {
    pub fn columns(self) -> [&'static str; 5] {
        match self {
            ReportLayout::Relevance => ["technique", "precision", "recall", "accuracy", "f1"],
            ReportLayout::Threshold => ["threshold", "accuracy", "precision", "recall", "f1"],
        }
    }

    fn headings(self) -> [&'static str; 5] {
        match self {
            ReportLayout::Relevance => ["Relevance Technique", "Precision", "Recall", "Accuracy", "F1"],
            ReportLayout::Threshold => ["Model @ Threshold", "Accuracy", "Precision", "Recall", "F1"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Items that could not be scored and are excluded from the counts.
    #[serde(default)]
    pub failures: u64,
    #[serde(default)]
    pub incomplete: bool,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl ReportRow {
    fn from_confusion(label: String, confusion: Confusion, failures: u64) -> Self {
        let evaluated = confusion.total() + failures;
        let incomplete =
            evaluated > 0 && failures as f64 > MAX_FAILURE_SHARE * evaluated as f64;
        let (m, mut flags) = match confusion_metrics(confusion.tp, confusion.fp, confusion.fn_, confusion.tn) {
            Ok(m) => {
                let mut flags = vec![];
                if m.precision_undefined {
                    flags.push("precision_undefined".to_string());
                }
                if m.recall_undefined {
                    flags.push("recall_undefined".to_string());
                }
                (m, flags)
            }
            Err(_) => (
                Metrics {
                    accuracy: 0.0,
                    precision: 0.0,
                    recall: 0.0,
                    f1: 0.0,
                    precision_undefined: true,
                    recall_undefined: true,
                },
                vec!["no_items".to_string()],
            ),
        };
        if incomplete {
            flags.push("incomplete".to_string());
        }
        ReportRow {
            label,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            confusion,
            failures,
            incomplete,
            flags,
        }
    }

    fn cells(&self, layout: ReportLayout) -> [String; 5] {
        let d = |x: f64| format!("{x:.2}");
        match layout {
            ReportLayout::Relevance => [
                self.label.clone(),
                d(self.precision),
                d(self.recall),
                d(self.accuracy),
                d(self.f1),
            ],
            ReportLayout::Threshold => [
                self.label.clone(),
                format!("{:.0}%", self.accuracy * 100.0),
                d(self.precision),
                d(self.recall),
                d(self.f1),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub layout: ReportLayout,
    pub columns: Vec<String>,
    pub corpus_id: String,
    pub generated_at: DateTime<Utc>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    fn new(layout: ReportLayout, corpus_id: &str, generated_at: DateTime<Utc>, rows: Vec<ReportRow>) -> Self {
        Self {
            layout,
            columns: layout.columns().iter().map(|s| s.to_string()).collect(),
            corpus_id: corpus_id.to_string(),
            generated_at,
            rows,
        }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Aligned text table with a trailing note for flagged rows.
    pub fn render_table(&self) -> String {
        let headings = self.layout.headings();
        let body: Vec<[String; 5]> = self.rows.iter().map(|r| r.cells(self.layout)).collect();
        let mut widths = headings.map(str::len);
        for cells in &body {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: [&str; 5], out: &mut String| {
            let mut parts = Vec::with_capacity(5);
            for (i, c) in cells.iter().enumerate() {
                if i == 0 {
                    parts.push(format!("{c:<w$}", w = widths[i]));
                } else {
                    parts.push(format!("{c:>w$}", w = widths[i]));
                }
            }
            out.push_str(parts.join(" | ").trim_end());
            out.push('\n');
        };
        line(headings, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("-|-"));
        out.push('\n');
        for cells in &body {
            line(
                [&cells[0], &cells[1], &cells[2], &cells[3], &cells[4]],
                &mut out,
            );
        }
        for r in self.rows.iter().filter(|r| !r.flags.is_empty()) {
            let _ = writeln!(out, "note: {}: {}", r.label, r.flags.join(", "));
        }
        out
    }
}

/// One row per threshold; an item is predicted toxic when its score is at or
/// above the threshold.
pub fn threshold_sweep(
    attribute: &str,
    scored: &[(f64, bool)],
    thresholds: &[f64],
    generated_at: DateTime<Utc>,
) -> Result<EvalReport, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let ascending = thresholds.windows(2).all(|w| w[0] < w[1]);
    let in_range = thresholds.iter().all(|t| *t > 0.0 && *t < 1.0);
    if thresholds.is_empty() || !ascending || !in_range {
        return Err(EvalError::BadThresholds(thresholds.to_vec()));
    }
    let rows = thresholds
        .iter()
        .map(|&t| {
            let mut c = Confusion::default();
            for &(score, actual) in scored {
                c.add(score >= t, actual);
            }
            ReportRow::from_confusion(format!("{attribute} @ {t}"), c, 0)
        })
        .collect();
    Ok(EvalReport::new(ReportLayout::Threshold, attribute, generated_at, rows))
}

pub fn toxicity_threshold_sweep(
    scored: &[(f64, bool)],
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    threshold_sweep("TOXICITY", scored, thresholds, Utc::now())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub reply_id: String,
    pub relevant: Option<bool>,
    pub toxic: Option<bool>,
    pub rater_id: String,
}

fn parse_flag(field: &str, value: &str) -> Result<Option<bool>, EvalError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "no" | "n" => Ok(Some(false)),
        other => Err(EvalError::Label(format!("{field}: cannot read \"{other}\" as a boolean"))),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, EvalError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

fn expect_headers(
    reader: &mut csv::Reader<std::fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<(), EvalError> {
    let headers = reader.headers().map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(EvalError::Label(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn rows(
    reader: &mut csv::Reader<std::fs::File>,
    path: &Path,
) -> Result<Vec<csv::StringRecord>, EvalError> {
    reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// Reads `reply_id,relevant,toxic,rater_id`.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthLabel>, EvalError> {
    let mut rdr = open_csv(path)?;
    expect_headers(&mut rdr, path, &["reply_id", "relevant", "toxic", "rater_id"])?;
    rows(&mut rdr, path)?
        .iter()
        .map(|rec| {
            let label = GroundTruthLabel {
                reply_id: rec[0].to_string(),
                relevant: parse_flag("relevant", &rec[1])?,
                toxic: parse_flag("toxic", &rec[2])?,
                rater_id: rec[3].to_string(),
            };
            if label.reply_id.is_empty() {
                return Err(EvalError::Label("empty reply_id".into()));
            }
            if label.relevant.is_none() && label.toxic.is_none() {
                return Err(EvalError::Label(format!(
                    "label for {} has neither relevant nor toxic",
                    label.reply_id
                )));
            }
            Ok(label)
        })
        .collect()
}

/// Reads `comment_id,r1,r2,r3,r4,r5`.
pub fn read_likert(path: &Path) -> Result<Vec<LikertRecord>, EvalError> {
    let mut rdr = open_csv(path)?;
    expect_headers(&mut rdr, path, &["comment_id", "r1", "r2", "r3", "r4", "r5"])?;
    rows(&mut rdr, path)?
        .iter()
        .map(|rec| {
            let ratings: Vec<u8> = (1..6)
                .map(|i| {
                    rec[i].parse::<u8>().map_err(|_| EvalError::Likert {
                        comment_id: rec[0].to_string(),
                        reason: format!("cannot read rating \"{}\"", &rec[i]),
                    })
                })
                .collect::<Result<_, _>>()?;
            LikertRecord::new(&rec[0], &ratings)
        })
        .collect()
}

/// Reads `comment_id,score`.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut rdr = open_csv(path)?;
    expect_headers(&mut rdr, path, &["comment_id", "score"])?;
    rows(&mut rdr, path)?
        .iter()
        .map(|rec| {
            let s: f64 = rec[1]
                .parse()
                .map_err(|_| EvalError::Label(format!("bad score \"{}\" for {}", &rec[1], &rec[0])))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(EvalError::Label(format!("score {s} for {} outside [0, 1]", &rec[0])));
            }
            Ok((rec[0].to_string(), s))
        })
        .collect()
}

/// Pairs scores with collapsed Likert labels by comment id; comments missing a
/// score are skipped.
pub fn join_scores_with_likert(
    scores: &BTreeMap<String, f64>,
    likert: &[LikertRecord],
) -> Vec<(f64, bool)> {
    likert
        .iter()
        .filter_map(|r| scores.get(&r.comment_id).map(|&s| (s, collapse_likert(r))))
        .collect()
}

/// One relevance label per reply. Duplicate labels must agree.
pub fn relevance_truth(labels: &[GroundTruthLabel]) -> Result<BTreeMap<String, bool>, EvalError> {
    let mut out = BTreeMap::new();
    for l in labels {
        let Some(rel) = l.relevant else { continue };
        if let Some(prev) = out.insert(l.reply_id.clone(), rel) {
            if prev != rel {
                return Err(EvalError::ConflictingLabels(l.reply_id.clone()));
            }
        }
    }
    Ok(out)
}

/// Pairs two raters' labels on the replies both of them labeled.
pub fn paired_labels(
    labels: &[GroundTruthLabel],
    rater_a: &str,
    rater_b: &str,
    field: LabelField,
) -> (Vec<bool>, Vec<bool>) {
    let pick = |rater: &str| -> BTreeMap<&str, bool> {
        labels
            .iter()
            .filter(|l| l.rater_id == rater)
            .filter_map(|l| field.get(l).map(|v| (l.reply_id.as_str(), v)))
            .collect()
    };
    let a = pick(rater_a);
    let b = pick(rater_b);
    a.iter()
        .filter_map(|(id, va)| b.get(id).map(|vb| (*va, *vb)))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelField {
    Relevant,
    Toxic,
}

impl LabelField {
    fn get(self, label: &GroundTruthLabel) -> Option<bool> {
        match self {
            LabelField::Relevant => label.relevant,
            LabelField::Toxic => label.toxic,
        }
    }
}

/// Runs keyword, LDA and LLM relevance over the labeled replies and reports
/// one row per technique in that order. When no topic model is supplied one
/// is trained on the corpus.
pub fn compare_relevance_techniques(
    corpus: &Corpus,
    labels: &[GroundTruthLabel],
    backends: &RelevanceBackends,
    config: &RelevanceConfig,
    generated_at: DateTime<Utc>,
) -> Result<EvalReport, EvalError> {
    let truth = relevance_truth(labels)?;
    for id in truth.keys() {
        if corpus.reply(id).is_none() {
            return Err(EvalError::UnknownReply(id.clone()));
        }
    }
    let mut backends = backends.clone();
    if backends.topic_model.is_none() {
        backends.topic_model = Some(std::sync::Arc::new(lda_train(&training_documents(corpus), config)?));
    }

    let mut rows = Vec::with_capacity(3);
    for strategy in Strategy::ALL {
        let mut confusion = Confusion::default();
        let mut failures = 0u64;
        for (id, &actual) in &truth {
            let reply = corpus.reply(id).expect("checked above");
            let Some(article) = corpus.article_for_reply(reply) else {
                failures += 1;
                continue;
            };
            match classify_relevance(article, reply.content(), strategy, &backends, config) {
                Ok(v) => confusion.add(v.relevant, actual),
                Err(RelevanceError::Inapplicable(_)) if strategy == Strategy::Keyword => {
                    confusion.add(false, actual)
                }
                Err(RelevanceError::Config(m)) => return Err(RelevanceError::Config(m).into()),
                Err(_) => failures += 1,
            }
        }
        rows.push(ReportRow::from_confusion(
            strategy.as_str().to_string(),
            confusion,
            failures,
        ));
    }
    let corpus_id = corpus
        .metadata()
        .get("name")
        .map(String::as_str)
        .unwrap_or("unnamed");
    Ok(EvalReport::new(ReportLayout::Relevance, corpus_id, generated_at, rows))
}
