//! Combines toxicity and relevance into the four reply categories and builds
//! the feed views shown to the journalist.
//!
//! | relevant | toxic | category |
//! |----------|-------|----------|
//! | yes      | no    | C1       |
//! | no       | no    | C2       |
//! | yes      | yes   | C3       |
//! | no       | yes   | C4       |
//!
//! A reply whose classification failed is `PENDING` and is only reachable
//! from the hidden page.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::corpus::{Article, Post, ReplyContent};
use crate::relevance::{
    classify_relevance, render_prompt, RawRelevance, RelevanceBackends, RelevanceConfig,
    RelevanceError, RelevanceScore, Strategy,
};
use crate::toxicity::{is_toxic, score_toxicity, ToxicityConfig, ToxicityScore, ToxicityScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    C1,
    C2,
    C3,
    C4,
    #[serde(rename = "PENDING")]
    Pending,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::C1,
        Category::C2,
        Category::C3,
        Category::C4,
        Category::Pending,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::C1 => "C1",
            Category::C2 => "C2",
            Category::C3 => "C3",
            Category::C4 => "C4",
            Category::Pending => "PENDING",
        }
    }

    pub fn is_harmless(self) -> bool {
        matches!(self, Category::C1 | Category::C2)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn categorize(toxic: bool, relevant: bool) -> Category {
    match (relevant, toxic) {
        (true, false) => Category::C1,
        (false, false) => Category::C2,
        (true, true) => Category::C3,
        (false, true) => Category::C4,
    }
}

/// A classifier output or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Scored(T),
    Failed { reason: String },
}

impl<T> Outcome<T> {
    pub fn scored(&self) -> Option<&T> {
        match self {
            Outcome::Scored(t) => Some(t),
            Outcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub reply_id: String,
    pub toxicity: Outcome<ToxicityScore>,
    pub relevance: Outcome<RelevanceScore>,
    pub toxic: Option<bool>,
    pub relevant: Option<bool>,
    pub category: Category,
    pub pipeline_version: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ClassificationResult {
    /// Derives the category from the two verdicts; either one missing gives
    /// `PENDING`.
    pub fn new(
        reply_id: &str,
        toxicity: Outcome<ToxicityScore>,
        toxic: Option<bool>,
        relevance: Outcome<RelevanceScore>,
        relevant: Option<bool>,
        pipeline_version: &str,
        warnings: Vec<String>,
    ) -> Self {
        let category = match (toxic, relevant) {
            (Some(t), Some(r)) => categorize(t, r),
            _ => Category::Pending,
        };
        Self {
            reply_id: reply_id.to_string(),
            toxicity,
            relevance,
            toxic,
            relevant,
            category,
            pipeline_version: pipeline_version.to_string(),
            warnings,
        }
    }

    /// Placeholder for a reply nobody has classified yet.
    pub fn unclassified(reply_id: &str, pipeline_version: &str) -> Self {
        let failed = || "not classified yet".to_string();
        Self::new(
            reply_id,
            Outcome::Failed { reason: failed() },
            None,
            Outcome::Failed { reason: failed() },
            None,
            pipeline_version,
            vec![],
        )
    }

    pub fn is_consistent(&self) -> bool {
        let expected = match (self.toxic, self.relevant) {
            (Some(t), Some(r)) => categorize(t, r),
            _ => Category::Pending,
        };
        expected == self.category
            && self.toxic.is_some() == self.toxicity.scored().is_some()
            && self.relevant.is_some() == self.relevance.scored().is_some()
    }
}

/// Settings that influence classification output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriageConfig {
    pub strategy: Option<Strategy>,
    pub toxicity: ToxicityConfig,
    pub relevance: RelevanceConfig,
}

impl TriageConfig {
    pub fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or(Strategy::Llm)
    }
}

/// Backends used by [`classify_reply`].
#[derive(Clone)]
pub struct Classifiers {
    pub toxicity: Arc<dyn ToxicityScorer>,
    pub relevance: RelevanceBackends,
    pub clock: Arc<dyn Clock>,
}

impl Classifiers {
    pub fn relevance_model_id(&self, config: &TriageConfig) -> Result<String, RelevanceError> {
        self.relevance.model_id(config.strategy(), &config.relevance)
    }

    /// Identifies everything that can change a result: thresholds, strategy
    /// settings, few-shot assets, prompt template and the backend models.
    pub fn pipeline_version(&self, config: &TriageConfig) -> Result<String, RelevanceError> {
        let material = serde_json::json!({
            "threshold": config.toxicity.threshold,
            "attribute": config.toxicity.attribute,
            "toxicity_model": self.toxicity.model_id(),
            "toxicity_fingerprint": self.toxicity.fingerprint(),
            "strategy": config.strategy(),
            "relevance": config.relevance,
            "relevance_model": self.relevance_model_id(config)?,
            "prompt": render_prompt("", ""),
        });
        let digest = Sha256::digest(material.to_string().as_bytes());
        let short: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        Ok(format!("triage-1/{short}"))
    }
}

/// Classifies one reply. Never fails: classifier errors become `PENDING`.
/// Only the reply's id and text are visible here.
pub fn classify_reply(
    reply: ReplyContent<'_>,
    article: Option<&Article>,
    deps: &Classifiers,
    config: &TriageConfig,
    pipeline_version: &str,
) -> ClassificationResult {
    let mut warnings = Vec::new();

    let (toxicity, toxic) =
        match score_toxicity(reply.text, deps.toxicity.as_ref(), &config.toxicity, deps.clock.as_ref()) {
            Ok(score) => {
                let t = is_toxic(&score, &config.toxicity);
                (Outcome::Scored(score), Some(t))
            }
            Err(e) => (
                Outcome::Failed {
                    reason: e.to_string(),
                },
                None,
            ),
        };

    let strategy = config.strategy();
    let (relevance, relevant) = match article {
        None => (
            Outcome::Failed {
                reason: "strategy not applicable: post has no resolvable article".into(),
            },
            None,
        ),
        Some(article) => {
            match classify_relevance(article, reply, strategy, &deps.relevance, &config.relevance) {
                Ok(v) => {
                    if v.out_of_vocabulary {
                        warnings.push("reply has no in-vocabulary tokens".to_string());
                    }
                    (Outcome::Scored(v.score), Some(v.relevant))
                }
                Err(RelevanceError::Inapplicable(why)) if strategy == Strategy::Keyword => {
                    warnings.push(format!("keyword strategy inapplicable, treated as irrelevant: {why}"));
                    (
                        Outcome::Scored(RelevanceScore {
                            raw: RawRelevance::Keyword { similarity: 0.0 },
                            model_id: crate::relevance::KEYWORD_MODEL_ID.to_string(),
                        }),
                        Some(false),
                    )
                }
                Err(e) => (
                    Outcome::Failed {
                        reason: e.to_string(),
                    },
                    None,
                ),
            }
        }
    };

    ClassificationResult::new(
        reply.id,
        toxicity,
        toxic,
        relevance,
        relevant,
        pipeline_version,
        warnings,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortMode {
    #[default]
    Grouped,
    Chronological,
}

impl FromStr for SortMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grouped" => Ok(SortMode::Grouped),
            "chronological" => Ok(SortMode::Chronological),
            other => Err(format!("unknown sort mode \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedView {
    pub post_id: String,
    /// C1 and C2.
    pub harmless: Vec<String>,
    /// C3.
    pub hidden_relevant: Vec<String>,
    /// C4.
    pub hidden_irrelevant: Vec<String>,
    pub pending: Vec<String>,
    pub sort_mode: SortMode,
}

impl FeedView {
    /// The hidden page: C3, then C4 and pending once the toggle is on.
    pub fn hidden(&self, include_irrelevant_toxic: bool) -> Vec<String> {
        let mut out = self.hidden_relevant.clone();
        if include_irrelevant_toxic {
            out.extend(self.hidden_irrelevant.iter().cloned());
            out.extend(self.pending.iter().cloned());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.harmless.len() + self.hidden_relevant.len() + self.hidden_irrelevant.len() + self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("results do not cover post {post_id}: missing {missing:?}, extra {extra:?}")]
pub struct FeedError {
    pub post_id: String,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

/// `results` must cover exactly the post's replies. Ordering within each
/// list follows `post.reply_ids` (chronological, ties by id).
pub fn build_feed(
    post: &Post,
    results: &[ClassificationResult],
    sort_mode: SortMode,
) -> Result<FeedView, FeedError> {
    let by_id: BTreeMap<&str, Category> = results
        .iter()
        .map(|r| (r.reply_id.as_str(), r.category))
        .collect();
    let expected: BTreeSet<&str> = post.reply_ids.iter().map(String::as_str).collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let extra: Vec<String> = by_id
        .keys()
        .filter(|id| !expected.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() || by_id.len() != results.len() {
        return Err(FeedError {
            post_id: post.id.clone(),
            missing,
            extra,
        });
    }

    let ids_in = |cats: &[Category]| -> Vec<String> {
        post.reply_ids
            .iter()
            .filter(|id| cats.contains(&by_id[id.as_str()]))
            .cloned()
            .collect()
    };
    let harmless = match sort_mode {
        SortMode::Grouped => {
            let mut v = ids_in(&[Category::C1]);
            v.extend(ids_in(&[Category::C2]));
            v
        }
        SortMode::Chronological => ids_in(&[Category::C1, Category::C2]),
    };
    Ok(FeedView {
        post_id: post.id.clone(),
        harmless,
        hidden_relevant: ids_in(&[Category::C3]),
        hidden_irrelevant: ids_in(&[Category::C4]),
        pending: ids_in(&[Category::Pending]),
        sort_mode,
    })
}
