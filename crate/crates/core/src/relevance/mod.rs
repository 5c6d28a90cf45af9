//! Whether a reply addresses the article its post links to. Three
//! interchangeable strategies: title keywords, LDA topic similarity and
//! few-shot LLM rating.

mod keyword;
mod lda;
mod llm;

pub use keyword::{relevance_keyword, KEYWORD_MODEL_ID};
pub use lda::{cosine_similarity, lda_train, relevance_lda, TopicModel};
pub use llm::{
    build_request, parse_relevance, relevance_llm, render_prompt, BackendError, ChatBackend,
    ChatMessage, ChatRequest, FewShotExample, FewShotSet, OpenAiChatBackend, ReplayBackend,
    API_KEY_ENV, REASK_INSTRUCTION,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, ReplyContent};
use crate::text::content_tokens;

/// Lowest LLM rating that still counts as relevant under the default rule.
pub const LLM_RELEVANT_FROM: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Keyword,
    Lda,
    Llm,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Keyword, Strategy::Lda, Strategy::Llm];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Keyword => "keyword",
            Strategy::Lda => "lda",
            Strategy::Llm => "llm",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = RelevanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keyword" => Ok(Strategy::Keyword),
            "lda" => Ok(Strategy::Lda),
            "llm" => Ok(Strategy::Llm),
            other => Err(RelevanceError::Config(format!(
                "unknown relevance strategy \"{other}\" (expected keyword, lda or llm)"
            ))),
        }
    }
}

/// Strategy-specific raw score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy_id", rename_all = "lowercase")]
pub enum RawRelevance {
    /// Fraction of title tokens found in the reply.
    Keyword { similarity: f64 },
    /// Cosine similarity of article and reply topic mixtures.
    Lda { similarity: f64 },
    /// Rating on the 1 to 5 scale.
    Llm { rating: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    #[serde(flatten)]
    pub raw: RawRelevance,
    pub model_id: String,
}

impl RelevanceScore {
    pub fn strategy(&self) -> Strategy {
        match self.raw {
            RawRelevance::Keyword { .. } => Strategy::Keyword,
            RawRelevance::Lda { .. } => Strategy::Lda,
            RawRelevance::Llm { .. } => Strategy::Llm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceVerdict {
    pub score: RelevanceScore,
    pub relevant: bool,
    /// Set when the reply had no token known to the topic model.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub out_of_vocabulary: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelevanceError {
    #[error("strategy not applicable: {0}")]
    Inapplicable(String),
    #[error("strategy failed: {0}")]
    StrategyFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("topic model training failed: {0}")]
    Training(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceConfig {
    pub llm_threshold: u8,
    pub llm_model: String,
    /// Article text sent to the LLM is cut to this many characters.
    pub llm_article_chars: usize,
    pub keyword_min_overlap: usize,
    pub lda_topics: usize,
    /// Defaults to `50 / lda_topics` when unset.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_iterations: usize,
    pub lda_fold_in_iterations: usize,
    pub lda_similarity_threshold: f64,
    pub seed: u64,
    pub fewshot: FewShotSet,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        Self {
            llm_threshold: LLM_RELEVANT_FROM,
            llm_model: "gpt-3.5-turbo".into(),
            llm_article_chars: 6000,
            keyword_min_overlap: 1,
            lda_topics: 20,
            lda_alpha: None,
            lda_beta: 0.01,
            lda_iterations: 1000,
            lda_fold_in_iterations: 100,
            lda_similarity_threshold: 0.3,
            seed: 42,
            fewshot: FewShotSet::bundled(),
        }
    }
}

impl RelevanceConfig {
    pub fn alpha(&self) -> f64 {
        self.lda_alpha
            .unwrap_or(50.0 / self.lda_topics.max(1) as f64)
    }

    pub fn validate(&self) -> Result<(), RelevanceError> {
        let bad = |m: String| Err(RelevanceError::Config(m));
        if !(1..=5).contains(&self.llm_threshold) {
            return bad(format!("llm_threshold must be in 1..=5, got {}", self.llm_threshold));
        }
        if self.keyword_min_overlap < 1 {
            return bad("keyword_min_overlap must be at least 1".into());
        }
        if self.lda_topics < 2 {
            return bad(format!("lda_topics must be at least 2, got {}", self.lda_topics));
        }
        if !is_positive(self.alpha()) || !is_positive(self.lda_beta) {
            return bad("Dirichlet hyperparameters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lda_similarity_threshold) {
            return bad("lda_similarity_threshold must be in [0, 1]".into());
        }
        self.fewshot.validate()
    }
}

/// False for NaN.
pub(crate) fn is_positive(x: f64) -> bool {
    x > 0.0
}

/// Backends the strategies may need; only the selected one must be present.
#[derive(Clone, Default)]
pub struct RelevanceBackends {
    pub topic_model: Option<Arc<TopicModel>>,
    pub chat: Option<Arc<dyn ChatBackend>>,
}

impl RelevanceBackends {
    /// Model id recorded in results (and cache keys) for `strategy`.
    pub fn model_id(
        &self,
        strategy: Strategy,
        config: &RelevanceConfig,
    ) -> Result<String, RelevanceError> {
        match strategy {
            Strategy::Keyword => Ok(KEYWORD_MODEL_ID.to_string()),
            Strategy::Lda => self
                .topic_model
                .as_ref()
                .map(|m| m.model_id())
                .ok_or_else(|| RelevanceError::Config("lda strategy needs a trained topic model".into())),
            Strategy::Llm => self
                .chat
                .as_ref()
                .map(|c| llm::llm_model_id(c.as_ref(), config))
                .ok_or_else(|| RelevanceError::Config("llm strategy needs a chat backend".into())),
        }
    }
}

/// Token lists used to fit a topic model on a corpus: every article body,
/// then every reply, each in id order. Empty documents are left out.
pub fn training_documents(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .articles()
        .map(|a| content_tokens(&a.body))
        .chain(corpus.replies().map(|r| content_tokens(&r.text)))
        .filter(|d| !d.is_empty())
        .collect()
}

/// Runs exactly one strategy.
pub fn classify_relevance(
    article: &Article,
    reply: ReplyContent<'_>,
    strategy: Strategy,
    backends: &RelevanceBackends,
    config: &RelevanceConfig,
) -> Result<RelevanceVerdict, RelevanceError> {
    match strategy {
        Strategy::Keyword => relevance_keyword(article, reply, config),
        Strategy::Lda => {
            let model = backends.topic_model.as_deref().ok_or_else(|| {
                RelevanceError::Config("lda strategy needs a trained topic model".into())
            })?;
            relevance_lda(model, article, reply, config)
        }
        Strategy::Llm => {
            let chat = backends
                .chat
                .as_deref()
                .ok_or_else(|| RelevanceError::Config("llm strategy needs a chat backend".into()))?;
            relevance_llm(article, reply, chat, config)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);

    impl ChatBackend for Fixed {
        fn model_id(&self) -> String {
            "fixed".into()
        }
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            Ok(self.0.to_string())
        }
    }

    fn climate() -> Article {
        Article {
            id: "a".into(),
            url: "u".into(),
            title: "Climate bill passes Senate".into(),
            body: "The Senate passed the climate bill on Tuesday.".into(),
            extraction_failed: false,
        }
    }

    #[test]
    fn dispatch_records_strategy() {
        let reply = ReplyContent {
            id: "r",
            text: "The senate climate bill is weak",
        };
        let v = classify_relevance(
            &climate(),
            reply,
            Strategy::Keyword,
            &RelevanceBackends::default(),
            &RelevanceConfig::default(),
        )
        .unwrap();
        assert!(v.relevant);
        assert_eq!(v.score.strategy(), Strategy::Keyword);

        let backends = RelevanceBackends {
            chat: Some(Arc::new(Fixed(r#"{"relevance":5}"#))),
            ..Default::default()
        };
        let v = classify_relevance(
            &climate(),
            reply,
            Strategy::Llm,
            &backends,
            &RelevanceConfig::default(),
        )
        .unwrap();
        assert!(v.relevant);
        assert_eq!(v.score.strategy(), Strategy::Llm);
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        assert!(matches!(
            "bm25".parse::<Strategy>(),
            Err(RelevanceError::Config(_))
        ));
    }

    #[test]
    fn missing_backend_is_a_config_error() {
        let reply = ReplyContent { id: "r", text: "x" };
        let err = classify_relevance(
            &climate(),
            reply,
            Strategy::Lda,
            &RelevanceBackends::default(),
            &RelevanceConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RelevanceError::Config(_)));
    }

    #[test]
    fn score_serializes_with_strategy_id() {
        let s = RelevanceScore {
            raw: RawRelevance::Llm { rating: 4 },
            model_id: "m".into(),
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"strategy_id":"llm","rating":4,"model_id":"m"}"#);
        assert_eq!(serde_json::from_str::<RelevanceScore>(&json).unwrap(), s);
    }

    #[test]
    fn config_defaults_validate() {
        let c = RelevanceConfig::default();
        c.validate().unwrap();
        assert_eq!(c.alpha(), 2.5);
        let mut bad = c.clone();
        bad.llm_threshold = 6;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.lda_topics = 1;
        assert!(bad.validate().is_err());
    }
}
