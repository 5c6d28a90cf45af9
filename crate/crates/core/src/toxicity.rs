//! Toxicity scoring: a Perspective-compatible HTTP client, an offline
//! weighted-lexicon stub, and the binary threshold rule.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::text;

const STUB_LEXICON_V1: &str = include_str!("../assets/stub_lexicon_v1.json");

pub const API_KEY_ENV: &str = "TOXICITY_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScore {
    pub value: f64,
    pub model_id: String,
    pub scored_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToxicityConfig {
    pub threshold: f64,
    pub attribute: String,
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
}

impl Default for ToxicityConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            attribute: "TOXICITY".into(),
            max_retries: 3,
            timeout_secs: 10.0,
            backoff_base_ms: 250,
        }
    }
}

impl ToxicityConfig {
    pub fn validate(&self) -> Result<(), ToxicityError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ToxicityError::Config(format!(
                "threshold must lie strictly between 0 and 1, got {}",
                self.threshold
            )));
        }
        if self.attribute.is_empty() {
            return Err(ToxicityError::Config("attribute must be non-empty".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(ToxicityError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToxicityError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("invalid toxicity configuration: {0}")]
    Config(String),
    #[error("scoring failed after {attempts} attempt(s): {reason}")]
    ScoringFailed { attempts: u32, reason: String },
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    /// Timeouts, rate limiting and server errors; worth retrying.
    #[error("transient: {0}")]
    Transient(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Fatal(String),
}

/// A toxicity backend. Implementations must be callable from many threads.
pub trait ToxicityScorer: Send + Sync {
    fn model_id(&self) -> String;
    fn analyze(&self, text: &str) -> Result<f64, ScorerError>;

    /// Changes whenever the scorer's behaviour changes; defaults to the model id.
    fn fingerprint(&self) -> String {
        self.model_id()
    }
}

impl<T: ToxicityScorer + ?Sized> ToxicityScorer for std::sync::Arc<T> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn analyze(&self, text: &str) -> Result<f64, ScorerError> {
        (**self).analyze(text)
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

pub fn score_toxicity(
    text: &str,
    scorer: &dyn ToxicityScorer,
    config: &ToxicityConfig,
    clock: &dyn Clock,
) -> Result<ToxicityScore, ToxicityError> {
    if text.trim().is_empty() {
        return Err(ToxicityError::EmptyText);
    }
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match scorer.analyze(text) {
            Ok(value) if (0.0..=1.0).contains(&value) => {
                return Ok(ToxicityScore {
                    value,
                    model_id: scorer.model_id(),
                    scored_at: clock.now(),
                })
            }
            Ok(value) => {
                return Err(ToxicityError::ScoringFailed {
                    attempts: attempt,
                    reason: format!("score {value} outside [0, 1]"),
                })
            }
            Err(ScorerError::Transient(reason)) => {
                if attempt > config.max_retries {
                    return Err(ToxicityError::ScoringFailed {
                        attempts: attempt,
                        reason,
                    });
                }
                let wait = config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            Err(e) => {
                return Err(ToxicityError::ScoringFailed {
                    attempts: attempt,
                    reason: e.to_string(),
                })
            }
        }
    }
}

/// Inclusive: a score equal to the threshold is toxic.
pub fn is_toxic(score: &ToxicityScore, config: &ToxicityConfig) -> bool {
    score.value >= config.threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub id: String,
    pub terms: BTreeMap<String, f64>,
}

/// Offline scorer: sums the weights of lexicon terms found in the text
/// (once per occurrence) and clamps the total to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    lexicon: Lexicon,
}

impl LexiconScorer {
    pub fn new(lexicon: Lexicon) -> Self {
        let terms = lexicon
            .terms
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .collect();
        Self {
            lexicon: Lexicon {
                id: lexicon.id,
                terms,
            },
        }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    /// The lexicon bundled with the crate (`stub-lexicon-v1`).
    pub fn bundled() -> Self {
        Self::from_json(STUB_LEXICON_V1).expect("bundled lexicon parses")
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn score(&self, text: &str) -> f64 {
        let total: f64 = text::words(text)
            .iter()
            .filter_map(|w| self.lexicon.terms.get(w))
            .sum();
        total.clamp(0.0, 1.0)
    }
}

impl ToxicityScorer for LexiconScorer {
    fn model_id(&self) -> String {
        self.lexicon.id.clone()
    }

    fn analyze(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(self.score(text))
    }

    fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.lexicon).expect("lexicon serializes");
        let digest = Sha256::digest(json.as_bytes());
        let short: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("{}#{short}", self.lexicon.id)
    }
}

/// Client for the `comments:analyze` endpoint.
pub struct PerspectiveScorer {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    attribute: String,
}

impl PerspectiveScorer {
    /// `base_url` is e.g. `https://commentanalyzer.googleapis.com/v1alpha1`;
    /// requests go to `{base_url}/comments:analyze`.
    pub fn new(base_url: &str, api_key: Option<String>, config: &ToxicityConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout()).build();
        Self {
            agent,
            endpoint: format!("{}/comments:analyze", base_url.trim_end_matches('/')),
            api_key,
            attribute: config.attribute.clone(),
        }
    }

    pub fn from_env(base_url: &str, config: &ToxicityConfig) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), config)
    }

    pub fn request_body(&self, text: &str) -> serde_json::Value {
        let mut attrs = serde_json::Map::new();
        attrs.insert(self.attribute.clone(), serde_json::json!({}));
        serde_json::json!({
            "comment": { "text": text },
            "requestedAttributes": attrs,
        })
    }
}

/// Extracts `attributeScores.<attribute>.summaryScore.value`.
pub fn parse_analyze_response(body: &str, attribute: &str) -> Result<f64, ScorerError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ScorerError::Malformed(e.to_string()))?;
    v.get("attributeScores")
        .and_then(|a| a.get(attribute))
        .and_then(|a| a.get("summaryScore"))
        .and_then(|s| s.get("value"))
        .and_then(|x| x.as_f64())
        .ok_or_else(|| {
            ScorerError::Malformed(format!(
                "missing attributeScores.{attribute}.summaryScore.value"
            ))
        })
}

impl ToxicityScorer for PerspectiveScorer {
    fn model_id(&self) -> String {
        format!("perspective:{}", self.attribute)
    }

    fn analyze(&self, text: &str) -> Result<f64, ScorerError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.query("key", key);
        }
        let body = self.request_body(text).to_string();
        let resp = req
            .set("Content-Type", "application/json")
            .send_string(&body);
        match resp {
            Ok(r) => {
                let body = r
                    .into_string()
                    .map_err(|e| ScorerError::Transient(e.to_string()))?;
                parse_analyze_response(&body, &self.attribute)
            }
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                if code == 429 || code >= 500 {
                    Err(ScorerError::Transient(format!("HTTP {code}: {detail}")))
                } else {
                    Err(ScorerError::Fatal(format!("HTTP {code}: {detail}")))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(ScorerError::Transient(t.to_string())),
        }
    }
}
