//! Service configuration file (TOML) and backend construction.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::Corpus;
use crate::relevance::{
    lda_train, training_documents, ChatBackend, FewShotSet, OpenAiChatBackend, RelevanceBackends,
    RelevanceConfig, RelevanceError, ReplayBackend, Strategy,
};
use crate::toxicity::{LexiconScorer, PerspectiveScorer, ToxicityConfig, ToxicityScorer};
use crate::triage::{Classifiers, TriageConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToxicityBackendKind {
    #[default]
    Stub,
    Remote,
}

impl FromStr for ToxicityBackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(Self::Stub),
            "remote" => Ok(Self::Remote),
            o => Err(format!("unknown toxicity backend \"{o}\" (expected stub or remote)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    #[default]
    Replay,
    Http,
}

impl FromStr for LlmBackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replay" => Ok(Self::Replay),
            "http" => Ok(Self::Http),
            o => Err(format!("unknown llm backend \"{o}\" (expected replay or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub toxicity: ToxicityBackendKind,
    pub toxicity_base_url: String,
    /// Lexicon JSON for the stub scorer; the bundled one when unset.
    pub lexicon: Option<PathBuf>,
    pub llm: LlmBackendKind,
    pub llm_base_url: String,
    pub replay_dir: Option<PathBuf>,
    /// Few-shot exemplar JSON; the bundled set when unset.
    pub fewshot: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            toxicity: ToxicityBackendKind::Stub,
            toxicity_base_url: "https://commentanalyzer.googleapis.com/v1alpha1".into(),
            lexicon: None,
            llm: LlmBackendKind::Replay,
            llm_base_url: "https://api.openai.com/v1".into(),
            replay_dir: None,
            fewshot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub schema_version: u32,
    pub listen: String,
    pub corpus: Option<PathBuf>,
    pub cache: PathBuf,
    pub reports_dir: Option<PathBuf>,
    pub max_inflight: usize,
    pub strategy: Strategy,
    pub backends: BackendConfig,
    pub toxicity: ToxicityConfig,
    pub relevance: RelevanceConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            listen: "127.0.0.1:8080".into(),
            corpus: None,
            cache: PathBuf::from("replytriage-cache.jsonl"),
            reports_dir: None,
            max_inflight: 4,
            strategy: Strategy::Llm,
            backends: BackendConfig::default(),
            toxicity: ToxicityConfig::default(),
            relevance: RelevanceConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if c.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn triage(&self) -> TriageConfig {
        TriageConfig {
            strategy: Some(self.strategy),
            toxicity: self.toxicity.clone(),
            relevance: self.relevance.clone(),
        }
    }

    /// Loads referenced assets into the config and checks every invariant.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        if let Some(path) = &self.backends.fewshot {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            self.relevance.fewshot =
                FewShotSet::from_json(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.toxicity
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.relevance
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.max_inflight == 0 {
            return Err(ConfigError::Invalid("max_inflight must be at least 1".into()));
        }
        if let Some(c) = &self.corpus {
            if !c.exists() {
                return Err(ConfigError::Invalid(format!(
                    "corpus {} does not exist",
                    c.display()
                )));
            }
        }
        Ok(())
    }

    pub fn toxicity_scorer(&self) -> Result<Arc<dyn ToxicityScorer>, ConfigError> {
        Ok(match self.backends.toxicity {
            ToxicityBackendKind::Stub => match &self.backends.lexicon {
                None => Arc::new(LexiconScorer::bundled()),
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    Arc::new(
                        LexiconScorer::from_json(&text)
                            .map_err(|e| ConfigError::Invalid(format!("lexicon: {e}")))?,
                    )
                }
            },
            ToxicityBackendKind::Remote => Arc::new(PerspectiveScorer::from_env(
                &self.backends.toxicity_base_url,
                &self.toxicity,
            )),
        })
    }

    pub fn chat_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        Ok(match self.backends.llm {
            LlmBackendKind::Replay => {
                let dir = self.backends.replay_dir.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("the replay llm backend needs replay_dir".into())
                })?;
                Arc::new(ReplayBackend::new(dir, &self.relevance.llm_model))
            }
            LlmBackendKind::Http => Arc::new(OpenAiChatBackend::from_env(
                &self.backends.llm_base_url,
                &self.relevance.llm_model,
                Duration::from_secs_f64(self.toxicity.timeout_secs),
            )),
        })
    }

    /// Backends for the configured strategy. The LDA strategy trains its topic
    /// model on `corpus` here.
    pub fn classifiers(
        &self,
        corpus: &Corpus,
        clock: Arc<dyn Clock>,
    ) -> Result<Classifiers, ConfigError> {
        let mut relevance = RelevanceBackends::default();
        match self.strategy {
            Strategy::Keyword => {}
            Strategy::Lda => {
                let model = lda_train(&training_documents(corpus), &self.relevance)
                    .map_err(|e: RelevanceError| ConfigError::Invalid(e.to_string()))?;
                relevance.topic_model = Some(Arc::new(model));
            }
            Strategy::Llm => relevance.chat = Some(self.chat_backend()?),
        }
        Ok(Classifiers {
            toxicity: self.toxicity_scorer()?,
            relevance,
            clock,
        })
    }
}
