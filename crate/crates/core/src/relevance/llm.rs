//! Few-shot LLM relevance rating over a chat-completion backend.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    RawRelevance, RelevanceConfig, RelevanceError, RelevanceScore, RelevanceVerdict,
    LLM_RELEVANT_FROM,
};
use crate::corpus::{Article, ReplyContent};

const FEWSHOT_V1: &str = include_str!("../../assets/fewshot_v1.json");

pub const API_KEY_ENV: &str = "LLM_API_KEY";

/// Appended on the single re-ask after an unusable answer.
pub const REASK_INSTRUCTION: &str = "Respond with only the JSON object.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex SHA-256 of the request's JSON encoding; the replay lookup key.
    pub fn key(&self) -> String {
        let json = serde_json::to_string(self).expect("request serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("no recorded response for request {0}")]
    MissingReplay(String),
}

pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> String;
    /// Returns the assistant message content.
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub article_excerpt: String,
    pub reply: String,
    /// The rating the exemplar answer gives, 1 to 5.
    pub relevance: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSet {
    pub version: String,
    pub examples: Vec<FewShotExample>,
}

impl Default for FewShotSet {
    fn default() -> Self {
        Self::bundled()
    }
}

impl FewShotSet {
    pub fn bundled() -> Self {
        serde_json::from_str(FEWSHOT_V1).expect("bundled few-shot set parses")
    }

    pub fn from_json(json: &str) -> Result<Self, RelevanceError> {
        let set: Self =
            serde_json::from_str(json).map_err(|e| RelevanceError::Config(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// Exactly three relevant and three irrelevant exemplars.
    pub fn validate(&self) -> Result<(), RelevanceError> {
        if self.examples.iter().any(|e| !(1..=5).contains(&e.relevance)) {
            return Err(RelevanceError::Config(
                "few-shot ratings must be in 1..=5".into(),
            ));
        }
        let relevant = self
            .examples
            .iter()
            .filter(|e| e.relevance >= LLM_RELEVANT_FROM)
            .count();
        let irrelevant = self.examples.len() - relevant;
        if relevant != 3 || irrelevant != 3 {
            return Err(RelevanceError::Config(format!(
                "few-shot set needs 3 relevant and 3 irrelevant exemplars, has {relevant} and {irrelevant}"
            )));
        }
        Ok(())
    }
}

pub fn render_prompt(article_text: &str, comment_text: &str) -> String {
    format!(
        "The following is the text of a news article:\n\
         {article_text}.\n\
         \n\
         Consider the following comment:\n\
         {comment_text}\n\
         \n\
         Return a JSON object with a field, \"relevance,\" that is a \n\
         score from 1 to 5 depending on how relevant the comment \n\
         is to the article."
    )
}

fn answer(rating: u8) -> String {
    format!("{{\"relevance\": {rating}}}")
}

fn truncate_chars(s: &str, limit: usize) -> &str {
    match s.char_indices().nth(limit) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Six exemplar exchanges followed by the prompt for this article and reply.
pub fn build_request(article: &Article, reply: ReplyContent<'_>, config: &RelevanceConfig) -> ChatRequest {
    let mut messages = Vec::with_capacity(config.fewshot.examples.len() * 2 + 1);
    for ex in &config.fewshot.examples {
        messages.push(ChatMessage::new("user", render_prompt(&ex.article_excerpt, &ex.reply)));
        messages.push(ChatMessage::new("assistant", answer(ex.relevance)));
    }
    let body = truncate_chars(&article.body, config.llm_article_chars);
    messages.push(ChatMessage::new("user", render_prompt(body, reply.text)));
    ChatRequest {
        model: config.llm_model.clone(),
        messages,
        temperature: 0.0,
    }
}

/// Reads the integer `relevance` field from a JSON object answer.
pub fn parse_relevance(content: &str) -> Result<u8, String> {
    let mut s = content.trim();
    if let Some(rest) = s.strip_prefix("```") {
        s = rest.trim_start_matches("json").trim();
        s = s.strip_suffix("```").unwrap_or(s).trim();
    }
    let v: serde_json::Value = serde_json::from_str(s).map_err(|e| format!("not JSON: {e}"))?;
    let field = v
        .as_object()
        .ok_or("not a JSON object")?
        .get("relevance")
        .ok_or("missing \"relevance\" field")?;
    let n = match field.as_u64() {
        Some(n) => n,
        None => match field.as_f64() {
            Some(f) if f.fract() == 0.0 && f >= 0.0 => f as u64,
            _ => return Err(format!("relevance {field} is not an integer")),
        },
    };
    if (1..=5).contains(&n) {
        Ok(n as u8)
    } else {
        Err(format!("relevance {n} outside 1..=5"))
    }
}

pub(crate) fn llm_model_id(backend: &dyn ChatBackend, config: &RelevanceConfig) -> String {
    format!("{}+{}", backend.model_id(), config.fewshot.version)
}

pub fn relevance_llm(
    article: &Article,
    reply: ReplyContent<'_>,
    backend: &dyn ChatBackend,
    config: &RelevanceConfig,
) -> Result<RelevanceVerdict, RelevanceError> {
    if article.body.trim().is_empty() {
        return Err(RelevanceError::Inapplicable(format!(
            "article {} has no body text",
            article.id
        )));
    }
    let mut request = build_request(article, reply, config);
    let first = backend
        .complete(&request)
        .map_err(|e| RelevanceError::StrategyFailed(e.to_string()))?;
    let rating = match parse_relevance(&first) {
        Ok(r) => r,
        Err(first_problem) => {
            request.messages.push(ChatMessage::new("assistant", first));
            request.messages.push(ChatMessage::new("user", REASK_INSTRUCTION));
            let second = backend
                .complete(&request)
                .map_err(|e| RelevanceError::StrategyFailed(e.to_string()))?;
            parse_relevance(&second).map_err(|second_problem| {
                RelevanceError::StrategyFailed(format!(
                    "unusable answers: {first_problem}; then {second_problem}"
                ))
            })?
        }
    };
    Ok(RelevanceVerdict {
        score: RelevanceScore {
            raw: RawRelevance::Llm { rating },
            model_id: llm_model_id(backend, config),
        },
        relevant: rating >= config.llm_threshold,
        out_of_vocabulary: false,
    })
}

/// OpenAI-style `POST {base}/chat/completions`.
pub struct OpenAiChatBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    model: String,
}

impl OpenAiChatBackend {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            model: model.to_string(),
        }
    }

    pub fn from_env(base_url: &str, model: &str, timeout: Duration) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), model, timeout)
    }
}

impl ChatBackend for OpenAiChatBackend {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).expect("request serializes");
        let resp = req.send_string(&body).map_err(|e| match e {
            ureq::Error::Status(code, _) => BackendError::Transport(format!("HTTP {code}")),
            ureq::Error::Transport(t) => BackendError::Transport(t.to_string()),
        })?;
        let v: serde_json::Value = resp
            .into_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))
    }
}

/// Answers from `<dir>/<request key>.txt`; nothing else is consulted.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
    model: String,
}

impl ReplayBackend {
    pub fn new(dir: &Path, model: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            model: model.to_string(),
        }
    }

    pub fn path_for(&self, request: &ChatRequest) -> PathBuf {
        self.dir.join(format!("{}.txt", request.key()))
    }

    /// Stores `response` as the canned answer to `request`.
    pub fn record(&self, request: &ChatRequest, response: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(request);
        std::fs::write(&path, response)?;
        Ok(path)
    }
}

impl ChatBackend for ReplayBackend {
    fn model_id(&self) -> String {
        format!("replay:{}", self.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        std::fs::read_to_string(self.path_for(request))
            .map_err(|_| BackendError::MissingReplay(request.key()))
    }
}
