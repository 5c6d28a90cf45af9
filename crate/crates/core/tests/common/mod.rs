#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use replytriage::clock::FixedClock;
use replytriage::relevance::{
    build_request, BackendError, ChatBackend, ChatRequest, RelevanceBackends, RelevanceConfig,
    ReplayBackend,
};
use replytriage::toxicity::{LexiconScorer, ScorerError, ToxicityScorer};
use replytriage::triage::Classifiers;
use replytriage::Corpus;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    repo_root().join("fixtures").join(name)
}

pub fn test_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixed_clock() -> Arc<FixedClock> {
    Arc::new(FixedClock::at_epoch(1_700_000_000).unwrap())
}

/// Lexicon scorer that counts calls.
pub struct CountingScorer {
    inner: LexiconScorer,
    pub calls: AtomicUsize,
}

impl CountingScorer {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            inner: LexiconScorer::bundled(),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ToxicityScorer for CountingScorer {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }
    fn analyze(&self, text: &str) -> Result<f64, ScorerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.analyze(text)
    }
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

/// Chat backend answering from a fixed reply-text → rating table, counting calls.
pub struct CountingChat {
    pub ratings: BTreeMap<String, u8>,
    pub calls: AtomicUsize,
}

impl CountingChat {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for CountingChat {
    fn model_id(&self) -> String {
        "counting-chat".into()
    }
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let last = &request.messages.last().unwrap().content;
        self.ratings
            .iter()
            .find(|(text, _)| last.contains(&format!("comment:\n{text}\n")))
            .map(|(_, r)| format!("{{\"relevance\": {r}}}"))
            .ok_or_else(|| BackendError::Protocol("unscripted prompt".into()))
    }
}

pub fn classifiers(scorer: Arc<dyn ToxicityScorer>, relevance: RelevanceBackends) -> Classifiers {
    Classifiers {
        toxicity: scorer,
        relevance,
        clock: fixed_clock(),
    }
}

/// `reply_id,relevance` rows of `fixtures/labeled_small/llm_ratings.csv`.
pub fn labeled_ratings() -> Vec<(String, u8)> {
    let mut r = csv::Reader::from_path(fixture("labeled_small/llm_ratings.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].parse().unwrap())
        })
        .collect()
}

/// Writes one canned answer per labeled reply into `dir`.
pub fn record_labeled_replay(corpus: &Corpus, config: &RelevanceConfig, dir: &std::path::Path) -> ReplayBackend {
    let backend = ReplayBackend::new(dir, &config.llm_model);
    for (id, rating) in labeled_ratings() {
        let reply = corpus.reply(&id).unwrap();
        let article = corpus.article_for_reply(reply).unwrap();
        let req = build_request(article, reply.content(), config);
        backend
            .record(&req, &format!("{{\"relevance\": {rating}}}"))
            .unwrap();
    }
    backend
}
