use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::store::{CacheEntry, CacheKey, ResultStore, Snapshot, StoreError};
use crate::corpus::{Corpus, Reply};
use crate::relevance::RelevanceError;
use crate::triage::{classify_reply, Category, ClassificationResult, Classifiers, TriageConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pipeline_version: String,
    pub total: usize,
    pub cache_hits: usize,
    pub classified: usize,
    pub counts: BTreeMap<Category, usize>,
}

impl RunSummary {
    pub fn count(&self, c: Category) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn pending(&self) -> usize {
        self.count(Category::Pending)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "replies: {} ({} classified, {} from cache)\npipeline: {}\n",
            self.total, self.classified, self.cache_hits, self.pipeline_version
        );
        for c in Category::ALL {
            out.push_str(&format!("{:<8}{}\n", c.as_str(), self.count(c)));
        }
        out
    }
}

/// Classifies every reply without a cache entry for the current key, using
/// up to `max_inflight` worker threads. Only non-pending results are
/// persisted, so failed replies are retried on the next run. New entries are
/// written in reply-id order regardless of completion order.
pub fn run_pipeline(
    corpus: &Corpus,
    deps: &Classifiers,
    config: &TriageConfig,
    store: &ResultStore,
    max_inflight: usize,
) -> Result<RunSummary, PipelineError> {
    let pipeline_version = deps.pipeline_version(config)?;
    let toxicity_model_id = deps.toxicity.model_id();
    let relevance_model_id = deps.relevance_model_id(config)?;
    let strategy = config.strategy();
    let key_for = |reply: &Reply| CacheKey {
        reply_id: reply.id.clone(),
        pipeline_version: pipeline_version.clone(),
        toxicity_model_id: toxicity_model_id.clone(),
        relevance_strategy: strategy,
        relevance_model_id: relevance_model_id.clone(),
    };

    let mut results: BTreeMap<String, ClassificationResult> = BTreeMap::new();
    let mut todo: Vec<&Reply> = Vec::new();
    for reply in corpus.replies() {
        match store.lookup(&key_for(reply)) {
            Some(hit) => {
                results.insert(reply.id.clone(), hit);
            }
            None => todo.push(reply),
        }
    }
    let cache_hits = results.len();

    let slots: Vec<Mutex<Option<ClassificationResult>>> =
        todo.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_inflight.max(1).min(todo.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(reply) = todo.get(i) else { break };
                let article = corpus.article_for_reply(reply);
                let r = classify_reply(reply.content(), article, deps, config, &pipeline_version);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });

    let mut new_entries = Vec::new();
    for (reply, slot) in todo.iter().zip(slots) {
        let result = slot.into_inner().expect("slot lock").expect("every slot filled");
        if result.category != Category::Pending {
            new_entries.push(CacheEntry {
                key: key_for(reply),
                value: result.clone(),
                written_at: deps.clock.now(),
            });
        }
        results.insert(reply.id.clone(), result);
    }
    // corpus.replies() iterates in id order, so new_entries already is too

    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for r in results.values() {
        *counts.get_mut(&r.category).expect("all categories present") += 1;
    }
    let summary = RunSummary {
        pipeline_version: pipeline_version.clone(),
        total: results.len(),
        cache_hits,
        classified: todo.len(),
        counts,
    };
    store.commit(
        new_entries,
        Snapshot {
            pipeline_version,
            results,
        },
    )?;
    Ok(summary)
}
