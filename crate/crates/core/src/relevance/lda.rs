//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling, with
//! fold-in inference for unseen documents.
//!
//! Sampling is single-threaded and driven by a ChaCha8 stream seeded from the
//! config, so a fixed seed reproduces the model exactly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{is_positive, RawRelevance, RelevanceConfig, RelevanceError, RelevanceScore, RelevanceVerdict};
use crate::corpus::{Article, ReplyContent};
use crate::text::content_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub vocabulary: BTreeMap<String, usize>,
    /// K rows over the vocabulary.
    pub topic_word: Vec<Vec<f64>>,
    /// One topic mixture per training document.
    pub doc_topic: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations_run: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Short digest of the training documents.
    pub fingerprint: String,
}

fn normalize(counts: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = counts.collect();
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

/// Index `k` with probability proportional to `weights[k]`.
fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

fn fingerprint(documents: &[Vec<String>]) -> String {
    let mut h = Sha256::new();
    for d in documents {
        for t in d {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
    }
    h.finalize().iter().take(4).map(|b| format!("{b:02x}")).collect()
}

fn content_seed(seed: u64, tokens: &[usize]) -> u64 {
    // FNV-1a over the token ids
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &t in tokens {
        for b in (t as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    seed ^ h
}

pub fn lda_train(
    documents: &[Vec<String>],
    config: &RelevanceConfig,
) -> Result<TopicModel, RelevanceError> {
    let k = config.lda_topics;
    let alpha = config.alpha();
    let beta = config.lda_beta;
    if k < 2 || !is_positive(alpha) || !is_positive(beta) {
        return Err(RelevanceError::Config(
            "need at least 2 topics and positive hyperparameters".into(),
        ));
    }
    if documents.len() < 2 {
        return Err(RelevanceError::Training(format!(
            "need at least 2 documents, got {}",
            documents.len()
        )));
    }
    let mut vocabulary: BTreeMap<String, usize> = documents
        .iter()
        .flatten()
        .map(|t| (t.clone(), 0))
        .collect();
    if vocabulary.is_empty() {
        return Err(RelevanceError::Training("vocabulary is empty".into()));
    }
    for (i, v) in vocabulary.values_mut().enumerate() {
        *v = i;
    }
    let total_tokens: usize = documents.iter().map(Vec::len).sum();
    if total_tokens < k {
        return Err(RelevanceError::Training(format!(
            "{total_tokens} tokens is fewer than {k} topics"
        )));
    }
    let v_size = vocabulary.len();
    let docs: Vec<Vec<usize>> = documents
        .iter()
        .map(|d| d.iter().map(|t| vocabulary[t]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut n_dk = vec![vec![0u32; k]; docs.len()];
    let mut n_kw = vec![vec![0u32; v_size]; k];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let mut zd = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.random_range(0..k);
            n_dk[d][t] += 1;
            n_kw[t][w] += 1;
            n_k[t] += 1;
            zd.push(t);
        }
        z.push(zd);
    }

    let v_beta = v_size as f64 * beta;
    let mut weights = vec![0.0f64; k];
    for _ in 0..config.lda_iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;
                for t in 0..k {
                    weights[t] = (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta)
                        / (n_k[t] as f64 + v_beta);
                }
                let new = draw(&weights, &mut rng);
                z[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let topic_word = (0..k)
        .map(|t| normalize(n_kw[t].iter().map(|&c| c as f64 + beta)))
        .collect();
    let doc_topic = n_dk
        .iter()
        .map(|row| normalize(row.iter().map(|&c| c as f64 + alpha)))
        .collect();

    Ok(TopicModel {
        vocabulary,
        topic_word,
        doc_topic,
        seed: config.seed,
        iterations_run: config.lda_iterations,
        alpha,
        beta,
        fingerprint: fingerprint(documents),
    })
}

impl TopicModel {
    pub fn topics(&self) -> usize {
        self.topic_word.len()
    }

    pub fn model_id(&self) -> String {
        format!(
            "lda-cgs/k{}/a{}/b{}/it{}/seed{}/{}",
            self.topics(),
            self.alpha,
            self.beta,
            self.iterations_run,
            self.seed,
            self.fingerprint
        )
    }

    /// Largest deviation from 1 over every stored distribution.
    pub fn max_normalization_error(&self) -> f64 {
        self.topic_word
            .iter()
            .chain(self.doc_topic.iter())
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Topic mixture of an unseen document, holding topics fixed. Returns
    /// `None` when no token is in the vocabulary. The sampler is seeded from
    /// `seed` and the document content, so equal inputs give equal outputs.
    pub fn infer(&self, tokens: &[String], sweeps: usize, seed: u64) -> Option<Vec<f64>> {
        let doc: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.vocabulary.get(t).copied())
            .collect();
        if doc.is_empty() {
            return None;
        }
        let k = self.topics();
        let mut rng = ChaCha8Rng::seed_from_u64(content_seed(seed, &doc));
        let mut n_k = vec![0u32; k];
        let mut z: Vec<usize> = doc
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                n_k[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0f64; k];
        for _ in 0..sweeps {
            for (i, &w) in doc.iter().enumerate() {
                n_k[z[i]] -= 1;
                for t in 0..k {
                    weights[t] = (n_k[t] as f64 + self.alpha) * self.topic_word[t][w];
                }
                let new = draw(&weights, &mut rng);
                z[i] = new;
                n_k[new] += 1;
            }
        }
        Some(normalize(n_k.iter().map(|&c| c as f64 + self.alpha)))
    }
}

/// Cosine similarity clamped to `[0, 1]`; zero vectors give 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

pub fn relevance_lda(
    model: &TopicModel,
    article: &Article,
    reply: ReplyContent<'_>,
    config: &RelevanceConfig,
) -> Result<RelevanceVerdict, RelevanceError> {
    let sweeps = config.lda_fold_in_iterations;
    let article_mix = model
        .infer(&content_tokens(&article.body), sweeps, config.seed)
        .ok_or_else(|| {
            RelevanceError::Inapplicable(format!(
                "article {} has no in-vocabulary tokens",
                article.id
            ))
        })?;
    let model_id = model.model_id();
    let Some(reply_mix) = model.infer(&content_tokens(reply.text), sweeps, config.seed) else {
        return Ok(RelevanceVerdict {
            score: RelevanceScore {
                raw: RawRelevance::Lda { similarity: 0.0 },
                model_id,
            },
            relevant: false,
            out_of_vocabulary: true,
        });
    };
    let similarity = cosine_similarity(&article_mix, &reply_mix);
    Ok(RelevanceVerdict {
        score: RelevanceScore {
            raw: RawRelevance::Lda { similarity },
            model_id,
        },
        relevant: similarity >= config.lda_similarity_threshold,
        out_of_vocabulary: false,
    })
}
