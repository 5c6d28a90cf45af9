use std::collections::BTreeSet;

use super::{RawRelevance, RelevanceConfig, RelevanceError, RelevanceScore, RelevanceVerdict};
use crate::corpus::{Article, ReplyContent};
use crate::text::content_tokens;

pub const KEYWORD_MODEL_ID: &str = "keyword-title-v1";

/// Counts distinct title tokens that also occur in the reply.
pub fn relevance_keyword(
    article: &Article,
    reply: ReplyContent<'_>,
    config: &RelevanceConfig,
) -> Result<RelevanceVerdict, RelevanceError> {
    let title: BTreeSet<String> = content_tokens(&article.title).into_iter().collect();
    if title.is_empty() {
        return Err(RelevanceError::Inapplicable(format!(
            "title of article {} has no content tokens",
            article.id
        )));
    }
    let reply_tokens: BTreeSet<String> = content_tokens(reply.text).into_iter().collect();
    let overlap = title.intersection(&reply_tokens).count();
    Ok(RelevanceVerdict {
        score: RelevanceScore {
            raw: RawRelevance::Keyword {
                similarity: overlap as f64 / title.len() as f64,
            },
            model_id: KEYWORD_MODEL_ID.to_string(),
        },
        relevant: overlap >= config.keyword_min_overlap,
        out_of_vocabulary: false,
    })
}
