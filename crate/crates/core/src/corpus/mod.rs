//! Domain model for posts, linked articles and their replies, plus the
//! JSON loader that enforces referential integrity.

mod adapter;
mod extract;

pub use adapter::{
    ingest_adapter, AdapterError, FetchedArticle, FixtureAdapter, IngestError, PlatformAdapter,
    SnapshotAdapter,
};
pub use extract::{extract_article, ExtractionError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_ref: Option<String>,
    pub created_at: DateTime<Utc>,
    /// Chronological; ties broken by reply id.
    #[serde(default)]
    pub reply_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub extraction_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    pub post_id: String,
    pub author: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

/// The content-only view of a reply handed to classifiers. Account fields are
/// deliberately absent so triage cannot depend on who wrote a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplyContent<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl Reply {
    pub fn content(&self) -> ReplyContent<'_> {
        ReplyContent {
            id: &self.id,
            text: &self.text,
        }
    }
}

/// An immutable, integrity-checked collection of posts, articles and replies.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    posts: BTreeMap<String, Post>,
    articles: BTreeMap<String, Article>,
    replies: BTreeMap<String, Reply>,
    metadata: BTreeMap<String, String>,
}

/// On-disk shape of a corpus document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDocument {
    pub posts: Vec<Post>,
    pub articles: Vec<Article>,
    pub replies: Vec<Reply>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("integrity error: {0}")]
    Integrity(IntegrityError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityError {
    DuplicateId { kind: &'static str, id: String },
    EmptyId { kind: &'static str },
    DanglingPost { reply_id: String, post_id: String },
    DanglingArticle { post_id: String, article_ref: String },
    EmptyTitle { article_id: String },
    EmptyBody { article_id: String },
    ReplyOrder { post_id: String },
}

impl IntegrityError {
    /// The id the error is about (the missing target for dangling references).
    pub fn offending_id(&self) -> &str {
        match self {
            IntegrityError::DuplicateId { id, .. } => id,
            IntegrityError::EmptyId { .. } => "",
            IntegrityError::DanglingPost { post_id, .. } => post_id,
            IntegrityError::DanglingArticle { article_ref, .. } => article_ref,
            IntegrityError::EmptyTitle { article_id } | IntegrityError::EmptyBody { article_id } => {
                article_id
            }
            IntegrityError::ReplyOrder { post_id } => post_id,
        }
    }
}

impl fmt::Display for IntegrityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrityError::DuplicateId { kind, id } => write!(f, "duplicate {kind} id \"{id}\""),
            IntegrityError::EmptyId { kind } => write!(f, "empty {kind} id"),
            IntegrityError::DanglingPost { reply_id, post_id } => {
                write!(f, "reply \"{reply_id}\" references unknown post \"{post_id}\"")
            }
            IntegrityError::DanglingArticle {
                post_id,
                article_ref,
            } => write!(
                f,
                "post \"{post_id}\" references unknown article \"{article_ref}\""
            ),
            IntegrityError::EmptyTitle { article_id } => {
                write!(f, "article \"{article_id}\" has an empty title")
            }
            IntegrityError::EmptyBody { article_id } => write!(
                f,
                "article \"{article_id}\" has an empty body but is not flagged extraction_failed"
            ),
            IntegrityError::ReplyOrder { post_id } => write!(
                f,
                "post \"{post_id}\" lists reply_ids that differ from its replies in chronological order"
            ),
        }
    }
}

impl From<IntegrityError> for CorpusError {
    fn from(e: IntegrityError) -> Self {
        CorpusError::Integrity(e)
    }
}

/// Reply ids of one post ordered by `(created_at, id)`.
fn chronological_ids<'a>(replies: impl Iterator<Item = &'a Reply>) -> Vec<String> {
    let mut v: Vec<&Reply> = replies.collect();
    v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    v.into_iter().map(|r| r.id.clone()).collect()
}

impl Corpus {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a corpus, rejecting any document that breaks an invariant.
    ///
    /// Posts may omit `reply_ids`; when present they must equal the
    /// chronological order of the post's replies.
    pub fn from_document(doc: CorpusDocument) -> Result<Self, IntegrityError> {
        let mut posts = BTreeMap::new();
        for p in doc.posts {
            if p.id.is_empty() {
                return Err(IntegrityError::EmptyId { kind: "post" });
            }
            if posts.contains_key(&p.id) {
                return Err(IntegrityError::DuplicateId {
                    kind: "post",
                    id: p.id,
                });
            }
            posts.insert(p.id.clone(), p);
        }
        let mut articles = BTreeMap::new();
        for a in doc.articles {
            if a.id.is_empty() {
                return Err(IntegrityError::EmptyId { kind: "article" });
            }
            if a.title.trim().is_empty() {
                return Err(IntegrityError::EmptyTitle { article_id: a.id });
            }
            if a.body.is_empty() && !a.extraction_failed {
                return Err(IntegrityError::EmptyBody { article_id: a.id });
            }
            if articles.contains_key(&a.id) {
                return Err(IntegrityError::DuplicateId {
                    kind: "article",
                    id: a.id,
                });
            }
            articles.insert(a.id.clone(), a);
        }
        let mut replies = BTreeMap::new();
        for r in doc.replies {
            if r.id.is_empty() {
                return Err(IntegrityError::EmptyId { kind: "reply" });
            }
            if !posts.contains_key(&r.post_id) {
                return Err(IntegrityError::DanglingPost {
                    reply_id: r.id,
                    post_id: r.post_id,
                });
            }
            if replies.contains_key(&r.id) {
                return Err(IntegrityError::DuplicateId {
                    kind: "reply",
                    id: r.id,
                });
            }
            replies.insert(r.id.clone(), r);
        }
        for p in posts.values() {
            if let Some(a) = &p.article_ref {
                if !articles.contains_key(a) {
                    return Err(IntegrityError::DanglingArticle {
                        post_id: p.id.clone(),
                        article_ref: a.clone(),
                    });
                }
            }
        }

        let mut by_post: BTreeMap<&str, Vec<&Reply>> = BTreeMap::new();
        for r in replies.values() {
            by_post.entry(r.post_id.as_str()).or_default().push(r);
        }
        let mut ordered: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (post_id, rs) in by_post {
            ordered.insert(post_id.to_string(), chronological_ids(rs.into_iter()));
        }
        for p in posts.values_mut() {
            let expected = ordered.remove(&p.id).unwrap_or_default();
            if p.reply_ids.is_empty() {
                p.reply_ids = expected;
            } else if p.reply_ids != expected {
                return Err(IntegrityError::ReplyOrder {
                    post_id: p.id.clone(),
                });
            }
        }

        Ok(Corpus {
            posts,
            articles,
            replies,
            metadata: doc.metadata,
        })
    }

    pub fn to_document(&self) -> CorpusDocument {
        CorpusDocument {
            posts: self.posts.values().cloned().collect(),
            articles: self.articles.values().cloned().collect(),
            replies: self.replies.values().cloned().collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("corpus serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// `(posts, articles, replies)`
    pub fn cardinalities(&self) -> (usize, usize, usize) {
        (self.posts.len(), self.articles.len(), self.replies.len())
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.posts.values()
    }

    pub fn articles(&self) -> impl Iterator<Item = &Article> {
        self.articles.values()
    }

    pub fn replies(&self) -> impl Iterator<Item = &Reply> {
        self.replies.values()
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.get(id)
    }

    pub fn article(&self, id: &str) -> Option<&Article> {
        self.articles.get(id)
    }

    pub fn reply(&self, id: &str) -> Option<&Reply> {
        self.replies.get(id)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn article_for_post(&self, post: &Post) -> Option<&Article> {
        post.article_ref.as_deref().and_then(|a| self.articles.get(a))
    }

    /// Replies of `post` in chronological order.
    pub fn replies_of<'a>(&'a self, post: &'a Post) -> impl Iterator<Item = &'a Reply> + 'a {
        post.reply_ids.iter().filter_map(move |id| self.replies.get(id))
    }

    /// The article linked from the post that `reply` answers.
    pub fn article_for_reply(&self, reply: &Reply) -> Option<&Article> {
        self.posts
            .get(&reply.post_id)
            .and_then(|p| self.article_for_post(p))
    }
}

/// Parses a corpus document, reporting schema problems with a JSON pointer.
pub fn parse_corpus(json: &str) -> Result<Corpus, CorpusError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let doc: CorpusDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        CorpusError::Schema {
            pointer,
            message: e.inner().to_string(),
        }
    })?;
    Ok(Corpus::from_document(doc)?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Distinct ids referenced by `doc` that do not resolve.
pub fn dangling_references(doc: &CorpusDocument) -> BTreeSet<String> {
    let posts: BTreeSet<&str> = doc.posts.iter().map(|p| p.id.as_str()).collect();
    let articles: BTreeSet<&str> = doc.articles.iter().map(|a| a.id.as_str()).collect();
    let mut out = BTreeSet::new();
    for r in &doc.replies {
        if !posts.contains(r.post_id.as_str()) {
            out.insert(r.post_id.clone());
        }
    }
    for p in &doc.posts {
        if let Some(a) = &p.article_ref {
            if !articles.contains(a.as_str()) {
                out.insert(a.clone());
            }
        }
    }
    out
}
