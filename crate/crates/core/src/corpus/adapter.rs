//! Platform adapters and all-or-nothing ingestion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::extract::{article_id_for_url, extract_article};
use super::{load_corpus, Article, Corpus, CorpusDocument, CorpusError, Post, Reply};

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("bad data from platform: {0}")]
    Data(String),
}

/// Article content as a platform hands it over.
#[derive(Debug, Clone)]
pub enum FetchedArticle {
    Html { url: String, html: String },
    Extracted(Article),
}

/// Fetch contract every platform source implements.
pub trait PlatformAdapter {
    fn name(&self) -> &str;
    fn list_posts(&self, handle: &str) -> Result<Vec<Post>, AdapterError>;
    fn list_replies(&self, post: &Post) -> Result<Vec<Reply>, AdapterError>;
    fn fetch_article(&self, post: &Post) -> Result<Option<FetchedArticle>, AdapterError>;

    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("source".to_string(), self.name().to_string())])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestProgress {
    pub posts_listed: usize,
    pub posts_completed: usize,
    pub replies_fetched: usize,
    pub articles_fetched: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("ingestion failed while {stage} (post {post_id:?}): {source}; progress {progress:?}")]
    Adapter {
        stage: &'static str,
        post_id: Option<String>,
        progress: IngestProgress,
        #[source]
        source: AdapterError,
    },
    #[error("article for post {post_id} could not be extracted: {message}; progress {progress:?}")]
    Extraction {
        post_id: String,
        message: String,
        progress: IngestProgress,
    },
    #[error("ingested data is inconsistent: {0}")]
    Integrity(super::IntegrityError),
}

impl IngestError {
    pub fn progress(&self) -> Option<&IngestProgress> {
        match self {
            IngestError::Adapter { progress, .. } | IngestError::Extraction { progress, .. } => {
                Some(progress)
            }
            IngestError::Integrity(_) => None,
        }
    }
}

/// Pulls every post for `handle` together with its direct replies and linked
/// article. Either the whole corpus is returned or nothing is.
pub fn ingest_adapter(adapter: &dyn PlatformAdapter, handle: &str) -> Result<Corpus, IngestError> {
    let mut progress = IngestProgress::default();
    let posts = adapter
        .list_posts(handle)
        .map_err(|source| IngestError::Adapter {
            stage: "listing posts",
            post_id: None,
            progress: progress.clone(),
            source,
        })?;
    progress.posts_listed = posts.len();

    let mut doc = CorpusDocument {
        metadata: adapter.metadata(),
        ..Default::default()
    };
    let mut articles: BTreeMap<String, Article> = BTreeMap::new();
    let mut skipped = 0usize;

    for mut post in posts {
        let replies = adapter
            .list_replies(&post)
            .map_err(|source| IngestError::Adapter {
                stage: "listing replies",
                post_id: Some(post.id.clone()),
                progress: progress.clone(),
                source,
            })?;
        let fetched = adapter
            .fetch_article(&post)
            .map_err(|source| IngestError::Adapter {
                stage: "fetching article",
                post_id: Some(post.id.clone()),
                progress: progress.clone(),
                source,
            })?;

        let article = match fetched {
            None => None,
            Some(FetchedArticle::Extracted(a)) => Some(a),
            Some(FetchedArticle::Html { url, html }) => {
                let mut a =
                    extract_article(&html, &url).map_err(|e| IngestError::Extraction {
                        post_id: post.id.clone(),
                        message: e.to_string(),
                        progress: progress.clone(),
                    })?;
                if let Some(id) = &post.article_ref {
                    a.id = id.clone();
                }
                Some(a)
            }
        };
        if let Some(a) = article {
            progress.articles_fetched += 1;
            post.article_ref = Some(a.id.clone());
            if let Some(prev) = articles.get(&a.id) {
                if prev != &a {
                    return Err(IngestError::Adapter {
                        stage: "fetching article",
                        post_id: Some(post.id.clone()),
                        progress,
                        source: AdapterError::Data(format!(
                            "article id {} delivered with conflicting content",
                            a.id
                        )),
                    });
                }
            }
            articles.insert(a.id.clone(), a);
        }

        progress.replies_fetched += replies.len();
        for r in replies {
            // only direct replies; anything pointing elsewhere is a thread or quote
            if r.post_id == post.id {
                doc.replies.push(r);
            } else {
                skipped += 1;
            }
        }
        post.reply_ids.clear();
        doc.posts.push(post);
        progress.posts_completed += 1;
    }
    if skipped > 0 {
        doc.metadata
            .insert("skipped_non_direct_replies".into(), skipped.to_string());
    }
    doc.articles = articles.into_values().collect();
    Corpus::from_document(doc).map_err(IngestError::Integrity)
}

/// Serves a corpus JSON file through the adapter contract.
pub struct FixtureAdapter {
    corpus: Corpus,
}

impl FixtureAdapter {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self {
            corpus: load_corpus(path)?,
        })
    }

    pub fn from_corpus(corpus: Corpus) -> Self {
        Self { corpus }
    }
}

impl PlatformAdapter for FixtureAdapter {
    fn name(&self) -> &str {
        "fixture"
    }

    /// `"*"` lists every post regardless of author.
    fn list_posts(&self, handle: &str) -> Result<Vec<Post>, AdapterError> {
        Ok(self
            .corpus
            .posts()
            .filter(|p| handle == "*" || p.author == handle)
            .cloned()
            .collect())
    }

    fn list_replies(&self, post: &Post) -> Result<Vec<Reply>, AdapterError> {
        Ok(self.corpus.replies_of(post).cloned().collect())
    }

    fn fetch_article(&self, post: &Post) -> Result<Option<FetchedArticle>, AdapterError> {
        Ok(self
            .corpus
            .article_for_post(post)
            .cloned()
            .map(FetchedArticle::Extracted))
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.corpus.metadata().clone()
    }
}

#[derive(Debug, Deserialize)]
struct SnapshotPost {
    id: String,
    author: String,
    text: String,
    created_at: DateTime<Utc>,
    #[serde(default)]
    article: Option<SnapshotArticle>,
}

#[derive(Debug, Deserialize)]
struct SnapshotArticle {
    url: String,
    file: String,
}

/// A directory captured from a platform: `posts.json`, `replies.json` and the
/// raw article HTML files referenced from the posts.
pub struct SnapshotAdapter {
    root: PathBuf,
    posts: Vec<SnapshotPost>,
    replies: Vec<Reply>,
}

impl SnapshotAdapter {
    pub fn open(root: &Path) -> Result<Self, AdapterError> {
        let read = |name: &str| {
            std::fs::read_to_string(root.join(name))
                .map_err(|e| AdapterError::Transport(format!("{}: {e}", root.join(name).display())))
        };
        let posts = serde_json::from_str(&read("posts.json")?)
            .map_err(|e| AdapterError::Data(format!("posts.json: {e}")))?;
        let replies = serde_json::from_str(&read("replies.json")?)
            .map_err(|e| AdapterError::Data(format!("replies.json: {e}")))?;
        Ok(Self {
            root: root.to_path_buf(),
            posts,
            replies,
        })
    }
}

impl PlatformAdapter for SnapshotAdapter {
    fn name(&self) -> &str {
        "snapshot"
    }

    fn list_posts(&self, handle: &str) -> Result<Vec<Post>, AdapterError> {
        Ok(self
            .posts
            .iter()
            .filter(|p| handle == "*" || p.author == handle)
            .map(|p| Post {
                id: p.id.clone(),
                author: p.author.clone(),
                text: p.text.clone(),
                article_ref: p.article.as_ref().map(|a| article_id_for_url(&a.url)),
                created_at: p.created_at,
                reply_ids: Vec::new(),
            })
            .collect())
    }

    fn list_replies(&self, post: &Post) -> Result<Vec<Reply>, AdapterError> {
        Ok(self
            .replies
            .iter()
            .filter(|r| r.post_id == post.id)
            .cloned()
            .collect())
    }

    fn fetch_article(&self, post: &Post) -> Result<Option<FetchedArticle>, AdapterError> {
        let Some(sp) = self.posts.iter().find(|p| p.id == post.id) else {
            return Ok(None);
        };
        let Some(art) = &sp.article else {
            return Ok(None);
        };
        let path = self.root.join(&art.file);
        let html = std::fs::read_to_string(&path)
            .map_err(|e| AdapterError::Transport(format!("{}: {e}", path.display())))?;
        Ok(Some(FetchedArticle::Html {
            url: art.url.clone(),
            html,
        }))
    }
}
