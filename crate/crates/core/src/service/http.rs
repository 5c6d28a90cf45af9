use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Serialize;
use tokio::sync::oneshot;

use super::store::ResultStore;
use crate::corpus::{Corpus, Post};
use crate::triage::{build_feed, Category, ClassificationResult, SortMode};

/// What the API serves: a fixed corpus plus whatever snapshot the store
/// currently publishes.
#[derive(Clone)]
pub struct AppState {
    pub corpus: Arc<Corpus>,
    pub store: Arc<ResultStore>,
    pub reports_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start runtime: {0}")]
    Runtime(#[source] std::io::Error),
}

#[derive(Serialize)]
struct ArticleSummary<'a> {
    id: &'a str,
    title: &'a str,
    url: &'a str,
}

#[derive(Serialize)]
struct PostSummary<'a> {
    id: &'a str,
    author: &'a str,
    text: &'a str,
    created_at: DateTime<Utc>,
    article: Option<ArticleSummary<'a>>,
    reply_count: usize,
    counts: BTreeMap<Category, usize>,
}

#[derive(Serialize)]
struct ReplyItem<'a> {
    id: &'a str,
    author: &'a str,
    text: &'a str,
    created_at: DateTime<Utc>,
    category: Category,
}

#[derive(Serialize)]
struct RepliesResponse<'a> {
    post_id: &'a str,
    bucket: &'a str,
    sort: SortMode,
    include_irrelevant_toxic: bool,
    replies: Vec<ReplyItem<'a>>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

/// Results for the post's replies; a reply without a stored result is
/// treated as pending.
fn results_for(state: &AppState, post: &Post) -> Vec<ClassificationResult> {
    let snap = state.store.snapshot();
    post.reply_ids
        .iter()
        .map(|id| {
            snap.results
                .get(id)
                .cloned()
                .unwrap_or_else(|| ClassificationResult::unclassified(id, &snap.pipeline_version))
        })
        .collect()
}

fn summarize<'a>(state: &'a AppState, post: &'a Post) -> PostSummary<'a> {
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for r in results_for(state, post) {
        *counts.entry(r.category).or_default() += 1;
    }
    PostSummary {
        id: &post.id,
        author: &post.author,
        text: &post.text,
        created_at: post.created_at,
        article: state.corpus.article_for_post(post).map(|a| ArticleSummary {
            id: &a.id,
            title: &a.title,
            url: &a.url,
        }),
        reply_count: post.reply_ids.len(),
        counts,
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn list_posts(State(state): State<AppState>) -> Response {
    let posts: Vec<PostSummary> = state.corpus.posts().map(|p| summarize(&state, p)).collect();
    Json(posts).into_response()
}

async fn get_post(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.corpus.post(&id) {
        Some(p) => Json(summarize(&state, p)).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown post {id}")),
    }
}

async fn get_replies(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let Some(post) = state.corpus.post(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown post {id}"));
    };
    let bucket = q.get("bucket").map(String::as_str).unwrap_or("harmless");
    if bucket != "harmless" && bucket != "hidden" {
        return error(
            StatusCode::BAD_REQUEST,
            format!("unknown bucket \"{bucket}\" (expected harmless or hidden)"),
        );
    }
    let sort: SortMode = match q.get("sort").map(|s| s.parse()) {
        None => SortMode::default(),
        Some(Ok(s)) => s,
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e),
    };
    let include = match q.get("include_irrelevant_toxic").map(String::as_str) {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("include_irrelevant_toxic must be true or false, got \"{other}\""),
            )
        }
    };
    let results = results_for(&state, post);
    let feed = match build_feed(post, &results, sort) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let ids = if bucket == "harmless" {
        feed.harmless.clone()
    } else {
        feed.hidden(include)
    };
    let category: HashMap<&str, Category> = results
        .iter()
        .map(|r| (r.reply_id.as_str(), r.category))
        .collect();
    let replies = ids
        .iter()
        .filter_map(|rid| state.corpus.reply(rid))
        .map(|r| ReplyItem {
            id: &r.id,
            author: &r.author,
            text: &r.text,
            created_at: r.created_at,
            category: category[r.id.as_str()],
        })
        .collect();
    Json(RepliesResponse {
        post_id: &post.id,
        bucket,
        sort,
        include_irrelevant_toxic: include,
        replies,
    })
    .into_response()
}

async fn latest_report(State(state): State<AppState>) -> Response {
    let Some(dir) = &state.reports_dir else {
        return error(StatusCode::NOT_FOUND, "no reports directory configured");
    };
    match std::fs::read_to_string(dir.join("latest.json")) {
        Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            error(StatusCode::NOT_FOUND, "no evaluation report yet")
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/posts", get(list_posts))
        .route("/posts/{id}", get(get_post))
        .route("/posts/{id}/replies", get(get_replies))
        .route("/eval/reports/latest", get(latest_report))
        .with_state(state)
}

/// A running server. Dropping the handle stops it.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `listen` before returning, so a taken port is reported here.
pub fn serve(state: AppState, listen: &str) -> Result<ServiceHandle, ServeError> {
    let bind_err = |source| ServeError::Bind {
        addr: listen.to_string(),
        source,
    };
    let std_listener = std::net::TcpListener::bind(listen).map_err(bind_err)?;
    std_listener.set_nonblocking(true).map_err(bind_err)?;
    let addr = std_listener.local_addr().map_err(bind_err)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state);
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(std_listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("listener setup failed: {e}");
                    return;
                }
            };
            let server = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                log::error!("server error: {e}");
            }
        });
    });
    Ok(ServiceHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
