//! Scripted local HTTP server that records every request.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{StatusCode, Uri};
use axum::response::IntoResponse;
use axum::Router;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path_and_query: String,
    pub body: Vec<u8>,
}

#[derive(Clone, Default)]
struct Shared {
    script: Arc<Mutex<VecDeque<(u16, String)>>>,
    fallback: Arc<Mutex<Option<(u16, String)>>>,
    log: Arc<Mutex<Vec<Recorded>>>,
}

pub struct MockServer {
    pub base_url: String,
    shared: Shared,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

async fn handle(State(s): State<Shared>, uri: Uri, body: Bytes) -> impl IntoResponse {
    s.log.lock().unwrap().push(Recorded {
        path_and_query: uri.path_and_query().map(|p| p.to_string()).unwrap_or_default(),
        body: body.to_vec(),
    });
    let next = s.script.lock().unwrap().pop_front();
    let (code, body) = next
        .or_else(|| s.fallback.lock().unwrap().clone())
        .unwrap_or((500, "unscripted".into()));
    (StatusCode::from_u16(code).unwrap(), body)
}

impl MockServer {
    /// Serves `script` in order, then `fallback` for every later request.
    pub fn start(script: Vec<(u16, String)>, fallback: Option<(u16, String)>) -> Self {
        let shared = Shared::default();
        *shared.script.lock().unwrap() = script.into();
        *shared.fallback.lock().unwrap() = fallback;
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let addr = listener.local_addr().unwrap();
        let app = Router::new().fallback(handle).with_state(shared.clone());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let l = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(l, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Self {
            base_url: format!("http://{addr}"),
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.shared.log.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
