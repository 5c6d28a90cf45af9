//! Cached pipeline runs, the read-only HTTP API and its configuration.

mod config;
mod http;
mod pipeline;
mod store;

pub use config::{
    BackendConfig, ConfigError, LlmBackendKind, ServiceConfig, ToxicityBackendKind,
    CONFIG_SCHEMA_VERSION,
};
pub use http::{router, serve, AppState, ServeError, ServiceHandle};
pub use pipeline::{run_pipeline, PipelineError, RunSummary};
pub use store::{CacheEntry, CacheKey, ResultStore, Snapshot, StoreError};
