//! Reply triage for journalists: scores replies to a news post for toxicity
//! and for relevance to the linked article, sorts them into four categories,
//! and serves feeds that keep harmful replies behind explicit controls.
//!
//! The [`evaluation`] module reproduces the classifier comparison and
//! threshold sweep used to choose the production settings.

pub mod clock;
pub mod corpus;
pub mod evaluation;
pub mod relevance;
pub mod service;
pub mod text;
pub mod toxicity;
pub mod triage;

pub use corpus::{load_corpus, Article, Corpus, Post, Reply};
pub use triage::{build_feed, categorize, classify_reply, Category, ClassificationResult, FeedView};
