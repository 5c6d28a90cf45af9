//! Deterministic main-text extraction from news article HTML.
//!
//! Title precedence: `og:title` meta, then `<title>`, then the first `<h1>`.
//! Body: text of the `<p>` elements inside the largest `<article>` or `<main>`
//! block (by paragraph text length), falling back to every `<p>` in the
//! document. Script and style content is dropped and whitespace collapsed.

use scraper::{ElementRef, Html, Node, Selector};
use sha2::{Digest, Sha256};

use super::Article;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractionError {
    #[error("no title candidate found in document from {url}")]
    NoTitle { url: String },
}

const SKIPPED: &[&str] = &["script", "style", "noscript", "template"];

fn selector(s: &str) -> Selector {
    Selector::parse(s).expect("static selector")
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn push_text(el: ElementRef<'_>, out: &mut String) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => {
                if SKIPPED.contains(&e.name()) {
                    continue;
                }
                if let Some(child_el) = ElementRef::wrap(child) {
                    push_text(child_el, out);
                }
            }
            _ => {}
        }
    }
}

fn element_text(el: ElementRef<'_>) -> String {
    let mut raw = String::new();
    push_text(el, &mut raw);
    normalize_ws(&raw)
}

fn paragraphs(root: ElementRef<'_>, p: &Selector) -> Vec<String> {
    root.select(p)
        .map(element_text)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Stable article id derived from its URL.
pub fn article_id_for_url(url: &str) -> String {
    let digest = Sha256::digest(url.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("art-{hex}")
}

pub fn extract_article(html: &str, url: &str) -> Result<Article, ExtractionError> {
    let doc = Html::parse_document(html);

    let og = doc
        .select(&selector(r#"meta[property="og:title"]"#))
        .filter_map(|m| m.value().attr("content"))
        .map(normalize_ws)
        .find(|t| !t.is_empty());
    let title = og
        .or_else(|| {
            doc.select(&selector("title"))
                .map(element_text)
                .find(|t| !t.is_empty())
        })
        .or_else(|| {
            doc.select(&selector("h1"))
                .map(element_text)
                .find(|t| !t.is_empty())
        })
        .ok_or_else(|| ExtractionError::NoTitle {
            url: url.to_string(),
        })?;

    let p = selector("p");
    let mut best: Option<Vec<String>> = None;
    let mut best_len = 0usize;
    for block in doc.select(&selector("article, main")) {
        let paras = paragraphs(block, &p);
        let len: usize = paras.iter().map(|s| s.chars().count()).sum();
        // strict comparison keeps the first block in document order on ties
        if len > best_len {
            best_len = len;
            best = Some(paras);
        }
    }
    let paras = match best {
        Some(paras) => paras,
        None => paragraphs(doc.root_element(), &p),
    };
    let body = paras.join(" ");

    Ok(Article {
        id: article_id_for_url(url),
        url: url.to_string(),
        title,
        extraction_failed: body.is_empty(),
        body,
    })
}
