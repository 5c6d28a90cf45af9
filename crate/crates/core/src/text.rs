//! Tokenization shared by the keyword and topic-model relevance strategies.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use unicode_segmentation::UnicodeSegmentation;

const STOPWORDS_EN: &str = include_str!("../assets/stopwords_en.txt");

/// Tokens shorter than this (in chars) are dropped.
pub const MIN_TOKEN_CHARS: usize = 3;

fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Lowercased Unicode words, in order, without any filtering.
pub fn words(text: &str) -> Vec<String> {
    text.unicode_words()
        .map(|w| w.to_lowercase().replace('\u{2019}', "'"))
        .collect()
}

/// Lowercased Unicode words with stopwords and short tokens removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| w.chars().count() >= MIN_TOKEN_CHARS && !is_stopword(w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_stopwords_and_short_tokens() {
        assert_eq!(
            content_tokens("The senate climate bill is weak"),
            vec!["senate", "climate", "bill", "weak"]
        );
        assert_eq!(content_tokens("lol ok"), vec!["lol"]);
    }

    #[test]
    fn curly_apostrophes_match_the_list() {
        assert!(content_tokens("Don\u{2019}t").is_empty());
    }

    #[test]
    fn unicode_words_lowercased() {
        assert_eq!(content_tokens("Élection RÉSULTATS"), vec!["élection", "résultats"]);
    }
}
