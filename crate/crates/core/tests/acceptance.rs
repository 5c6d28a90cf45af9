//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replytriage::corpus::ReplyContent;
use replytriage::evaluation::{
    cohen_kappa, collapse_likert, compare_relevance_techniques, confusion_metrics,
    read_ground_truth, threshold_sweep, LikertRecord, ReportLayout, DEFAULT_SWEEP_THRESHOLDS,
};
use replytriage::relevance::{
    build_request, lda_train, relevance_lda, ChatMessage, RawRelevance, RelevanceBackends,
    RelevanceConfig, ReplayBackend, Strategy, REASK_INSTRUCTION,
};
use replytriage::service::{run_pipeline, ResultStore};
use replytriage::toxicity::LexiconScorer;
use replytriage::triage::{SortMode, TriageConfig};
use replytriage::{
    build_feed, categorize, classify_reply, load_corpus, Article, Category, ClassificationResult,
    Post,
};

type Check = fn();

fn main() {
    let criteria: [(u32, &str, u64, Check); 10] = [
        (1, "categorization truth table", 1, truth_table),
        (2, "feed partition over 1000 random posts", 10, feed_partition),
        (3, "metrics and kappa against brute-force oracles", 30, metrics_oracle),
        (4, "threshold sweep recall and column layout", 5, threshold_sweep_monotone),
        (5, "Likert collapse over all 3125 tuples", 5, likert_exhaustive),
        (6, "LDA normalization, determinism and separation", 60, lda_sanity),
        (7, "end-to-end classify determinism", 10, end_to_end_determinism),
        (8, "zero backend calls after restart", 5, cache_economy),
        (9, "LLM rating rule and malformed answers", 5, llm_contract),
        (10, "relevance comparison report", 30, comparison_report),
    ];
    std::panic::set_hook(Box::new(|info| eprintln!("{info}")));
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let within = elapsed <= Duration::from_secs(budget);
        let ok = outcome.is_ok() && within;
        let verdict = if ok { "PASS" } else { "FAIL" };
        let note = if outcome.is_ok() && !within { ", over budget" } else { "" };
        println!(
            "{verdict} criterion {n}: {name} ({:.2} s of {budget} s{note})",
            elapsed.as_secs_f64()
        );
        if !ok {
            failed += 1;
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn truth_table() {
    for toxic in [false, true] {
        for relevant in [false, true] {
            let expected = match (relevant, toxic) {
                (true, false) => Category::C1,
                (false, false) => Category::C2,
                (true, true) => Category::C3,
                (false, true) => Category::C4,
            };
            assert_eq!(categorize(toxic, relevant), expected, "toxic={toxic} relevant={relevant}");
        }
    }
}

fn result_with(id: &str, category: Category) -> ClassificationResult {
    let mut r = ClassificationResult::unclassified(id, "v");
    r.category = category;
    r
}

fn feed_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for p in 0..1000 {
        let n = rng.random_range(0..=200usize);
        let ids: Vec<String> = (0..n).map(|i| format!("p{p}-r{i:03}")).collect();
        let cats: BTreeMap<String, Category> = ids
            .iter()
            .map(|id| (id.clone(), Category::ALL[rng.random_range(0..5)]))
            .collect();
        let post = Post {
            id: format!("p{p}"),
            author: "desk".into(),
            text: "t".into(),
            article_ref: None,
            created_at: Utc.timestamp_opt(0, 0).unwrap(),
            reply_ids: ids.clone(),
        };
        let mut results: Vec<ClassificationResult> =
            cats.iter().map(|(id, c)| result_with(id, *c)).collect();
        results.reverse();
        let in_order = |want: &[Category]| -> Vec<String> {
            ids.iter().filter(|id| want.contains(&cats[*id])).cloned().collect()
        };

        let grouped = build_feed(&post, &results, SortMode::Grouped).unwrap();
        let chrono = build_feed(&post, &results, SortMode::Chronological).unwrap();
        for feed in [&grouped, &chrono] {
            let all: Vec<&String> = feed
                .harmless
                .iter()
                .chain(&feed.hidden_relevant)
                .chain(&feed.hidden_irrelevant)
                .chain(&feed.pending)
                .collect();
            let unique: BTreeSet<&String> = all.iter().copied().collect();
            assert_eq!(all.len(), n, "partition size");
            assert_eq!(unique.len(), n, "disjoint");
            assert_eq!(unique, ids.iter().collect(), "covers the post");
            assert!(feed.harmless.iter().all(|id| matches!(cats[id], Category::C1 | Category::C2)));
            assert_eq!(feed.hidden_relevant, in_order(&[Category::C3]));
            assert_eq!(feed.hidden_irrelevant, in_order(&[Category::C4]));
            assert_eq!(feed.pending, in_order(&[Category::Pending]));
            assert_eq!(feed.hidden(false), in_order(&[Category::C3]));
            let mut toggled = in_order(&[Category::C3]);
            toggled.extend(in_order(&[Category::C4]));
            toggled.extend(in_order(&[Category::Pending]));
            assert_eq!(feed.hidden(true), toggled);
        }
        let mut c1_then_c2 = in_order(&[Category::C1]);
        c1_then_c2.extend(in_order(&[Category::C2]));
        assert_eq!(grouped.harmless, c1_then_c2);
        assert_eq!(chrono.harmless, in_order(&[Category::C1, Category::C2]));
    }
}

fn random_labels(rng: &mut ChaCha8Rng) -> (Vec<bool>, Vec<bool>) {
    let n = rng.random_range(1..=200usize);
    let bias_a = rng.random::<f64>();
    let bias_b = rng.random::<f64>();
    let a = (0..n).map(|_| rng.random::<f64>() < bias_a).collect();
    let b = (0..n).map(|_| rng.random::<f64>() < bias_b).collect();
    (a, b)
}

fn metrics_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    for _ in 0..10_000 {
        let (pred, actual) = random_labels(&mut rng);
        let n = pred.len() as f64;
        let count = |f: &dyn Fn(bool, bool) -> bool| {
            pred.iter().zip(&actual).filter(|(p, a)| f(**p, **a)).count() as u64
        };
        let tp = count(&|p, a| p && a);
        let fp = count(&|p, a| p && !a);
        let fn_ = count(&|p, a| !p && a);
        let tn = count(&|p, a| !p && !a);
        let m = confusion_metrics(tp, fp, fn_, tn).unwrap();

        let predicted_pos = pred.iter().filter(|p| **p).count() as f64;
        let actual_pos = actual.iter().filter(|a| **a).count() as f64;
        let correct = pred.iter().zip(&actual).filter(|(p, a)| p == a).count() as f64;
        let precision = if predicted_pos == 0.0 { 0.0 } else { tp as f64 / predicted_pos };
        let recall = if actual_pos == 0.0 { 0.0 } else { tp as f64 / actual_pos };
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (predicted_pos + actual_pos) };
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
        assert!(close(m.accuracy, correct / n), "accuracy {m:?}");
        assert!(close(m.precision, precision), "precision {m:?}");
        assert!(close(m.recall, recall), "recall {m:?}");
        assert!(close(m.f1, f1), "f1 {m:?}");
        assert_eq!(m.precision_undefined, predicted_pos == 0.0);
        assert_eq!(m.recall_undefined, actual_pos == 0.0);

        // 2x2 table form: 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d))
        let (a, b, c, d) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
        let denom = (a + b) * (b + d) + (a + c) * (c + d);
        let kappa = if denom == 0.0 {
            if b + c == 0.0 { 1.0 } else { 0.0 }
        } else {
            2.0 * (a * d - b * c) / denom
        };
        let k = cohen_kappa(&pred, &actual).unwrap();
        assert!(close(k, kappa), "kappa {k} vs {kappa} for {:?}", (tp, fp, fn_, tn));
    }
}

fn threshold_sweep_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let at = Utc.timestamp_opt(1_700_000_000, 0).unwrap();
    for _ in 0..1000 {
        let n = rng.random_range(1..=300usize);
        let scored: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if rng.random_bool(0.2) {
                    [0.5, 0.7, 0.9][rng.random_range(0..3)]
                } else {
                    rng.random::<f64>()
                };
                (s, rng.random_bool(0.4))
            })
            .collect();
        let report = threshold_sweep("TOXICITY", &scored, &DEFAULT_SWEEP_THRESHOLDS, at).unwrap();
        assert_eq!(report.layout, ReportLayout::Threshold);
        assert_eq!(report.columns, ["threshold", "accuracy", "precision", "recall", "f1"]);
        let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["TOXICITY @ 0.5", "TOXICITY @ 0.7", "TOXICITY @ 0.9"]);
        for w in report.rows.windows(2) {
            assert!(w[1].recall <= w[0].recall, "recall rose: {} then {}", w[0].recall, w[1].recall);
        }
        for (row, t) in report.rows.iter().zip(DEFAULT_SWEEP_THRESHOLDS) {
            let tp = scored.iter().filter(|(s, a)| *s >= t && *a).count() as u64;
            assert_eq!(row.confusion.tp, tp);
            assert_eq!(row.confusion.total(), n as u64);
        }
        let row = serde_json::to_value(&report.rows[0]).unwrap();
        let keys: Vec<&String> = row.as_object().unwrap().keys().collect();
        for k in ["accuracy", "precision", "recall", "f1"] {
            assert!(keys.iter().any(|x| *x == k), "row lacks {k}");
        }
    }
}

fn likert_exhaustive() {
    let mut seen = 0;
    for code in 0..3125u32 {
        let mut ratings = [0u8; 5];
        let mut c = code;
        for r in ratings.iter_mut() {
            *r = (c % 5) as u8 + 1;
            c /= 5;
        }
        let mut sorted = ratings;
        sorted.sort_unstable();
        let median = sorted[2];
        let record = LikertRecord::new(&format!("c{code}"), &ratings).unwrap();
        assert_eq!(collapse_likert(&record), median > 3, "{ratings:?}");
        seen += 1;
    }
    assert_eq!(seen, 3125);
    assert!(!collapse_likert(&LikertRecord::new("m3", &[3, 3, 3, 3, 3]).unwrap()));
    assert!(collapse_likert(&LikertRecord::new("m4", &[1, 4, 4, 5, 2]).unwrap()));
}

const SPORT: [&str; 10] = [
    "goal", "striker", "referee", "stadium", "penalty", "league", "coach", "defender", "midfield",
    "keeper",
];
const FOOD: [&str; 10] = [
    "recipe", "garlic", "simmer", "oven", "butter", "pastry", "flour", "saucepan", "basil", "roast",
];

fn toy_doc(words: &[&str], len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..len).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()
}

fn lda_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut docs = vec![];
    let mut labels = vec![];
    for i in 0..20 {
        let (words, label) = if i % 2 == 0 { (&SPORT, 0) } else { (&FOOD, 1) };
        docs.push(toy_doc(words, 300, &mut rng));
        labels.push(label);
    }
    let config = RelevanceConfig {
        lda_topics: 2,
        lda_iterations: 300,
        ..RelevanceConfig::default()
    };
    let model = lda_train(&docs, &config).unwrap();
    let again = lda_train(&docs, &config).unwrap();
    let bits = |m: &replytriage::relevance::TopicModel| -> Vec<u64> {
        m.topic_word.iter().chain(&m.doc_topic).flatten().map(|x| x.to_bits()).collect()
    };
    assert_eq!(bits(&model), bits(&again), "training is not bit-identical");
    assert!(model.max_normalization_error() <= 1e-9);
    for doc in &docs {
        let mix = model.infer(doc, config.lda_fold_in_iterations, config.seed).unwrap();
        assert!((mix.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let twice = model.infer(doc, config.lda_fold_in_iterations, config.seed).unwrap();
        assert_eq!(mix, twice);
    }

    let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    let agree = model
        .doc_topic
        .iter()
        .zip(&labels)
        .filter(|(m, l)| argmax(m) == **l)
        .count();
    let purity = agree.max(labels.len() - agree) as f64 / labels.len() as f64;
    assert!(purity >= 0.9, "purity {purity}");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let article = Article {
        id: "a".into(),
        url: "https://example.org/a".into(),
        title: "match report".into(),
        body: toy_doc(&SPORT, 300, &mut rng).join(" "),
        extraction_failed: false,
    };
    let reply = toy_doc(&FOOD, 300, &mut rng).join(" ");
    let verdict = relevance_lda(&model, &article, ReplyContent { id: "r", text: &reply }, &config).unwrap();
    let RawRelevance::Lda { similarity } = verdict.score.raw else {
        panic!("not an LDA score");
    };
    assert!(similarity < 0.3, "cross-topic cosine {similarity}");
}

fn frozen_counts() -> BTreeMap<Category, usize> {
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(common::fixture("newsroom_small.expected.json")).unwrap(),
    )
    .unwrap();
    serde_json::from_value(v["counts"].clone()).unwrap()
}

fn end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture("newsroom_small.json");
    let mut caches = vec![];
    for run in 0..2 {
        let cache = dir.path().join(format!("cache-{run}.jsonl"));
        let out = Command::new(env!("CARGO_BIN_EXE_replytriage"))
            .args(["classify", "--corpus"])
            .arg(&corpus)
            .args(["--strategy", "keyword", "--toxicity", "stub", "--json", "--cache"])
            .arg(&cache)
            .args(["--source-date-epoch", "1700000000"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let counts: BTreeMap<Category, usize> =
            serde_json::from_value(summary["counts"].clone()).unwrap();
        assert_eq!(counts, frozen_counts());
        caches.push(std::fs::read(&cache).unwrap());
    }
    assert!(!caches[0].is_empty());
    assert!(caches[0] == caches[1], "cache files differ");
}

fn cache_economy() {
    let corpus = load_corpus(&common::fixture("labeled_small/corpus.json")).unwrap();
    let ratings: BTreeMap<String, u8> = common::labeled_ratings()
        .into_iter()
        .map(|(id, r)| (corpus.reply(&id).unwrap().text.clone(), r))
        .collect();
    let config = TriageConfig {
        strategy: Some(Strategy::Llm),
        ..TriageConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let mut calls = vec![];
    for _ in 0..2 {
        let scorer = common::CountingScorer::new();
        let chat = Arc::new(common::CountingChat {
            ratings: ratings.clone(),
            calls: AtomicUsize::new(0),
        });
        let deps = common::classifiers(
            scorer.clone(),
            RelevanceBackends {
                topic_model: None,
                chat: Some(chat.clone()),
            },
        );
        let store = ResultStore::open(&path).unwrap();
        let summary = run_pipeline(&corpus, &deps, &config, &store, 4).unwrap();
        assert_eq!(summary.pending(), 0);
        calls.push((scorer.calls(), chat.calls()));
    }
    assert_eq!(calls[0], (40, 40));
    assert_eq!(calls[1], (0, 0), "restart issued backend calls");
}

fn llm_contract() {
    let dir = tempfile::tempdir().unwrap();
    let config = TriageConfig {
        strategy: Some(Strategy::Llm),
        ..TriageConfig::default()
    };
    let replay = ReplayBackend::new(dir.path(), &config.relevance.llm_model);
    let article = Article {
        id: "a".into(),
        url: "https://example.org/ferry".into(),
        title: "Ferry timetable changes".into(),
        body: "The harbour ferry will run every forty minutes from Monday.".into(),
        extraction_failed: false,
    };
    let deps = common::classifiers(
        Arc::new(LexiconScorer::bundled()),
        RelevanceBackends {
            topic_model: None,
            chat: Some(Arc::new(replay.clone())),
        },
    );
    let version = deps.pipeline_version(&config).unwrap();
    let reply = |id: &'static str, text: &'static str| ReplyContent { id, text };

    let three = reply("r3", "Forty minutes is a long wait for commuters.");
    replay
        .record(&build_request(&article, three, &config.relevance), "{\"relevance\": 3}")
        .unwrap();
    let two = reply("r2", "Anyone watching the match tonight?");
    replay
        .record(&build_request(&article, two, &config.relevance), "{\"relevance\": 2}")
        .unwrap();
    let bad = reply("rx", "Does the ferry still stop at the island?");
    let first = build_request(&article, bad, &config.relevance);
    replay.record(&first, "I would say it is quite relevant.").unwrap();
    let mut reask = first.clone();
    reask.messages.push(ChatMessage::new("assistant", "I would say it is quite relevant."));
    reask.messages.push(ChatMessage::new("user", REASK_INSTRUCTION));
    replay.record(&reask, "{\"relevance\": \"high\"}").unwrap();

    let r3 = classify_reply(three, Some(&article), &deps, &config, &version);
    let r2 = classify_reply(two, Some(&article), &deps, &config, &version);
    let rx = classify_reply(bad, Some(&article), &deps, &config, &version);
    assert_eq!(r3.relevant, Some(true));
    assert_eq!(r3.category, Category::C1);
    assert_eq!(r2.relevant, Some(false));
    assert_eq!(r2.category, Category::C2);
    assert_eq!(rx.relevant, None);
    assert_eq!(rx.category, Category::Pending);

    let post = Post {
        id: "p".into(),
        author: "desk".into(),
        text: "Ferry changes from Monday".into(),
        article_ref: Some("a".into()),
        created_at: Utc.timestamp_opt(0, 0).unwrap(),
        reply_ids: vec!["r2".into(), "r3".into(), "rx".into()],
    };
    let feed = build_feed(&post, &[r2, r3, rx], SortMode::Grouped).unwrap();
    assert_eq!(feed.harmless, ["r3", "r2"]);
    assert!(feed.hidden(false).is_empty());
    assert_eq!(feed.hidden(true), ["rx"]);
}

fn comparison_report() {
    let corpus = load_corpus(&common::fixture("labeled_small/corpus.json")).unwrap();
    let labels = read_ground_truth(&common::fixture("labeled_small/labels.csv")).unwrap();
    let config = RelevanceConfig::default();
    let backends = RelevanceBackends {
        topic_model: None,
        chat: Some(Arc::new(ReplayBackend::new(
            &common::fixture("labeled_small/replay"),
            &config.llm_model,
        ))),
    };
    let report = compare_relevance_techniques(
        &corpus,
        &labels,
        &backends,
        &config,
        Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
    )
    .unwrap();
    assert_eq!(report.layout, ReportLayout::Relevance);
    // label, (tp, fp, fn, tn), precision, recall, accuracy, f1
    let expected = [
        ("keyword", (7, 8, 13, 12), 7.0 / 15.0, 0.35, 0.475, 0.4),
        ("lda", (20, 20, 0, 0), 0.5, 1.0, 0.5, 2.0 / 3.0),
        ("llm", (16, 4, 4, 16), 0.8, 0.8, 0.8, 0.8),
    ];
    assert_eq!(report.rows.len(), 3);
    for (row, (label, (tp, fp, fn_, tn), p, r, a, f1)) in report.rows.iter().zip(expected) {
        assert_eq!(row.label, label);
        let c = row.confusion;
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (tp, fp, fn_, tn), "{label}");
        assert_eq!(row.failures, 0, "{label}");
        let same = |x: f64, y: f64| (x - y).abs() <= 1e-12;
        assert!(same(row.precision, p), "{label} precision {}", row.precision);
        assert!(same(row.recall, r), "{label} recall {}", row.recall);
        assert!(same(row.accuracy, a), "{label} accuracy {}", row.accuracy);
        assert!(same(row.f1, f1), "{label} f1 {}", row.f1);
    }
}
