//! Synthetic topical text and relevance data.
//!
//! Each topic owns a disjoint set of content words; every topic shares the
//! same function words. Documents for a query word come in three kinds:
//! relevant (on-topic, mentioning the word), judged irrelevant (another
//! topic with the word planted, sometimes mixed with a little on-topic
//! text) and unjudged background documents that never mention any query
//! word.

use std::collections::BTreeSet;

use desm_core::eval::{GradeScale, Judgments};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FUNCTION_WORDS: [&str; 15] = [
    "the", "of", "and", "a", "to", "in", "is", "for", "on", "with", "as", "by", "at", "from", "that",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub words_per_topic: usize,
    pub sentences: usize,
    pub min_sentence_len: usize,
    pub max_sentence_len: usize,
    /// Chance that a generated token is a function word.
    pub function_rate: f64,
    /// Content words per topic reserved as queries.
    pub queries_per_topic: usize,
    pub relevant_per_query: usize,
    pub irrelevant_per_query: usize,
    pub background_docs: usize,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    /// Share of on-topic words in mixed judged-irrelevant documents.
    pub near_topic_share: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 5,
            words_per_topic: 20,
            sentences: 50_000,
            min_sentence_len: 8,
            max_sentence_len: 16,
            function_rate: 0.3,
            queries_per_topic: 8,
            relevant_per_query: 5,
            irrelevant_per_query: 10,
            background_docs: 2000,
            min_doc_len: 20,
            max_doc_len: 40,
            near_topic_share: 0.3,
            seed: 1,
        }
    }
}

/// Independent random stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Topic vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub topics: Vec<Vec<String>>,
    pub queries_per_topic: usize,
}

impl TopicModel {
    pub fn new(cfg: &SynthConfig) -> Self {
        let topics = (0..cfg.topics)
            .map(|t| (0..cfg.words_per_topic).map(|w| format!("t{t}w{w:02}")).collect())
            .collect();
        TopicModel {
            topics,
            queries_per_topic: cfg.queries_per_topic.min(cfg.words_per_topic.saturating_sub(1)),
        }
    }

    pub fn topic_of(&self, word: &str) -> Option<usize> {
        self.topics.iter().position(|t| t.iter().any(|w| w == word))
    }

    /// The first `queries_per_topic` words of each topic.
    pub fn query_words(&self, topic: usize) -> &[String] {
        &self.topics[topic][..self.queries_per_topic]
    }

    /// Content words of `topic` that are never used as queries.
    pub fn background_words(&self, topic: usize) -> &[String] {
        &self.topics[topic][self.queries_per_topic..]
    }

    pub fn content_words(&self) -> impl Iterator<Item = (usize, &str)> {
        self.topics
            .iter()
            .enumerate()
            .flat_map(|(t, ws)| ws.iter().map(move |w| (t, w.as_str())))
    }
}

fn token<'a, R: Rng>(words: &'a [String], function_rate: f64, rng: &mut R) -> &'a str {
    if rng.gen::<f64>() < function_rate {
        FUNCTION_WORDS[rng.gen_range(0..FUNCTION_WORDS.len())]
    } else {
        &words[rng.gen_range(0..words.len())]
    }
}

/// Training sentences, one topic each, as space-joined text.
pub fn corpus(cfg: &SynthConfig, model: &TopicModel) -> Vec<String> {
    let mut rng = stream_rng(cfg.seed, 0);
    (0..cfg.sentences)
        .map(|_| {
            let topic = rng.gen_range(0..model.topics.len());
            let len = rng.gen_range(cfg.min_sentence_len..=cfg.max_sentence_len);
            let words: Vec<&str> = (0..len)
                .map(|_| token(&model.topics[topic], cfg.function_rate, &mut rng))
                .collect();
            words.join(" ")
        })
        .collect()
}

/// Tokens drawn from `words` plus function words.
pub fn passage<R: Rng>(words: &[String], len: usize, function_rate: f64, rng: &mut R) -> Vec<String> {
    (0..len).map(|_| token(words, function_rate, rng).to_string()).collect()
}

/// Inserts `count` copies of `word` at random positions.
pub fn plant<R: Rng>(tokens: &mut Vec<String>, word: &str, count: usize, rng: &mut R) {
    for _ in 0..count {
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, word.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DocKind {
    Relevant,
    Stuffed,
    NearTopic,
    Background,
}

#[derive(Debug, Clone)]
pub struct RelevanceData {
    /// `(doc id, text)` in id order.
    pub docs: Vec<(String, String)>,
    /// `(query id, text)` in id order.
    pub queries: Vec<(String, String)>,
    pub judgments: Judgments,
    pub train_queries: Vec<String>,
    pub test_queries: Vec<String>,
}

impl RelevanceData {
    pub fn judgments_for(&self, queries: &[String]) -> Judgments {
        self.judgments.restrict(queries.iter().map(String::as_str))
    }
}

/// Queries, documents and graded judgments. Every other query goes to the
/// training split.
pub fn relevance_data(cfg: &SynthConfig, model: &TopicModel) -> RelevanceData {
    let mut rng = stream_rng(cfg.seed, 1);
    let n_topics = model.topics.len();
    let all_queries: BTreeSet<&str> = (0..n_topics)
        .flat_map(|t| model.query_words(t).iter().map(String::as_str))
        .collect();
    let background: Vec<Vec<String>> = (0..n_topics).map(|t| model.background_words(t).to_vec()).collect();
    let doc_len = |rng: &mut ChaCha8Rng| rng.gen_range(cfg.min_doc_len..=cfg.max_doc_len);

    // (query index, grade, tokens)
    let mut pending: Vec<(Option<usize>, u8, Vec<String>)> = Vec::new();
    let mut query_terms = Vec::new();
    for topic in 0..n_topics {
        for word in model.query_words(topic) {
            let q = query_terms.len();
            query_terms.push(word.clone());
            for _ in 0..cfg.relevant_per_query {
                let len = doc_len(&mut rng);
                let mut doc = passage(&background[topic], len, cfg.function_rate, &mut rng);
                let tf = rng.gen_range(1..=2);
                plant(&mut doc, word, tf, &mut rng);
                pending.push((Some(q), rng.gen_range(2..=4), doc));
            }
            for i in 0..cfg.irrelevant_per_query {
                let other = (topic + rng.gen_range(1..n_topics.max(2))) % n_topics;
                let len = doc_len(&mut rng);
                let mut doc = if i % 2 == 0 {
                    passage(&background[other], len, cfg.function_rate, &mut rng)
                } else {
                    (0..len)
                        .map(|_| {
                            let t = if rng.gen::<f64>() < cfg.near_topic_share { topic } else { other };
                            token(&background[t], cfg.function_rate, &mut rng).to_string()
                        })
                        .collect()
                };
                let tf = rng.gen_range(2..=4);
                plant(&mut doc, word, tf, &mut rng);
                pending.push((Some(q), rng.gen_range(0..=1), doc));
            }
        }
    }
    for _ in 0..cfg.background_docs {
        let topic = rng.gen_range(0..n_topics);
        let len = doc_len(&mut rng);
        let doc = passage(&background[topic], len, cfg.function_rate, &mut rng);
        debug_assert!(doc.iter().all(|t| !all_queries.contains(t.as_str())));
        pending.push((None, 0, doc));
    }
    pending.shuffle(&mut rng);

    let width = pending.len().to_string().len();
    let q_width = query_terms.len().to_string().len();
    let qid = |q: usize| format!("q{q:0q_width$}");
    let mut judgments = Judgments::new(GradeScale::FivePoint);
    let mut docs = Vec::with_capacity(pending.len());
    for (i, (q, grade, tokens)) in pending.into_iter().enumerate() {
        let id = format!("d{i:0width$}");
        if let Some(q) = q {
            judgments.insert(&qid(q), &id, grade).expect("generated ids are unique");
        }
        docs.push((id, tokens.join(" ")));
    }
    let queries: Vec<(String, String)> = query_terms.iter().enumerate().map(|(q, w)| (qid(q), w.clone())).collect();
    let (train_queries, test_queries) = queries
        .iter()
        .map(|(id, _)| id.clone())
        .enumerate()
        .fold((Vec::new(), Vec::new()), |(mut tr, mut te), (i, id)| {
            if i % 2 == 0 {
                tr.push(id);
            } else {
                te.push(id);
            }
            (tr, te)
        });
    RelevanceData {
        docs,
        queries,
        judgments,
        train_queries,
        test_queries,
    }
}

/// One keyword-stuffing construction for `query` (a query word of topic
/// `a`): an off-topic passage with the query planted once, and an on-topic
/// passage without it.
pub fn stuffing_pair<R: Rng>(
    model: &TopicModel,
    query: &str,
    len: usize,
    function_rate: f64,
    rng: &mut R,
) -> (Vec<String>, Vec<String>) {
    let a = model.topic_of(query).expect("query is a content word");
    let n = model.topics.len();
    let b = (a + rng.gen_range(1..n.max(2))) % n;
    let mut stuffed = passage(model.background_words(b), len - 1, function_rate, rng);
    plant(&mut stuffed, query, 1, rng);
    let on_topic = passage(model.background_words(a), len, function_rate, rng);
    (stuffed, on_topic)
}

/// Labelled passages for a perturbation table around `query`.
pub fn perturbation_passages(model: &TopicModel, query: &str, seed: u64) -> Vec<(String, String)> {
    let mut rng = stream_rng(seed, 2);
    let a = model.topic_of(query).expect("query is a content word");
    let b = (a + 1) % model.topics.len();
    let on = passage(model.background_words(a), 24, 0.3, &mut rng);
    let mut on_with = on.clone();
    plant(&mut on_with, query, 5, &mut rng);
    let off = passage(model.background_words(b), 24, 0.3, &mut rng);
    let mut off_one = off.clone();
    plant(&mut off_one, query, 1, &mut rng);
    let mut off_five = off.clone();
    plant(&mut off_five, query, 5, &mut rng);
    vec![
        ("on-topic-tf5".into(), on_with.join(" ")),
        ("on-topic-tf0".into(), on.join(" ")),
        ("off-topic-tf1".into(), off_one.join(" ")),
        ("off-topic-tf5".into(), off_five.join(" ")),
        ("off-topic-tf0".into(), off.join(" ")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            sentences: 200,
            background_docs: 50,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn corpus_is_deterministic_and_topical() {
        let cfg = small();
        let model = TopicModel::new(&cfg);
        let a = corpus(&cfg, &model);
        assert_eq!(a, corpus(&cfg, &model));
        assert_eq!(a.len(), 200);
        for s in &a {
            let topics: BTreeSet<usize> = s.split(' ').filter_map(|w| model.topic_of(w)).collect();
            assert!(topics.len() <= 1);
        }
    }

    #[test]
    fn relevance_structure() {
        let cfg = small();
        let model = TopicModel::new(&cfg);
        let data = relevance_data(&cfg, &model);
        assert_eq!(data.queries.len(), 40);
        assert_eq!(data.docs.len(), 40 * 15 + 50);
        assert_eq!(data.judgments.len(), 40 * 15);
        assert_eq!(data.train_queries.len() + data.test_queries.len(), 40);
        let texts: std::collections::BTreeMap<&str, &str> =
            data.docs.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
        for (q, word) in &data.queries {
            for (d, &g) in data.judgments.for_query(q).unwrap() {
                let tf = texts[d.as_str()].split(' ').filter(|w| w == word).count();
                if g >= 2 {
                    assert!((1..=2).contains(&tf));
                } else {
                    assert!((2..=4).contains(&tf));
                }
            }
        }
    }

    #[test]
    fn stuffing_pair_shape() {
        let cfg = small();
        let model = TopicModel::new(&cfg);
        let mut rng = stream_rng(3, 9);
        let (stuffed, on) = stuffing_pair(&model, "t0w01", 20, 0.3, &mut rng);
        assert_eq!(stuffed.len(), 20);
        assert_eq!(stuffed.iter().filter(|w| *w == "t0w01").count(), 1);
        assert!(!on.iter().any(|w| w == "t0w01"));
        assert!(on.iter().filter_map(|w| model.topic_of(w)).all(|t| t == 0));
    }
}
