//! Dual embedding space scoring.
//!
//! Each document is summarized by the mean of the unit-normalized vectors of
//! its in-vocabulary tokens (repeated tokens count repeatedly). A query is
//! scored against that centroid by averaging, over its in-vocabulary terms,
//! the cosine between the term's vector in the query space and the centroid
//! in the document space. With the query in IN and documents in OUT this
//! rewards documents full of words that co-occur with the query terms.
//!
//! Out-of-vocabulary words are ignored on both sides, and the query divisor
//! counts only in-vocabulary terms so the score stays a mean of cosines.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::embeddings::{DualEmbedding, Space, SpacePair};
use crate::linalg::{dot, norm, Matrix};
use crate::ranking::ScoredList;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DesmError {
    #[error("query has no in-vocabulary terms")]
    NoQueryTerms,
    #[error("document `{0}` has no in-vocabulary tokens")]
    SkippedDocument(String),
    #[error("centroid of document `{0}` is the zero vector")]
    ZeroCentroid(String),
    #[error("document `{0}` is not in the index")]
    UnknownDocument(String),
    #[error("variant {variant} needs a {needed} index but the index was built from {actual}")]
    SpaceMismatch {
        variant: SpacePair,
        needed: Space,
        actual: Space,
    },
    #[error("word `{0}` has a zero vector and cannot be normalized")]
    ZeroVector(String),
    #[error("document `{0}` appears twice")]
    DuplicateDocument(String),
    #[error("index has dimension {index} but the embedding has {embedding}")]
    DimensionMismatch { index: usize, embedding: usize },
    #[error("centroid buffer holds {got} values, expected {expected}")]
    BadCentroidBuffer { got: usize, expected: usize },
}

impl DesmError {
    /// True for the cases that make a score undefined rather than the
    /// request invalid. Rankers place such documents last.
    pub fn is_undefined(&self) -> bool {
        matches!(
            self,
            DesmError::NoQueryTerms | DesmError::SkippedDocument(_) | DesmError::ZeroCentroid(_)
        )
    }
}

/// Mean of the unit-normalized `space` vectors of the in-vocabulary tokens.
///
/// Returns `Ok(None)` when no token is in the vocabulary. The result is not
/// re-normalized.
pub fn centroid<T: AsRef<str>>(tokens: &[T], emb: &DualEmbedding, space: Space) -> Result<Option<Vec<f64>>, DesmError> {
    let matrix = emb.matrix(space);
    let mut sum = vec![0.0; emb.dim()];
    let mut n = 0usize;
    for token in tokens {
        let Some(id) = emb.vocab().id(token.as_ref()) else {
            continue;
        };
        let row = matrix.row(id as usize);
        let len = norm(row);
        if len == 0.0 {
            return Err(DesmError::ZeroVector(token.as_ref().to_string()));
        }
        crate::linalg::axpy(1.0 / len, row, &mut sum);
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|x| *x *= inv);
    Ok(Some(sum))
}

/// Precomputed document centroids in one embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidIndex {
    space: Space,
    vocab_len: usize,
    doc_ids: Vec<String>,
    centroids: Matrix,
    norms: Vec<f64>,
    positions: BTreeMap<String, usize>,
    skipped: BTreeSet<String>,
}

impl CentroidIndex {
    /// Builds centroids for `docs` from the `space` matrix of `emb`.
    ///
    /// Documents without any in-vocabulary token are recorded as skipped.
    pub fn build<I, T>(docs: I, emb: &DualEmbedding, space: Space) -> Result<Self, DesmError>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
        T: AsRef<str>,
    {
        let mut doc_ids = Vec::new();
        let mut data = Vec::new();
        let mut skipped = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for (doc_id, tokens) in docs {
            if !seen.insert(doc_id.clone()) {
                return Err(DesmError::DuplicateDocument(doc_id));
            }
            match centroid(&tokens, emb, space)? {
                Some(c) => {
                    doc_ids.push(doc_id);
                    data.extend_from_slice(&c);
                }
                None => {
                    skipped.insert(doc_id);
                }
            }
        }
        Self::from_parts(space, emb.len(), emb.dim(), doc_ids, data, skipped.into_iter().collect())
    }

    /// Reassembles an index from its stored parts (row-major centroids).
    pub fn from_parts(
        space: Space,
        vocab_len: usize,
        dim: usize,
        doc_ids: Vec<String>,
        centroids: Vec<f64>,
        skipped: Vec<String>,
    ) -> Result<Self, DesmError> {
        let expected = doc_ids.len() * dim;
        if centroids.len() != expected {
            return Err(DesmError::BadCentroidBuffer {
                got: centroids.len(),
                expected,
            });
        }
        let mut positions = BTreeMap::new();
        for (i, id) in doc_ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(DesmError::DuplicateDocument(id.clone()));
            }
        }
        let mut skipped_set = BTreeSet::new();
        for id in skipped {
            if positions.contains_key(&id) || !skipped_set.insert(id.clone()) {
                return Err(DesmError::DuplicateDocument(id));
            }
        }
        let centroids = Matrix::from_vec(doc_ids.len(), dim, centroids);
        let norms = (0..doc_ids.len()).map(|i| norm(centroids.row(i))).collect();
        Ok(CentroidIndex {
            space,
            vocab_len,
            doc_ids,
            centroids,
            norms,
            positions,
            skipped: skipped_set,
        })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Vocabulary size of the embedding the index was built from.
    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Ids of documents that have a centroid, in insertion order.
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn skipped(&self) -> impl Iterator<Item = &str> {
        self.skipped.iter().map(String::as_str)
    }

    pub fn is_skipped(&self, doc_id: &str) -> bool {
        self.skipped.contains(doc_id)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.positions.contains_key(doc_id) || self.skipped.contains(doc_id)
    }

    pub fn centroid(&self, doc_id: &str) -> Option<&[f64]> {
        self.positions.get(doc_id).map(|&i| self.centroids.row(i))
    }

    /// Row-major centroid buffer, one row per entry of [`Self::doc_ids`].
    pub fn centroid_matrix(&self) -> &Matrix {
        &self.centroids
    }
}

/// Unit vectors of a query's in-vocabulary terms in the query space.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    variant: SpacePair,
    units: Vec<Vec<f64>>,
}

impl PreparedQuery {
    pub fn new<T: AsRef<str>>(query: &[T], emb: &DualEmbedding, variant: SpacePair) -> Result<Self, DesmError> {
        let matrix = emb.matrix(variant.first());
        let mut units = Vec::new();
        for term in query {
            let Some(id) = emb.vocab().id(term.as_ref()) else {
                continue;
            };
            let row = matrix.row(id as usize);
            let len = norm(row);
            if len == 0.0 {
                return Err(DesmError::ZeroVector(term.as_ref().to_string()));
            }
            units.push(row.iter().map(|x| x / len).collect());
        }
        Ok(PreparedQuery { variant, units })
    }

    /// Number of in-vocabulary query terms (with repetition).
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn variant(&self) -> SpacePair {
        self.variant
    }

    /// Score against one indexed document.
    pub fn score(&self, doc_id: &str, index: &CentroidIndex) -> Result<f64, DesmError> {
        self.check_index(index)?;
        let Some(&pos) = index.positions.get(doc_id) else {
            return Err(if index.is_skipped(doc_id) {
                DesmError::SkippedDocument(doc_id.to_string())
            } else {
                DesmError::UnknownDocument(doc_id.to_string())
            });
        };
        if self.units.is_empty() {
            return Err(DesmError::NoQueryTerms);
        }
        let c_norm = index.norms[pos];
        if c_norm == 0.0 {
            return Err(DesmError::ZeroCentroid(doc_id.to_string()));
        }
        let c = index.centroids.row(pos);
        let total: f64 = self.units.iter().map(|q| (dot(q, c) / c_norm).clamp(-1.0, 1.0)).sum();
        Ok(total / self.units.len() as f64)
    }

    fn check_index(&self, index: &CentroidIndex) -> Result<(), DesmError> {
        if index.space != self.variant.second() {
            return Err(DesmError::SpaceMismatch {
                variant: self.variant,
                needed: self.variant.second(),
                actual: index.space,
            });
        }
        if let Some(q) = self.units.first() {
            if q.len() != index.dim() {
                return Err(DesmError::DimensionMismatch {
                    index: index.dim(),
                    embedding: q.len(),
                });
            }
        }
        Ok(())
    }
}

/// Score of `query` for `doc_id` under `variant`.
///
/// `variant.first()` picks the matrix for query words; `variant.second()`
/// must be the space the index was built from.
pub fn desm_score<T: AsRef<str>>(
    query: &[T],
    doc_id: &str,
    index: &CentroidIndex,
    emb: &DualEmbedding,
    variant: SpacePair,
) -> Result<f64, DesmError> {
    PreparedQuery::new(query, emb, variant)?.score(doc_id, index)
}

/// Ranks `candidates` for `query`. Undefined scores sort last.
pub fn rank<T: AsRef<str>, D: AsRef<str>>(
    query_id: &str,
    query: &[T],
    candidates: &[D],
    index: &CentroidIndex,
    emb: &DualEmbedding,
    variant: SpacePair,
) -> Result<ScoredList, DesmError> {
    let prepared = PreparedQuery::new(query, emb, variant)?;
    prepared.check_index(index)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for doc in candidates {
        let doc = doc.as_ref();
        let score = match prepared.score(doc, index) {
            Ok(s) => Some(s),
            Err(e) if e.is_undefined() => None,
            Err(e) => return Err(e),
        };
        scored.push((doc.to_string(), score));
    }
    Ok(ScoredList::from_scores(query_id, scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use alloc::format;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn random_embedding(v: usize, d: usize, seed: u64) -> DualEmbedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::from_terms((0..v).map(|i| format!("w{i}")).collect()).unwrap();
        let mut m = || Matrix::from_vec(v, d, (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (a, b) = (m(), m());
        DualEmbedding::new(vocab, a, b).unwrap()
    }

    fn toy() -> DualEmbedding {
        let vocab = Vocabulary::from_terms(s(&["cambridge", "city", "university", "giraffe", "neck"])).unwrap();
        let w_in = Matrix::from_vec(
            5,
            4,
            vec![
                1.0, 0.5, 0.0, 0.1, //
                0.8, 0.9, 0.1, 0.0, //
                0.6, 0.2, 0.7, 0.0, //
                0.0, 0.1, 0.2, 1.0, //
                -0.1, 0.0, 0.4, 0.9,
            ],
        );
        let w_out = Matrix::from_vec(
            5,
            4,
            vec![
                0.2, 0.9, 0.3, -0.1, //
                0.9, 0.4, 0.0, 0.2, //
                0.7, 0.1, 0.6, -0.2, //
                -0.3, 0.0, 0.1, 0.8, //
                0.1, -0.2, 0.5, 0.7,
            ],
        );
        DualEmbedding::new(vocab, w_in, w_out).unwrap()
    }

    #[test]
    fn repeated_word_centroid_is_its_unit_vector() {
        let emb = toy();
        let c = centroid(&["city", "city", "city"], &emb, Space::Out).unwrap().unwrap();
        let row = emb.word_vector(Space::Out, "city").unwrap();
        let n = norm(row);
        for (a, b) in c.iter().zip(row) {
            assert!((a - b / n).abs() < 1e-15);
        }
    }

    #[test]
    fn oov_tokens_are_dropped() {
        let emb = toy();
        assert_eq!(
            centroid(&["city", "zzz", "city"], &emb, Space::In).unwrap(),
            centroid(&["city", "city"], &emb, Space::In).unwrap()
        );
        assert_eq!(centroid(&["zzz"], &emb, Space::In).unwrap(), None);
    }

    #[test]
    fn centroid_matches_two_pass_oracle() {
        let emb = random_embedding(30, 10, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let doc: Vec<String> = (0..20).map(|_| format!("w{}", rng.gen_range(0..30))).collect();
        let c = centroid(&doc, &emb, Space::Out).unwrap().unwrap();
        // pass 1: normalize every token vector; pass 2: average
        let normalized: Vec<Vec<f64>> = doc
            .iter()
            .map(|t| {
                let v = emb.word_vector(Space::Out, t).unwrap();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        for j in 0..10 {
            let oracle = normalized.iter().map(|v| v[j]).sum::<f64>() / 20.0;
            assert!((c[j] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_word_is_an_error() {
        let mut emb = toy();
        emb.matrix_mut(Space::Out).row_mut(3).fill(0.0);
        assert_eq!(
            centroid(&["giraffe"], &emb, Space::Out),
            Err(DesmError::ZeroVector("giraffe".into()))
        );
    }

    #[test]
    fn single_word_in_in_is_one() {
        let emb = toy();
        let index = CentroidIndex::build(vec![("d".to_string(), s(&["university"]))], &emb, Space::In).unwrap();
        let score = desm_score(&["university"], "d", &index, &emb, SpacePair::InIn).unwrap();
        assert!((score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_term_query_is_mean_of_cosines() {
        let emb = toy();
        let doc = s(&["city", "university", "neck"]);
        let index = CentroidIndex::build(vec![("d".to_string(), doc.clone())], &emb, Space::Out).unwrap();
        let c = index.centroid("d").unwrap();
        let s1 = crate::embeddings::cosine(emb.word_vector(Space::In, "cambridge").unwrap(), c).unwrap();
        let s2 = crate::embeddings::cosine(emb.word_vector(Space::In, "giraffe").unwrap(), c).unwrap();
        let got = desm_score(&["cambridge", "giraffe"], "d", &index, &emb, SpacePair::InOut).unwrap();
        assert!((got - (s1 + s2) / 2.0).abs() < 1e-15);
    }

    /// Mean over query terms and document tokens computed straight from the
    /// definition, never materializing a stored centroid.
    fn all_pairs(query: &[&str], doc: &[&str], emb: &DualEmbedding, pair: SpacePair) -> f64 {
        let unit = |space, w: &str| {
            let v = emb.word_vector(space, w).unwrap();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let d = emb.dim();
        let mut sum = vec![0.0; d];
        for w in doc {
            for (s, x) in sum.iter_mut().zip(unit(pair.second(), w)) {
                *s += x;
            }
        }
        let sn = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        query
            .iter()
            .map(|q| unit(pair.first(), q).iter().zip(&sum).map(|(a, b)| a * b).sum::<f64>() / sn)
            .sum::<f64>()
            / query.len() as f64
    }

    #[test]
    fn toy_scores_match_all_pairs() {
        let emb = toy();
        let docs = [
            ("d1", vec!["cambridge", "city", "university", "city"]),
            ("d2", vec!["giraffe", "neck", "neck"]),
            ("d3", vec!["city", "giraffe", "university"]),
        ];
        let query = ["cambridge", "university", "neck"];
        for pair in [SpacePair::InOut, SpacePair::InIn, SpacePair::OutOut, SpacePair::OutIn] {
            let index = CentroidIndex::build(
                docs.iter().map(|(id, t)| (id.to_string(), t.clone())),
                &emb,
                pair.second(),
            )
            .unwrap();
            for (id, toks) in &docs {
                let got = desm_score(&query, id, &index, &emb, pair).unwrap();
                assert!((got - all_pairs(&query, toks, &emb, pair)).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&got));
            }
        }
    }

    #[test]
    fn undefined_and_invalid_cases() {
        let emb = toy();
        let index = CentroidIndex::build(
            vec![("d".to_string(), s(&["city"])), ("empty".to_string(), s(&["zzz"]))],
            &emb,
            Space::Out,
        )
        .unwrap();
        assert!(index.is_skipped("empty"));
        assert_eq!(desm_score(&["qqq"], "d", &index, &emb, SpacePair::InOut), Err(DesmError::NoQueryTerms));
        assert_eq!(
            desm_score(&["city"], "empty", &index, &emb, SpacePair::InOut),
            Err(DesmError::SkippedDocument("empty".into()))
        );
        assert_eq!(
            desm_score(&["city"], "nope", &index, &emb, SpacePair::InOut),
            Err(DesmError::UnknownDocument("nope".into()))
        );
        assert!(matches!(
            desm_score(&["city"], "d", &index, &emb, SpacePair::InIn),
            Err(DesmError::SpaceMismatch { .. })
        ));
        assert!(DesmError::NoQueryTerms.is_undefined());
        assert!(!DesmError::UnknownDocument("x".into()).is_undefined());
    }

    #[test]
    fn duplicate_documents_rejected() {
        let emb = toy();
        let err = CentroidIndex::build(
            vec![("d".to_string(), s(&["city"])), ("d".to_string(), s(&["neck"]))],
            &emb,
            Space::Out,
        )
        .unwrap_err();
        assert_eq!(err, DesmError::DuplicateDocument("d".into()));
    }

    #[test]
    fn rank_orders_and_places_undefined_last() {
        let emb = toy();
        let index = CentroidIndex::build(
            vec![
                ("a".to_string(), s(&["giraffe", "neck"])),
                ("b".to_string(), s(&["city", "university"])),
                ("c".to_string(), s(&["zzz"])),
                ("d".to_string(), s(&["city", "university"])),
            ],
            &emb,
            Space::Out,
        )
        .unwrap();
        let list = rank("q", &["cambridge"], &["d", "c", "a", "b"], &index, &emb, SpacePair::InOut).unwrap();
        let ids = list.doc_ids();
        assert_eq!(ids[3], "c");
        assert_eq!(list.entries[3].score, None);
        // b and d tie exactly, so ascending id order
        let pos_b = ids.iter().position(|&x| x == "b").unwrap();
        let pos_d = ids.iter().position(|&x| x == "d").unwrap();
        assert_eq!(pos_d, pos_b + 1);

        let single = rank("q", &["cambridge"], &["a"], &index, &emb, SpacePair::InOut).unwrap();
        assert_eq!(single.len(), 1);
        assert!(rank::<_, &str>("q", &["cambridge"], &[], &index, &emb, SpacePair::InOut).unwrap().is_empty());
        let all_undef = rank("q", &["qqq"], &["b", "a"], &index, &emb, SpacePair::InOut).unwrap();
        assert_eq!(all_undef.doc_ids(), vec!["a", "b"]);
    }

    #[test]
    fn rank_matches_recompute_and_sort() {
        let emb = random_embedding(40, 8, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let docs: Vec<(String, Vec<String>)> = (0..50)
            .map(|i| {
                let n = rng.gen_range(1..15);
                (format!("doc{i:02}"), (0..n).map(|_| format!("w{}", rng.gen_range(0..40))).collect())
            })
            .collect();
        let index = CentroidIndex::build(docs.clone(), &emb, Space::Out).unwrap();
        let query = s(&["w1", "w7", "w7", "w30"]);
        let ids: Vec<&str> = docs.iter().map(|d| d.0.as_str()).collect();
        let list = rank("q", &query, &ids, &index, &emb, SpacePair::InOut).unwrap();
        let mut oracle: Vec<(String, f64)> = docs
            .iter()
            .map(|(id, _)| (id.clone(), desm_score(&query, id, &index, &emb, SpacePair::InOut).unwrap()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let want: Vec<&str> = oracle.iter().map(|o| o.0.as_str()).collect();
        assert_eq!(list.doc_ids(), want);
    }

    proptest! {
        #[test]
        fn invariances(seed in 0u64..1000, alpha in 0.01f64..50.0) {
            let emb = random_embedding(25, 6, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let doc: Vec<String> = (0..12).map(|_| format!("w{}", rng.gen_range(0..25))).collect();
            let query: Vec<String> = (0..3).map(|_| format!("w{}", rng.gen_range(0..25))).collect();
            let docs = vec![("d".to_string(), doc.clone())];
            let index = CentroidIndex::build(docs.clone(), &emb, Space::Out).unwrap();
            let base = desm_score(&query, "d", &index, &emb, SpacePair::InOut).unwrap();
            prop_assert!((-1.0..=1.0).contains(&base));

            let all_pairs_score = {
                let q: Vec<&str> = query.iter().map(String::as_str).collect();
                let d: Vec<&str> = doc.iter().map(String::as_str).collect();
                all_pairs(&q, &d, &emb, SpacePair::InOut)
            };
            prop_assert!((base - all_pairs_score).abs() < 1e-12);

            let mut shuffled = doc.clone();
            shuffled.reverse();
            shuffled.rotate_left(5);
            let idx2 = CentroidIndex::build(vec![("d".to_string(), shuffled)], &emb, Space::Out).unwrap();
            prop_assert!((desm_score(&query, "d", &idx2, &emb, SpacePair::InOut).unwrap() - base).abs() < 1e-12);

            let mut q2 = query.clone();
            q2.reverse();
            prop_assert!((desm_score(&q2, "d", &index, &emb, SpacePair::InOut).unwrap() - base).abs() < 1e-12);

            for space in [Space::In, Space::Out] {
                let mut scaled = emb.clone();
                scaled.matrix_mut(space).scale(alpha);
                let idx3 = CentroidIndex::build(docs.clone(), &scaled, Space::Out).unwrap();
                let s3 = desm_score(&query, "d", &idx3, &scaled, SpacePair::InOut).unwrap();
                prop_assert!((s3 - base).abs() < 1e-12);
            }
        }
    }
}
