//! Tokenization and vocabulary construction.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;

use thiserror::Error;

use crate::TermId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("duplicate vocabulary term `{0}`")]
    DuplicateTerm(String),
    #[error("invalid vocabulary term `{0}`")]
    InvalidTerm(String),
    #[error("min_count must be at least 1")]
    ZeroMinCount,
    #[error("term and count lists differ in length ({terms} vs {counts})")]
    LengthMismatch { terms: usize, counts: usize },
}

/// Splits text into lowercase tokens.
///
/// Splits on Unicode whitespace, strips leading and trailing ASCII
/// punctuation from each piece and drops pieces that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|piece| !piece.is_empty())
        .map(|piece| piece.to_lowercase())
        .collect()
}

/// The fixed term list shared by the trainer, the embeddings and the scorers.
///
/// Ids are dense (`0..len`). A vocabulary built from a corpus orders ids by
/// descending frequency with a lexicographic tie-break; one loaded from an
/// embedding file keeps the file order and carries zero counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: BTreeMap<String, TermId>,
    total_tokens: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from token records, keeping terms seen at least
    /// `min_count` times.
    pub fn build<I, R, T>(records: I, min_count: u64) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[T]>,
        T: AsRef<str>,
    {
        if min_count == 0 {
            return Err(VocabError::ZeroMinCount);
        }
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for record in records {
            for token in record.as_ref() {
                let token = token.as_ref();
                match counts.get_mut(token) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(token.to_string(), 1);
                    }
                }
            }
        }
        let mut kept: Vec<(String, u64)> =
            counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        // BTreeMap iteration is already lexicographic, so a stable sort on
        // the count alone gives the tie-break for free.
        kept.sort_by_key(|&(_, c)| Reverse(c));
        let (terms, counts): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
        Self::from_counts(terms, counts)
    }

    /// Builds a vocabulary from explicit terms and counts, keeping the given order.
    pub fn from_counts(terms: Vec<String>, counts: Vec<u64>) -> Result<Self, VocabError> {
        if terms.len() != counts.len() {
            return Err(VocabError::LengthMismatch {
                terms: terms.len(),
                counts: counts.len(),
            });
        }
        let mut index = BTreeMap::new();
        for (id, term) in terms.iter().enumerate() {
            if term.is_empty() || term.chars().any(char::is_whitespace) {
                return Err(VocabError::InvalidTerm(term.clone()));
            }
            if index.insert(term.clone(), id as TermId).is_some() {
                return Err(VocabError::DuplicateTerm(term.clone()));
            }
        }
        let total_tokens = counts.iter().sum();
        Ok(Vocabulary {
            terms,
            counts,
            index,
            total_tokens,
        })
    }

    /// Vocabulary with unknown counts, as read back from an embedding file.
    pub fn from_terms(terms: Vec<String>) -> Result<Self, VocabError> {
        let counts = alloc::vec![0; terms.len()];
        Self::from_counts(terms, counts)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<TermId> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: TermId) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of the counts of all retained terms.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    ///
    /// Returns the ids in input order and the number of tokens dropped.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> (Vec<TermId>, usize) {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut oov = 0;
        for token in tokens {
            match self.id(token.as_ref()) {
                Some(id) => ids.push(id),
                None => oov += 1,
            }
        }
        (ids, oov)
    }

    /// Maps ids back to terms. Unknown ids are skipped.
    pub fn decode(&self, ids: &[TermId]) -> Vec<&str> {
        ids.iter().filter_map(|&id| self.term(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn records(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The city of Cambridge"), vec!["the", "city", "of", "cambridge"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Giraffa camelopardalis)"), vec!["giraffa", "camelopardalis"]);
        assert_eq!(tokenize("  ... (x) \t\n"), vec!["x"]);
        assert_eq!(tokenize("giraffe's \"Oxford,\""), vec!["giraffe's", "oxford"]);
    }

    #[test]
    fn min_count_threshold() {
        let v = Vocabulary::build(records(&["a a b", "a c"]), 2).unwrap();
        assert_eq!(v.terms(), &["a".to_string()]);
        assert_eq!(v.count(0), Some(3));
    }

    #[test]
    fn frequency_then_lexicographic_ids() {
        let v = Vocabulary::build(records(&["a a b", "a c"]), 1).unwrap();
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("c"), Some(2));
        assert_eq!(v.total_tokens(), 5);
    }

    #[test]
    fn empty_corpus_gives_empty_vocab() {
        let v = Vocabulary::build(Vec::<Vec<String>>::new(), 1).unwrap();
        assert!(v.is_empty());
        assert_eq!(Vocabulary::build(records(&["a"]), 0), Err(VocabError::ZeroMinCount));
    }

    #[test]
    fn counts_match_hash_map_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let corpus: Vec<Vec<String>> = (0..10_000)
            .map(|_| {
                let n = rng.gen_range(1..12);
                (0..n)
                    .map(|_| {
                        // skewed so some words fall under the threshold
                        let r: f64 = rng.gen();
                        let w = (r * r * r * r * 40_000.0) as u32;
                        alloc::format!("w{w}")
                    })
                    .collect()
            })
            .collect();

        let mut oracle: HashMap<&str, u64> = HashMap::new();
        for rec in &corpus {
            for t in rec {
                *oracle.entry(t.as_str()).or_default() += 1;
            }
        }
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        let expected: usize = oracle.values().filter(|&&c| c >= 5).count();
        assert_eq!(vocab.len(), expected);
        for (id, term) in vocab.terms().iter().enumerate() {
            assert_eq!(vocab.count(id as TermId), Some(oracle[term.as_str()]));
        }
        assert!(oracle.values().filter(|&&c| c < 5).count() > 0);
        for w in vocab.counts().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::build(records(&["a b"]), 1).unwrap();
        let (ids, oov) = v.encode(&["a", "zz", "b"]);
        assert_eq!(ids, vec![v.id("a").unwrap(), v.id("b").unwrap()]);
        assert_eq!(oov, 1);
        assert_eq!(v.encode::<&str>(&[]), (vec![], 0));
        assert_eq!(v.encode(&["q"; 7]), (vec![], 7));
    }

    #[test]
    fn rejects_duplicate_terms() {
        let err = Vocabulary::from_terms(vec!["a".into(), "a".into()]).unwrap_err();
        assert_eq!(err, VocabError::DuplicateTerm("a".into()));
    }

    proptest! {
        #[test]
        fn encode_conserves_and_decodes(tokens in prop::collection::vec("[a-f]{1,2}", 0..40)) {
            let vocab = Vocabulary::build(records(&["a b c d e aa bb"]), 1).unwrap();
            let (ids, oov) = vocab.encode(&tokens);
            prop_assert_eq!(ids.len() + oov, tokens.len());
            let expected: Vec<&str> = tokens
                .iter()
                .map(String::as_str)
                .filter(|t| vocab.id(t).is_some())
                .collect();
            prop_assert_eq!(vocab.decode(&ids), expected);
        }

        #[test]
        fn build_is_order_invariant(
            recs in prop::collection::vec(prop::collection::vec("[a-e]", 0..6), 0..20),
            min_count in 1u64..3,
        ) {
            let forward = Vocabulary::build(&recs, min_count).unwrap();
            let mut rev = recs.clone();
            rev.reverse();
            let backward = Vocabulary::build(&rev, min_count).unwrap();
            prop_assert_eq!(forward, backward);
        }
    }
}
