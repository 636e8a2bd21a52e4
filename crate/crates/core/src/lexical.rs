//! Term-matching baselines: BM25 and latent semantic analysis.
//!
//! The lexical index keeps its own vocabulary: every token counts here,
//! including words the embedding model has never seen.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::ranking::ScoredList;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LexicalError {
    #[error("document `{0}` is not in the index")]
    UnknownDocument(String),
    #[error("document `{0}` appears twice")]
    DuplicateDocument(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidConfig(&'static str),
    #[error("LSA dimensionality must be at least 1")]
    ZeroRank,
    #[error("the term-document matrix has rank 0")]
    EmptyMatrix,
    #[error("unknown idf variant `{0}`")]
    ParseIdf(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LexicalIndex {
    doc_ids: Vec<String>,
    positions: BTreeMap<String, usize>,
    tf: Vec<BTreeMap<String, u32>>,
    lengths: Vec<u32>,
    df: BTreeMap<String, u32>,
    avg_len: f64,
}

impl LexicalIndex {
    pub fn build<I, T>(docs: I) -> Result<Self, LexicalError>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
        T: AsRef<str>,
    {
        let mut index = LexicalIndex::default();
        for (doc_id, tokens) in docs {
            if index.positions.contains_key(&doc_id) {
                return Err(LexicalError::DuplicateDocument(doc_id));
            }
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t.as_ref().to_string()).or_default() += 1;
            }
            for term in counts.keys() {
                *index.df.entry(term.clone()).or_default() += 1;
            }
            index.positions.insert(doc_id.clone(), index.doc_ids.len());
            index.doc_ids.push(doc_id);
            index.lengths.push(tokens.len() as u32);
            index.tf.push(counts);
        }
        let total: u64 = index.lengths.iter().map(|&l| l as u64).sum();
        index.avg_len = if index.doc_ids.is_empty() {
            0.0
        } else {
            total as f64 / index.doc_ids.len() as f64
        };
        Ok(index)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.positions.contains_key(doc_id)
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.positions.get(doc_id).map(|&i| self.lengths[i])
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn tf(&self, term: &str, doc_id: &str) -> Option<u32> {
        self.positions
            .get(doc_id)
            .map(|&i| self.tf[i].get(term).copied().unwrap_or(0))
    }

    /// Collection vocabulary in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.df.keys().map(String::as_str)
    }

    fn position(&self, doc_id: &str) -> Result<usize, LexicalError> {
        self.positions
            .get(doc_id)
            .copied()
            .ok_or_else(|| LexicalError::UnknownDocument(doc_id.to_string()))
    }
}

/// How BM25 turns document frequency into a term weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdfVariant {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    #[default]
    Plus1,
    /// `ln((N - df + 0.5) / (df + 0.5))`, negative for terms in most documents.
    Robertson,
}

impl fmt::Display for IdfVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdfVariant::Plus1 => "plus1",
            IdfVariant::Robertson => "robertson",
        })
    }
}

impl FromStr for IdfVariant {
    type Err = LexicalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plus1" => Ok(IdfVariant::Plus1),
            "robertson" => Ok(IdfVariant::Robertson),
            _ => Err(LexicalError::ParseIdf(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub idf: IdfVariant,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Bm25Config {
            k1: 1.7,
            b: 0.95,
            idf: IdfVariant::Plus1,
        }
    }
}

impl Bm25Config {
    pub fn validate(&self) -> Result<(), LexicalError> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(LexicalError::InvalidConfig("k1 must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(LexicalError::InvalidConfig("b must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn idf(&self, n_docs: usize, df: u32) -> f64 {
        let ratio = (n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5);
        match self.idf {
            IdfVariant::Plus1 => libm::log1p(ratio),
            IdfVariant::Robertson => libm::log(ratio),
        }
    }
}

/// BM25 of `query` for one document. Each distinct query term counts once.
pub fn bm25_score<T: AsRef<str>>(
    query: &[T],
    doc_id: &str,
    index: &LexicalIndex,
    cfg: &Bm25Config,
) -> Result<f64, LexicalError> {
    let pos = index.position(doc_id)?;
    let terms: BTreeSet<&str> = query.iter().map(AsRef::as_ref).collect();
    Ok(bm25_terms(&terms, pos, index, cfg))
}

fn bm25_terms(terms: &BTreeSet<&str>, pos: usize, index: &LexicalIndex, cfg: &Bm25Config) -> f64 {
    let tf_map = &index.tf[pos];
    let len_ratio = if index.avg_len > 0.0 {
        index.lengths[pos] as f64 / index.avg_len
    } else {
        0.0
    };
    let norm = cfg.k1 * (1.0 - cfg.b + cfg.b * len_ratio);
    terms
        .iter()
        .map(|&t| match tf_map.get(t) {
            Some(&tf) => {
                let tf = tf as f64;
                cfg.idf(index.num_docs(), index.df(t)) * tf * (cfg.k1 + 1.0) / (tf + norm)
            }
            None => 0.0,
        })
        .sum()
}

/// Ranks `candidates` by BM25.
pub fn rank_bm25<T: AsRef<str>, D: AsRef<str>>(
    query_id: &str,
    query: &[T],
    candidates: &[D],
    index: &LexicalIndex,
    cfg: &Bm25Config,
) -> Result<ScoredList, LexicalError> {
    cfg.validate()?;
    let terms: BTreeSet<&str> = query.iter().map(AsRef::as_ref).collect();
    let mut scored = Vec::with_capacity(candidates.len());
    for d in candidates {
        let pos = index.position(d.as_ref())?;
        scored.push((d.as_ref().to_string(), Some(bm25_terms(&terms, pos, index, cfg))));
    }
    Ok(ScoredList::from_scores(query_id, scored))
}

/// Truncated SVD of the TF-IDF weighted term-document matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaModel {
    term_rows: BTreeMap<String, usize>,
    idf: Vec<f64>,
    /// `terms x k`, the leading left singular vectors.
    term_vectors: Matrix,
    singular_values: Vec<f64>,
    doc_ids: Vec<String>,
    positions: BTreeMap<String, usize>,
    /// `docs x k`, the leading right singular vectors.
    doc_vectors: Matrix,
    requested_k: usize,
}

impl LsaModel {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    /// The dimensionality asked for; larger than [`Self::k`] when the matrix
    /// rank was lower.
    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn doc_vector(&self, doc_id: &str) -> Option<&[f64]> {
        self.positions.get(doc_id).map(|&i| self.doc_vectors.row(i))
    }

    /// Projects a query into the latent space:
    /// `diag(1/s) U^T q` with `q` the TF-IDF weighted query.
    ///
    /// `None` when the query shares no weighted term with the collection.
    pub fn fold_in<T: AsRef<str>>(&self, query: &[T]) -> Option<Vec<f64>> {
        let k = self.k();
        let mut out = vec![0.0; k];
        let mut any = false;
        for t in query {
            let Some(&row) = self.term_rows.get(t.as_ref()) else {
                continue;
            };
            let w = self.idf[row];
            if w == 0.0 {
                continue;
            }
            any = true;
            linalg::axpy(w, self.term_vectors.row(row), &mut out);
        }
        if !any {
            return None;
        }
        for (x, s) in out.iter_mut().zip(&self.singular_values) {
            *x /= s;
        }
        Some(out)
    }

    /// Rank-k reconstruction of the weighted term-document matrix
    /// (terms in lexicographic order, documents in index order).
    pub fn reconstruct(&self) -> Matrix {
        linalg::Svd {
            u: self.term_vectors.clone(),
            singular_values: self.singular_values.clone(),
            v: self.doc_vectors.clone(),
        }
        .reconstruct()
    }
}

/// TF-IDF (`tf * ln(N / df)`) term-document matrix, terms in lexicographic
/// order and documents in index order.
pub fn tfidf_matrix(index: &LexicalIndex) -> Matrix {
    let terms: Vec<&str> = index.terms().collect();
    let n = index.num_docs();
    let mut m = Matrix::zeros(terms.len(), n);
    for (row, t) in terms.iter().enumerate() {
        let idf = libm::log(n as f64 / index.df(t) as f64);
        for (col, tf_map) in index.tf.iter().enumerate() {
            if let Some(&tf) = tf_map.get(*t) {
                m.set(row, col, tf as f64 * idf);
            }
        }
    }
    m
}

/// Fits LSA with `k` latent dimensions. A `k` above the matrix rank is
/// reduced to the rank with a warning.
pub fn lsa_train(index: &LexicalIndex, k: usize) -> Result<LsaModel, LexicalError> {
    if k == 0 {
        return Err(LexicalError::ZeroRank);
    }
    let a = tfidf_matrix(index);
    let svd = linalg::svd(&a);
    if svd.rank() == 0 {
        return Err(LexicalError::EmptyMatrix);
    }
    if k > svd.rank() {
        log::warn!("LSA k={} exceeds matrix rank {}; using {}", k, svd.rank(), svd.rank());
    }
    let svd = svd.truncate(k);
    let n = index.num_docs() as f64;
    let mut term_rows = BTreeMap::new();
    let mut idf = Vec::new();
    for (row, t) in index.terms().enumerate() {
        term_rows.insert(t.to_string(), row);
        idf.push(libm::log(n / index.df(t) as f64));
    }
    Ok(LsaModel {
        term_rows,
        idf,
        term_vectors: svd.u,
        singular_values: svd.singular_values,
        doc_ids: index.doc_ids.clone(),
        positions: index.positions.clone(),
        doc_vectors: svd.v,
        requested_k: k,
    })
}

/// Cosine between the folded-in query and the document's latent vector.
///
/// `Ok(None)` means undefined: the query has no weighted collection term or
/// the document's latent vector is zero.
pub fn lsa_score<T: AsRef<str>>(query: &[T], doc_id: &str, model: &LsaModel) -> Result<Option<f64>, LexicalError> {
    let doc = model
        .doc_vector(doc_id)
        .ok_or_else(|| LexicalError::UnknownDocument(doc_id.to_string()))?;
    Ok(model
        .fold_in(query)
        .and_then(|q| crate::embeddings::cosine(&q, doc).ok()))
}

pub fn rank_lsa<T: AsRef<str>, D: AsRef<str>>(
    query_id: &str,
    query: &[T],
    candidates: &[D],
    model: &LsaModel,
) -> Result<ScoredList, LexicalError> {
    let q = model.fold_in(query);
    let mut scored = Vec::with_capacity(candidates.len());
    for d in candidates {
        let doc = model
            .doc_vector(d.as_ref())
            .ok_or_else(|| LexicalError::UnknownDocument(d.as_ref().to_string()))?;
        let s = q.as_ref().and_then(|q| crate::embeddings::cosine(q, doc).ok());
        scored.push((d.as_ref().to_string(), s));
    }
    Ok(ScoredList::from_scores(query_id, scored))
}
