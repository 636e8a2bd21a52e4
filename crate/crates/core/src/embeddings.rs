//! The IN and OUT embedding matrices and similarity queries over them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::linalg::{dot, norm, Matrix};
use crate::TermId;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("cosine is undefined for a zero-norm vector")]
    ZeroVector,
    #[error("vectors have different lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("word `{0}` is not in the vocabulary")]
    UnknownWord(String),
    #[error("matrix shape {rows}x{cols} does not match vocabulary size {vocab} and dimension {dim}")]
    Shape {
        rows: usize,
        cols: usize,
        vocab: usize,
        dim: usize,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown space `{0}`")]
    ParseSpace(String),
}

/// One of the two embedding matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    In,
    Out,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::In => "in",
            Space::Out => "out",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Space {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(Space::In),
            "out" => Ok(Space::Out),
            _ => Err(EmbeddingError::ParseSpace(s.to_string())),
        }
    }
}

/// Which space the first (query/probe) word is looked up in and which
/// space it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpacePair {
    InIn,
    OutOut,
    InOut,
    OutIn,
}

impl SpacePair {
    pub const ALL: [SpacePair; 4] = [SpacePair::InIn, SpacePair::OutOut, SpacePair::InOut, SpacePair::OutIn];

    pub fn new(first: Space, second: Space) -> Self {
        match (first, second) {
            (Space::In, Space::In) => SpacePair::InIn,
            (Space::Out, Space::Out) => SpacePair::OutOut,
            (Space::In, Space::Out) => SpacePair::InOut,
            (Space::Out, Space::In) => SpacePair::OutIn,
        }
    }

    pub fn first(self) -> Space {
        match self {
            SpacePair::InIn | SpacePair::InOut => Space::In,
            SpacePair::OutOut | SpacePair::OutIn => Space::Out,
        }
    }

    pub fn second(self) -> Space {
        match self {
            SpacePair::InIn | SpacePair::OutIn => Space::In,
            SpacePair::OutOut | SpacePair::InOut => Space::Out,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpacePair::InIn => "in-in",
            SpacePair::OutOut => "out-out",
            SpacePair::InOut => "in-out",
            SpacePair::OutIn => "out-in",
        }
    }
}

impl fmt::Display for SpacePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpacePair {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        let (a, b) = lower
            .split_once('-')
            .ok_or_else(|| EmbeddingError::ParseSpace(s.to_string()))?;
        Ok(SpacePair::new(a.parse()?, b.parse()?))
    }
}

/// Both CBOW weight matrices over one vocabulary. Row `i` of each matrix
/// belongs to term id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEmbedding {
    vocab: Vocabulary,
    w_in: Matrix,
    w_out: Matrix,
}

impl DualEmbedding {
    pub fn new(vocab: Vocabulary, w_in: Matrix, w_out: Matrix) -> Result<Self, EmbeddingError> {
        let dim = w_in.cols();
        for m in [&w_in, &w_out] {
            if m.rows() != vocab.len() || m.cols() != dim {
                return Err(EmbeddingError::Shape {
                    rows: m.rows(),
                    cols: m.cols(),
                    vocab: vocab.len(),
                    dim,
                });
            }
        }
        Ok(DualEmbedding { vocab, w_in, w_out })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn matrix(&self, space: Space) -> &Matrix {
        match space {
            Space::In => &self.w_in,
            Space::Out => &self.w_out,
        }
    }

    pub fn matrix_mut(&mut self, space: Space) -> &mut Matrix {
        match space {
            Space::In => &mut self.w_in,
            Space::Out => &mut self.w_out,
        }
    }

    pub fn vector(&self, space: Space, id: TermId) -> &[f64] {
        self.matrix(space).row(id as usize)
    }

    /// Vector of `word` in `space`, if the word is in the vocabulary.
    pub fn word_vector(&self, space: Space, word: &str) -> Option<&[f64]> {
        self.vocab.id(word).map(|id| self.vector(space, id))
    }

    pub fn into_parts(self) -> (Vocabulary, Matrix, Matrix) {
        (self.vocab, self.w_in, self.w_out)
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
///
/// A zero-norm argument is an error, never a similarity of 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: TermId,
    pub term: String,
    pub similarity: f64,
}

/// The `k` vocabulary words closest to `word` under `pair`.
///
/// `word` is looked up in `pair.first()` and compared against every word's
/// vector in `pair.second()`. The word itself is not excluded. Ties go to
/// the lower id; words whose vector is all zeros are skipped.
pub fn nearest_neighbors(
    emb: &DualEmbedding,
    word: &str,
    pair: SpacePair,
    k: usize,
) -> Result<Vec<Neighbor>, EmbeddingError> {
    if k == 0 {
        return Err(EmbeddingError::ZeroK);
    }
    let id = emb
        .vocab()
        .id(word)
        .ok_or_else(|| EmbeddingError::UnknownWord(word.to_string()))?;
    let probe = emb.vector(pair.first(), id);
    let probe_norm = norm(probe);
    if probe_norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let targets = emb.matrix(pair.second());
    let mut scored: Vec<(f64, TermId)> = (0..targets.rows())
        .filter_map(|j| {
            let row = targets.row(j);
            let n = norm(row);
            (n > 0.0).then(|| ((dot(probe, row) / (probe_norm * n)).clamp(-1.0, 1.0), j as TermId))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(similarity, id)| Neighbor {
            id,
            term: emb.vocab().term(id).unwrap_or_default().to_string(),
            similarity,
        })
        .collect())
}
