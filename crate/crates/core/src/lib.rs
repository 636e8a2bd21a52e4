//! Dual embedding space document ranking.
//!
//! A CBOW model trained with negative sampling learns two matrices: the
//! IN (context) projection and the OUT (target) projection. Keeping both
//! lets documents be scored by how close each query word's IN vector sits
//! to the centroid of the document's OUT vectors, which rewards documents
//! that are *about* the query rather than ones that merely repeat it.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithm:
//!
//! * [`corpus`]: tokenization and the shared vocabulary
//! * [`cbow`]: the negative-sampling trainer that keeps both matrices
//! * [`embeddings`]: the dual matrices, cosine similarity, neighbor lists
//! * [`desm`]: document centroids and dual-space scoring
//! * [`lexical`]: BM25 and LSA baselines
//! * [`mixture`]: the linear DESM/BM25 blend and its alpha sweep
//! * [`eval`]: NDCG, paired t-tests and candidate-set construction
//! * [`analysis`]: perturbation reports, 2-D projections, score histograms
//!
//! File formats, the parallel trainer and the command line live in the
//! companion `desm` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod cbow;
pub mod corpus;
pub mod desm;
pub mod embeddings;
pub mod eval;
pub mod lexical;
pub mod linalg;
pub mod mixture;
pub mod ranking;

pub use cbow::{NegativeDistribution, TrainerConfig};
pub use corpus::{tokenize, Vocabulary};
pub use desm::CentroidIndex;
pub use embeddings::{DualEmbedding, Space, SpacePair};
pub use eval::{Judgments, RunFile};
pub use lexical::{Bm25Config, LexicalIndex, LsaModel};
pub use ranking::ScoredList;

/// Integer id of a vocabulary term.
pub type TermId = u32;
