//! Linear mixture of DESM and BM25 scores, and the weight sweep.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::eval::{ndcg_at_k, Judgments};
use crate::ranking::ScoredList;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MixtureError {
    #[error("mixture weight {0} is outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("sweep step {0} must be in (0, 1]")]
    InvalidStep(f64),
    #[error("component lists for query `{0}` have different lengths")]
    LengthMismatch(String),
    #[error("no candidate of any query has a judgment")]
    NoJudgedCandidates,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
}

/// `alpha * desm + (1 - alpha) * bm25`.
///
/// An undefined DESM score drops its term, so the result is the BM25 part
/// alone; at `alpha = 1` the result is undefined.
pub fn mm_score(alpha: f64, desm: Option<f64>, bm25: f64) -> Result<Option<f64>, MixtureError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MixtureError::InvalidAlpha(alpha));
    }
    Ok(match desm {
        Some(d) => Some(alpha * d + (1.0 - alpha) * bm25),
        None if alpha == 1.0 => None,
        None => Some((1.0 - alpha) * bm25),
    })
}

/// Both component scores for one query's candidates, aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub desm: Vec<Option<f64>>,
    pub bm25: Vec<f64>,
}

impl ComponentScores {
    pub fn new(
        query_id: impl Into<String>,
        doc_ids: Vec<String>,
        desm: Vec<Option<f64>>,
        bm25: Vec<f64>,
    ) -> Result<Self, MixtureError> {
        let query_id = query_id.into();
        if doc_ids.len() != desm.len() || doc_ids.len() != bm25.len() {
            return Err(MixtureError::LengthMismatch(query_id));
        }
        Ok(ComponentScores {
            query_id,
            doc_ids,
            desm,
            bm25,
        })
    }

    pub fn mix(&self, alpha: f64) -> Result<ScoredList, MixtureError> {
        let mut scores = Vec::with_capacity(self.doc_ids.len());
        for ((d, &desm), &bm25) in self.doc_ids.iter().zip(&self.desm).zip(&self.bm25) {
            scores.push((d.clone(), mm_score(alpha, desm, bm25)?));
        }
        Ok(ScoredList::from_scores(self.query_id.clone(), scores))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_alpha: f64,
    pub best_value: f64,
    /// `(alpha, mean NDCG@cutoff)` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

/// Evaluates `alpha = i / n` for `n = round(1 / step)` and returns the
/// weight with the highest mean NDCG@`cutoff` over judged queries. Ties go
/// to the smaller weight.
pub fn sweep_alpha(
    components: &[ComponentScores],
    judgments: &Judgments,
    step: f64,
    cutoff: usize,
) -> Result<SweepResult, MixtureError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(MixtureError::InvalidStep(step));
    }
    if cutoff == 0 {
        return Err(MixtureError::ZeroCutoff);
    }
    let judged: Vec<_> = components
        .iter()
        .filter_map(|c| judgments.for_query(&c.query_id).map(|j| (c, j)))
        .collect();
    let any_judged = judged
        .iter()
        .any(|(c, j)| c.doc_ids.iter().any(|d| j.contains_key(d)));
    if !any_judged {
        return Err(MixtureError::NoJudgedCandidates);
    }
    let n = libm::round(1.0 / step).max(1.0) as usize;
    let mut grid = Vec::with_capacity(n + 1);
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=n {
        let alpha = i as f64 / n as f64;
        let mut total = 0.0;
        for (c, j) in &judged {
            let list = c.mix(alpha)?;
            total += ndcg_at_k(&list.doc_ids(), Some(j), cutoff);
        }
        let mean = total / judged.len() as f64;
        if mean > best.1 {
            best = (alpha, mean);
        }
        grid.push((alpha, mean));
    }
    Ok(SweepResult {
        best_alpha: best.0,
        best_value: best.1,
        grid,
    })
}
