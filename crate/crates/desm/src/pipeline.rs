//! Scoring whole query sets against candidate lists.

use std::collections::BTreeMap;

use desm_core::desm::{self, CentroidIndex};
use desm_core::eval::{make_candidate_sets, CandidateMode, Judgments};
use desm_core::lexical::{self, Bm25Config, LexicalIndex, LsaModel};
use desm_core::mixture::ComponentScores;
use desm_core::{DualEmbedding, ScoredList, SpacePair};

use crate::Error;

/// Tokenized `(id, tokens)` records.
pub type Records = Vec<(String, Vec<String>)>;

/// Candidate documents per query.
pub type Candidates = BTreeMap<String, Vec<String>>;

/// Telescoped sets come from `judged`; full sets pair every query with every
/// document in `docs`.
pub fn candidates(mode: CandidateMode, judged: &Judgments, docs: &Records) -> Candidates {
    let ids: Vec<&str> = docs.iter().map(|(id, _)| id.as_str()).collect();
    match mode {
        CandidateMode::Telescoped => make_candidate_sets(mode, judged, &ids),
        CandidateMode::Full => {
            let mut all: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
            all.sort();
            judged.queries().map(|q| (q.to_string(), all.clone())).collect()
        }
    }
}

/// Same as [`candidates`] in full mode, for queries without judgments.
pub fn full_candidates<'a>(queries: impl IntoIterator<Item = &'a str>, docs: &Records) -> Candidates {
    let mut all: Vec<String> = docs.iter().map(|(id, _)| id.clone()).collect();
    all.sort();
    queries.into_iter().map(|q| (q.to_string(), all.clone())).collect()
}

fn each_query<'q, F>(queries: &'q Records, cands: &Candidates, mut f: F) -> Result<Vec<ScoredList>, Error>
where
    F: FnMut(&'q str, &'q [String], &[String]) -> Result<ScoredList, Error>,
{
    let mut out = Vec::new();
    for (qid, tokens) in queries {
        if let Some(docs) = cands.get(qid) {
            out.push(f(qid, tokens, docs)?);
        }
    }
    Ok(out)
}

pub fn desm_runs(
    queries: &Records,
    cands: &Candidates,
    index: &CentroidIndex,
    emb: &DualEmbedding,
    variant: SpacePair,
) -> Result<Vec<ScoredList>, Error> {
    each_query(queries, cands, |qid, q, docs| match desm::rank(qid, q, docs, index, emb, variant) {
        Ok(list) => Ok(list),
        Err(e) if e.is_undefined() => Ok(ScoredList::from_scores(qid, docs.iter().map(|d| (d.clone(), None)))),
        Err(e) => Err(e.into()),
    })
}

pub fn bm25_runs(queries: &Records, cands: &Candidates, index: &LexicalIndex, cfg: &Bm25Config) -> Result<Vec<ScoredList>, Error> {
    each_query(queries, cands, |qid, q, docs| Ok(lexical::rank_bm25(qid, q, docs, index, cfg)?))
}

pub fn lsa_runs(queries: &Records, cands: &Candidates, model: &LsaModel) -> Result<Vec<ScoredList>, Error> {
    each_query(queries, cands, |qid, q, docs| Ok(lexical::rank_lsa(qid, q, docs, model)?))
}

/// DESM and BM25 scores side by side for mixing.
pub fn components(
    queries: &Records,
    cands: &Candidates,
    index: &CentroidIndex,
    emb: &DualEmbedding,
    variant: SpacePair,
    lexical_index: &LexicalIndex,
    cfg: &Bm25Config,
) -> Result<Vec<ComponentScores>, Error> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (qid, q) in queries {
        let Some(docs) = cands.get(qid) else {
            continue;
        };
        let prepared = desm::PreparedQuery::new(q, emb, variant)?;
        let mut d_scores = Vec::with_capacity(docs.len());
        let mut b_scores = Vec::with_capacity(docs.len());
        for d in docs {
            d_scores.push(match prepared.score(d, index) {
                Ok(s) => Some(s),
                Err(e) if e.is_undefined() => None,
                Err(e) => return Err(e.into()),
            });
            b_scores.push(lexical::bm25_score(q, d, lexical_index, cfg)?);
        }
        out.push(ComponentScores::new(qid.clone(), docs.clone(), d_scores, b_scores)?);
    }
    Ok(out)
}

pub fn mixture_runs(components: &[ComponentScores], alpha: f64) -> Result<Vec<ScoredList>, Error> {
    components.iter().map(|c| Ok(c.mix(alpha)?)).collect()
}
