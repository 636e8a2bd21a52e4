//! Ranked, scored candidate lists shared by every scorer.

use alloc::string::String;
use alloc::vec::Vec;

/// One ranked document. `score` is `None` when the scorer could not define
/// a score for it (for example a document with no in-vocabulary words).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: Option<f64>,
}

/// Documents for one query, best first.
///
/// Defined scores come first in descending order with ties broken by
/// ascending document id; undefined documents follow in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredList {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl ScoredList {
    /// Sorts `scores` into ranking order. Later duplicates of a document id
    /// are dropped.
    pub fn from_scores(query_id: impl Into<String>, scores: impl IntoIterator<Item = (String, Option<f64>)>) -> Self {
        let mut entries: Vec<ScoredDoc> = Vec::new();
        let mut seen = alloc::collections::BTreeSet::new();
        for (doc_id, score) in scores {
            if seen.insert(doc_id.clone()) {
                entries.push(ScoredDoc { doc_id, score });
            }
        }
        entries.sort_by(|a, b| match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.doc_id.cmp(&b.doc_id)),
            (Some(_), None) => core::cmp::Ordering::Less,
            (None, Some(_)) => core::cmp::Ordering::Greater,
            (None, None) => a.doc_id.cmp(&b.doc_id),
        });
        ScoredList {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    /// Keeps only the first `depth` entries.
    pub fn truncate(&mut self, depth: usize) {
        self.entries.truncate(depth);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn ordering_rules() {
        let list = ScoredList::from_scores(
            "q",
            vec![
                ("d3".to_string(), None),
                ("d2".to_string(), Some(0.5)),
                ("d1".to_string(), Some(0.5)),
                ("d0".to_string(), None),
                ("d4".to_string(), Some(0.9)),
                ("d5".to_string(), Some(-0.1)),
                ("d4".to_string(), Some(-5.0)),
            ],
        );
        assert_eq!(list.doc_ids(), vec!["d4", "d1", "d2", "d5", "d0", "d3"]);
        assert_eq!(list.entries[0].score, Some(0.9));
    }

    #[test]
    fn single_and_empty() {
        assert!(ScoredList::from_scores("q", Vec::new()).is_empty());
        let one = ScoredList::from_scores("q", vec![("d".to_string(), Some(1.0))]);
        assert_eq!(one.len(), 1);
    }
}
