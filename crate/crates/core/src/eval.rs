//! Relevance judgments, run files, NDCG and paired significance tests.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use thiserror::Error;

use crate::ranking::ScoredList;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("grade {grade} for ({query}, {doc}) is outside the {scale} scale")]
    GradeOutOfScale {
        query: String,
        doc: String,
        grade: u8,
        scale: &'static str,
    },
    #[error("duplicate judgment for ({0}, {1})")]
    DuplicateJudgment(String, String),
    #[error("run is empty")]
    EmptyRun,
    #[error("no query in the run has judgments")]
    NoJudgedQueries,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a paired test needs at least two queries, got {0}")]
    TooFewSamples(usize),
    #[error("run for query `{query}` is malformed: {reason}")]
    MalformedRun { query: String, reason: &'static str },
    #[error("unknown candidate mode `{0}`")]
    ParseMode(String),
}

/// Allowed grade range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradeScale {
    /// Bad (0) .. Perfect (4).
    #[default]
    FivePoint,
    /// Clicked (1) or not (0).
    Binary,
}

impl GradeScale {
    pub fn max_grade(self) -> u8 {
        match self {
            GradeScale::FivePoint => 4,
            GradeScale::Binary => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            GradeScale::FivePoint => "five-point",
            GradeScale::Binary => "binary",
        }
    }
}

/// Graded relevance labels per (query, document).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Judgments {
    scale: GradeScale,
    by_query: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Judgments {
    pub fn new(scale: GradeScale) -> Self {
        Judgments {
            scale,
            by_query: BTreeMap::new(),
        }
    }

    pub fn scale(&self) -> GradeScale {
        self.scale
    }

    pub fn insert(&mut self, query: &str, doc: &str, grade: u8) -> Result<(), EvalError> {
        if grade > self.scale.max_grade() {
            return Err(EvalError::GradeOutOfScale {
                query: query.to_string(),
                doc: doc.to_string(),
                grade,
                scale: self.scale.name(),
            });
        }
        let docs = self.by_query.entry(query.to_string()).or_default();
        if docs.insert(doc.to_string(), grade).is_some() {
            return Err(EvalError::DuplicateJudgment(query.to_string(), doc.to_string()));
        }
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: &str) -> Option<u8> {
        self.by_query.get(query)?.get(doc).copied()
    }

    pub fn for_query(&self, query: &str) -> Option<&BTreeMap<String, u8>> {
        self.by_query.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every (query, doc, grade) triple in query then document order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.by_query
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }

    /// Keeps only the given queries.
    pub fn restrict<'a>(&self, queries: impl IntoIterator<Item = &'a str>) -> Judgments {
        let keep: BTreeSet<&str> = queries.into_iter().collect();
        Judgments {
            scale: self.scale,
            by_query: self
                .by_query
                .iter()
                .filter(|(q, _)| keep.contains(q.as_str()))
                .map(|(q, d)| (q.clone(), d.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    /// Undefined scores are stored as negative infinity.
    pub score: f64,
    pub tag: String,
}

/// Ranked output of a scorer for a set of queries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

impl RunFile {
    pub fn new() -> Self {
        RunFile::default()
    }

    pub fn from_lists<'a>(lists: impl IntoIterator<Item = &'a ScoredList>, tag: &str) -> Self {
        let mut run = RunFile::new();
        for list in lists {
            run.push_list(list, tag);
        }
        run
    }

    pub fn push_list(&mut self, list: &ScoredList, tag: &str) {
        let entries = list
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| RunEntry {
                doc_id: e.doc_id.clone(),
                rank: i + 1,
                score: e.score.unwrap_or(f64::NEG_INFINITY),
                tag: tag.to_string(),
            })
            .collect();
        self.queries.insert(list.query_id.clone(), entries);
    }

    /// Adds one parsed line. Entries are re-sorted by rank in [`Self::finish`].
    pub fn push_entry(&mut self, query: &str, entry: RunEntry) {
        self.queries.entry(query.to_string()).or_default().push(entry);
    }

    /// Sorts entries by rank and checks ranks are `1..n` with non-increasing
    /// scores.
    pub fn finish(&mut self) -> Result<(), EvalError> {
        for (q, entries) in &mut self.queries {
            entries.sort_by_key(|e| e.rank);
            let malformed = |reason| EvalError::MalformedRun { query: q.clone(), reason };
            let mut seen = BTreeSet::new();
            for (i, e) in entries.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(malformed("ranks are not consecutive from 1"));
                }
                if !seen.insert(e.doc_id.as_str()) {
                    return Err(malformed("document listed twice"));
                }
            }
            if entries.windows(2).any(|w| w[0].score < w[1].score) {
                return Err(malformed("scores increase with rank"));
            }
        }
        Ok(())
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn entries(&self, query: &str) -> Option<&[RunEntry]> {
        self.queries.get(query).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.queries.iter().map(|(q, e)| (q.as_str(), e.as_slice()))
    }

    pub fn ranked_doc_ids(&self, query: &str) -> Vec<&str> {
        self.queries
            .get(query)
            .map(|e| e.iter().map(|x| x.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }
}

fn gain(grade: u8) -> f64 {
    libm::exp2(grade as f64) - 1.0
}

fn discount(rank: usize) -> f64 {
    libm::log2(rank as f64 + 1.0)
}

/// DCG of the first `k` grades, given in rank order.
pub fn dcg(grades_in_rank_order: &[u8], k: usize) -> f64 {
    grades_in_rank_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum()
}

/// NDCG@k with exponential gain `2^g - 1` and `log2(rank + 1)` discount.
///
/// The ideal ordering is taken over every judged document of the query,
/// retrieved or not. Unjudged documents have grade 0. A query without any
/// positive grade scores 0.
pub fn ndcg_at_k<D: AsRef<str>>(ranked: &[D], judged: Option<&BTreeMap<String, u8>>, k: usize) -> f64 {
    let Some(judged) = judged else {
        return 0.0;
    };
    let mut ideal: Vec<u8> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return 0.0;
    }
    let grades: Vec<u8> = ranked
        .iter()
        .take(k)
        .map(|d| judged.get(d.as_ref()).copied().unwrap_or(0))
        .collect();
    dcg(&grades, k) / idcg
}

/// Per-query and mean NDCG at each cutoff. Values are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub per_query: BTreeMap<String, Vec<f64>>,
    pub means: Vec<f64>,
    /// Run queries that had no judgments.
    pub skipped_queries: usize,
}

impl EvalReport {
    /// Per-query values at cutoff index `c`, in query order.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.per_query.values().map(|v| v[c]).collect()
    }

    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.means[i])
    }

    /// Two-sided paired t-test p-values against `baseline` per cutoff, over
    /// the queries both reports share.
    pub fn compare(&self, baseline: &EvalReport) -> Result<Vec<f64>, EvalError> {
        let shared: Vec<&String> = self
            .per_query
            .keys()
            .filter(|q| baseline.per_query.contains_key(*q))
            .collect();
        let mut out = Vec::with_capacity(self.cutoffs.len());
        for (i, k) in self.cutoffs.iter().enumerate() {
            let j = baseline.cutoffs.iter().position(|c| c == k).ok_or(EvalError::ZeroCutoff)?;
            let a: Vec<f64> = shared.iter().map(|q| self.per_query[*q][i]).collect();
            let b: Vec<f64> = shared.iter().map(|q| baseline.per_query[*q][j]).collect();
            out.push(paired_significance(&a, &b)?);
        }
        Ok(out)
    }

    /// `key=value` lines with means scaled by 100.
    pub fn key_values(&self, name: &str) -> String {
        let mut s = String::new();
        for (k, m) in self.cutoffs.iter().zip(&self.means) {
            let _ = writeln!(s, "{name}.ndcg@{k}={:.2}", m * 100.0);
        }
        let _ = writeln!(s, "{name}.queries={}", self.per_query.len());
        let _ = writeln!(s, "{name}.skipped_queries={}", self.skipped_queries);
        s
    }
}

/// Formats reports as an aligned table of NDCG x 100. When `p_values` is
/// given for a row, cells with `p < 0.05` get an asterisk.
pub fn format_table(rows: &[(&str, &EvalReport, Option<&[f64]>)]) -> String {
    let Some((_, first, _)) = rows.first() else {
        return String::new();
    };
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(3);
    let mut s = String::new();
    let _ = write!(s, "{:<name_w$}", "run");
    for k in &first.cutoffs {
        let _ = write!(s, "  {:>9}", format!("NDCG@{k}"));
    }
    s.push('\n');
    for (name, report, p) in rows {
        let _ = write!(s, "{name:<name_w$}");
        for (i, m) in report.means.iter().enumerate() {
            let star = match p {
                Some(p) if p.get(i).is_some_and(|&p| p < 0.05) => "*",
                _ => "",
            };
            let _ = write!(s, "  {:>9}", format!("{:05.2}{star}", m * 100.0));
        }
        s.push('\n');
    }
    s
}

/// NDCG of every judged run query at each cutoff.
pub fn evaluate_run(run: &RunFile, judgments: &Judgments, cutoffs: &[usize]) -> Result<EvalReport, EvalError> {
    if run.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    if cutoffs.contains(&0) {
        return Err(EvalError::ZeroCutoff);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = 0;
    for (q, entries) in run.iter() {
        let Some(judged) = judgments.for_query(q) else {
            skipped += 1;
            continue;
        };
        let ranked: Vec<&str> = entries.iter().map(|e| e.doc_id.as_str()).collect();
        let values = cutoffs.iter().map(|&k| ndcg_at_k(&ranked, Some(judged), k)).collect();
        per_query.insert(q.to_string(), values);
    }
    if per_query.is_empty() {
        return Err(EvalError::NoJudgedQueries);
    }
    let n = per_query.len() as f64;
    let means = (0..cutoffs.len())
        .map(|i| per_query.values().map(|v: &Vec<f64>| v[i]).sum::<f64>() / n)
        .collect();
    Ok(EvalReport {
        cutoffs: cutoffs.to_vec(),
        per_query,
        means,
        skipped_queries: skipped,
    })
}

/// Two-sided paired t-test p-value for per-query metrics `a` and `b`.
///
/// All-zero differences give 1; zero variance with a nonzero mean gives 0.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(1.0);
    }
    // Floating-point noise on a constant difference should still count as
    // zero variance.
    if var <= (f64::EPSILON * mean) * (f64::EPSILON * mean) * n as f64 {
        return Ok(if mean == 0.0 { 1.0 } else { 0.0 });
    }
    let t = mean / libm::sqrt(var / n as f64);
    Ok(student_t_two_sided(t, (n - 1) as f64))
}

/// `P(|T| >= |t|)` for Student's t with `nu` degrees of freedom.
pub fn student_t_two_sided(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    regularized_incomplete_beta(0.5 * nu, 0.5, x).clamp(0.0, 1.0)
}

/// `I_x(a, b)` via the continued fraction of Lentz's method.
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if libm::fabs(delta - 1.0) < 1e-15 {
            break;
        }
    }
    h
}

/// How candidate documents are chosen for each query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    /// Each query re-ranks only its own judged documents.
    Telescoped,
    /// Every query ranks every document in the collection.
    Full,
}

impl FromStr for CandidateMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "telescoped" => Ok(CandidateMode::Telescoped),
            "full" => Ok(CandidateMode::Full),
            _ => Err(EvalError::ParseMode(s.to_string())),
        }
    }
}

/// Candidate document ids per judged query, sorted by id.
pub fn make_candidate_sets<D: AsRef<str>>(
    mode: CandidateMode,
    judgments: &Judgments,
    all_doc_ids: &[D],
) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    match mode {
        CandidateMode::Telescoped => {
            for q in judgments.queries() {
                let docs = judgments.for_query(q).map(|d| d.keys().cloned().collect()).unwrap_or_default();
                out.insert(q.to_string(), docs);
            }
        }
        CandidateMode::Full => {
            let mut all: BTreeSet<String> = all_doc_ids.iter().map(|d| d.as_ref().to_string()).collect();
            for (_, d, _) in judgments.iter() {
                all.insert(d.to_string());
            }
            let all: Vec<String> = all.into_iter().collect();
            for q in judgments.queries() {
                out.insert(q.to_string(), all.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn judged(grades: &[(&str, u8)]) -> BTreeMap<String, u8> {
        grades.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn perfect_and_zero_rankings() {
        let j = judged(&[("a", 3), ("b", 2), ("c", 0), ("d", 1)]);
        assert!((ndcg_at_k(&["a", "b", "d", "c"], Some(&j), 4) - 1.0).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&["c", "x", "y"], Some(&j), 3), 0.0);
        let none = judged(&[("a", 0)]);
        assert_eq!(ndcg_at_k(&["a"], Some(&none), 1), 0.0);
        assert_eq!(ndcg_at_k(&["a"], None, 1), 0.0);
    }

    fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn grades_3201_against_brute_force() {
        let j = judged(&[("a", 3), ("b", 2), ("c", 0), ("d", 1)]);
        let ranked = ["a", "b", "c", "d"];
        let brute_dcg = |g: &[u8]| -> f64 {
            g.iter()
                .enumerate()
                .map(|(i, &x)| ((1u32 << x) - 1) as f64 / ((i + 2) as f64).log2())
                .sum()
        };
        let idcg = permutations(&[3, 2, 0, 1]).iter().map(|p| brute_dcg(p)).fold(0.0, f64::max);
        let expected = brute_dcg(&[3, 2, 0, 1]) / idcg;
        assert!((ndcg_at_k(&ranked, Some(&j), 4) - expected).abs() < 1e-15);
        // hand value: (7 + 3/log2 3 + 1/log2 5) / (7 + 3/log2 3 + 1/2)
        assert!((expected - 0.992_619_504_174_701_9).abs() < 1e-12);
    }

    #[test]
    fn judgments_validation() {
        let mut j = Judgments::new(GradeScale::FivePoint);
        j.insert("q", "d", 4).unwrap();
        assert!(matches!(j.insert("q", "e", 5), Err(EvalError::GradeOutOfScale { .. })));
        assert_eq!(j.insert("q", "d", 1), Err(EvalError::DuplicateJudgment("q".into(), "d".into())));
        let mut b = Judgments::new(GradeScale::Binary);
        assert!(b.insert("q", "d", 2).is_err());
        b.insert("q", "d", 1).unwrap();
    }

    fn run_of(lists: &[(&str, &[&str])]) -> RunFile {
        let lists: Vec<ScoredList> = lists
            .iter()
            .map(|(q, docs)| {
                ScoredList::from_scores(
                    *q,
                    docs.iter().enumerate().map(|(i, d)| (d.to_string(), Some(-(i as f64)))),
                )
            })
            .collect();
        RunFile::from_lists(&lists, "t")
    }

    #[test]
    fn evaluate_examples() {
        let mut j = Judgments::new(GradeScale::FivePoint);
        j.insert("q1", "a", 2).unwrap();
        j.insert("q1", "b", 1).unwrap();
        let report = evaluate_run(&run_of(&[("q1", &["a", "b"])]), &j, &[1, 3, 10]).unwrap();
        assert_eq!(report.means, vec![1.0, 1.0, 1.0]);
        assert!(report.key_values("bm25").contains("bm25.ndcg@10=100.00"));

        assert_eq!(evaluate_run(&RunFile::new(), &j, &[1]), Err(EvalError::EmptyRun));
        assert_eq!(evaluate_run(&run_of(&[("zz", &["a"])]), &j, &[1]), Err(EvalError::NoJudgedQueries));

        let with_unjudged = evaluate_run(&run_of(&[("q1", &["a"]), ("q9", &["a"])]), &j, &[1]).unwrap();
        assert_eq!(with_unjudged.skipped_queries, 1);
    }

    #[test]
    fn mean_of_point_four_and_point_six() {
        let mut per_query = BTreeMap::new();
        per_query.insert("a".to_string(), vec![0.4]);
        per_query.insert("b".to_string(), vec![0.6]);
        let n = per_query.len() as f64;
        let mean = per_query.values().map(|v: &Vec<f64>| v[0]).sum::<f64>() / n;
        let report = EvalReport { cutoffs: vec![10], per_query, means: vec![mean], skipped_queries: 0 };
        assert!(report.key_values("x").contains("x.ndcg@10=50.00"));
    }

    #[test]
    fn table_layout() {
        let mut j = Judgments::new(GradeScale::Binary);
        j.insert("q1", "a", 1).unwrap();
        j.insert("q2", "b", 1).unwrap();
        let good = evaluate_run(&run_of(&[("q1", &["a", "x"]), ("q2", &["b", "y"])]), &j, &[1, 3]).unwrap();
        let bad = evaluate_run(&run_of(&[("q1", &["x", "a"]), ("q2", &["y", "b"])]), &j, &[1, 3]).unwrap();
        let p = good.compare(&bad).unwrap();
        let table = format_table(&[("bm25", &bad, None), ("desm", &good, Some(&p))]);
        assert!(table.starts_with("run "));
        assert!(table.contains("NDCG@1"));
        assert!(table.contains("100.00*"));
        assert!(table.contains("00.00"));
    }

    #[test]
    fn significance_degenerate_cases() {
        let a = [0.1, 0.5, 0.3];
        assert_eq!(paired_significance(&a, &a).unwrap(), 1.0);
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.01 + 0.1).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.05).collect();
        assert!(paired_significance(&a, &b).unwrap() < 1e-6);
        assert_eq!(paired_significance(&[1.0], &[0.0]), Err(EvalError::TooFewSamples(1)));
        assert_eq!(paired_significance(&[1.0, 2.0], &[0.0]), Err(EvalError::LengthMismatch(2, 1)));
    }

    #[test]
    fn significance_matches_reference_distribution() {
        use rand::{Rng, SeedableRng};
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for trial in 0..40 {
            let n = 2 + trial % 30;
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(-0.3..0.25)).collect();
            let p = paired_significance(&a, &b).unwrap();

            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let t = mean / (sd / (n as f64).sqrt());
            let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
            let oracle = 2.0 * (1.0 - dist.cdf(t.abs()));
            assert!((p - oracle).abs() < 1e-6, "n={n}: {p} vs {oracle}");
        }
    }

    #[test]
    fn candidate_sets() {
        let mut j = Judgments::new(GradeScale::FivePoint);
        for d in ["a", "b", "c", "d", "e"] {
            j.insert("q1", d, 1).unwrap();
        }
        j.insert("q2", "z", 0).unwrap();
        let tele = make_candidate_sets(CandidateMode::Telescoped, &j, &["a", "m"]);
        assert_eq!(tele["q1"].len(), 5);
        assert_eq!(tele["q2"], vec!["z".to_string()]);

        let all: Vec<String> = (0..42_573).map(|i| alloc::format!("doc{i}")).collect();
        let full = make_candidate_sets(CandidateMode::Full, &j, &all);
        // judged documents outside the collection list are added too
        assert_eq!(full["q1"].len(), 42_573 + 6);
        assert_eq!(full["q1"], full["q2"]);
        for (q, docs) in &tele {
            assert!(docs.iter().all(|d| full[q].contains(d)));
        }
    }

    #[test]
    fn run_file_validation() {
        let mut run = RunFile::new();
        run.push_entry("q", RunEntry { doc_id: "b".into(), rank: 2, score: 0.5, tag: "t".into() });
        run.push_entry("q", RunEntry { doc_id: "a".into(), rank: 1, score: 0.9, tag: "t".into() });
        run.finish().unwrap();
        assert_eq!(run.ranked_doc_ids("q"), vec!["a", "b"]);
        run.push_entry("q", RunEntry { doc_id: "c".into(), rank: 4, score: 0.1, tag: "t".into() });
        assert!(run.finish().is_err());

        let mut bad = RunFile::new();
        bad.push_entry("q", RunEntry { doc_id: "a".into(), rank: 1, score: 0.1, tag: "t".into() });
        bad.push_entry("q", RunEntry { doc_id: "b".into(), rank: 2, score: 0.9, tag: "t".into() });
        assert!(bad.finish().is_err());
    }

    proptest! {
        #[test]
        fn ndcg_bounded_and_swap_improves(grades in prop::collection::vec(0u8..5, 2..10), pos in 0usize..9, k in 1usize..12) {
            let docs: Vec<String> = (0..grades.len()).map(|i| alloc::format!("d{i}")).collect();
            let j: BTreeMap<String, u8> = docs.iter().cloned().zip(grades.iter().copied()).collect();
            let v = ndcg_at_k(&docs, Some(&j), k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));

            let pos = pos % (grades.len() - 1);
            if grades[pos] < grades[pos + 1] && k >= pos + 2 {
                let mut swapped = docs.clone();
                swapped.swap(pos, pos + 1);
                prop_assert!(ndcg_at_k(&swapped, Some(&j), k) > v);
            }
        }

        #[test]
        fn evaluate_is_order_invariant(seed in 0u64..500) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut j = Judgments::new(GradeScale::FivePoint);
            let mut lists = Vec::new();
            for q in 0..6 {
                let qid = alloc::format!("q{q}");
                let mut docs: Vec<String> = (0..8).map(|d| alloc::format!("d{d}")).collect();
                for d in &docs {
                    if rng.gen_bool(0.6) {
                        j.insert(&qid, d, rng.gen_range(0..5)).unwrap();
                    }
                }
                docs.shuffle(&mut rng);
                lists.push(ScoredList::from_scores(qid, docs.into_iter().enumerate().map(|(i, d)| (d, Some(-(i as f64))))));
            }
            let forward = RunFile::from_lists(&lists, "t");
            lists.reverse();
            let backward = RunFile::from_lists(&lists, "t");
            let a = evaluate_run(&forward, &j, &[1, 3, 10]);
            let b = evaluate_run(&backward, &j, &[1, 3, 10]);
            prop_assert_eq!(a, b);
        }
    }
}
