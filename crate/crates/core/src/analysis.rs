//! Diagnostics: word perturbation tables, 2-D projections and per-class
//! score histograms. Everything here returns plain data for plotting.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::desm::{CentroidIndex, DesmError, PreparedQuery};
use crate::embeddings::{DualEmbedding, Space, SpacePair};
use crate::eval::Judgments;
use crate::linalg::{svd, Matrix};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("query term `{0}` is not in the vocabulary")]
    UnknownQueryTerm(String),
    #[error(transparent)]
    Desm(#[from] DesmError),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("histograms need at least one bin")]
    ZeroBins,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRow {
    pub label: String,
    /// `None` when the passage has no in-vocabulary token.
    pub in_out: Option<f64>,
    pub in_in: Option<f64>,
    pub tf: usize,
}

/// DESM IN-OUT, DESM IN-IN and raw query term count for each passage.
pub fn perturbation_report<L, T>(
    query: &str,
    passages: &[(L, Vec<T>)],
    emb: &DualEmbedding,
) -> Result<Vec<PerturbationRow>, AnalysisError>
where
    L: AsRef<str>,
    T: AsRef<str>,
{
    if emb.vocab().id(query).is_none() {
        return Err(AnalysisError::UnknownQueryTerm(query.to_string()));
    }
    let keyed = || {
        passages
            .iter()
            .enumerate()
            .map(|(i, (_, tokens))| (i.to_string(), tokens.iter().map(|t| t.as_ref()).collect::<Vec<&str>>()))
    };
    let out_index = CentroidIndex::build(keyed(), emb, Space::Out)?;
    let in_index = CentroidIndex::build(keyed(), emb, Space::In)?;
    let q_in_out = PreparedQuery::new(&[query], emb, SpacePair::InOut)?;
    let q_in_in = PreparedQuery::new(&[query], emb, SpacePair::InIn)?;

    let defined = |r: Result<f64, DesmError>| match r {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.is_undefined() => Ok(None),
        Err(e) => Err(e),
    };
    let mut rows = Vec::with_capacity(passages.len());
    for (i, (label, tokens)) in passages.iter().enumerate() {
        let key = i.to_string();
        rows.push(PerturbationRow {
            label: label.as_ref().to_string(),
            in_out: defined(q_in_out.score(&key, &out_index))?,
            in_in: defined(q_in_in.score(&key, &in_index))?,
            tf: tokens.iter().filter(|t| t.as_ref() == query).count(),
        });
    }
    Ok(rows)
}

/// Points projected onto their top two principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    /// Sample variance captured by each component.
    pub variances: [f64; 2],
    /// Sample variance of every component, largest first.
    pub all_variances: Vec<f64>,
    /// True when fewer than two directions carry variance; the missing
    /// coordinates are zero.
    pub degenerate: bool,
}

/// PCA of the rows of `points` down to two coordinates.
pub fn pca_2d(points: &Matrix) -> Result<Pca2d, AnalysisError> {
    let (n, d) = (points.rows(), points.cols());
    if n == 0 {
        return Err(AnalysisError::TooFewPoints { needed: 1, got: 0 });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(points.row(i)) {
            *m += x / n as f64;
        }
    }
    let mut centered = points.clone();
    for i in 0..n {
        for (x, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    let dec = svd(&centered);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let all_variances: Vec<f64> = dec.singular_values.iter().map(|s| s * s / denom).collect();
    let kept = dec.rank().min(2);
    let degenerate = kept < 2;
    if degenerate {
        log::warn!("point set has {kept} direction(s) with nonzero variance; padding with zeros");
    }
    let mut coords = vec![[0.0; 2]; n];
    for (i, c) in coords.iter_mut().enumerate() {
        for (j, cj) in c.iter_mut().enumerate().take(kept) {
            *cj = dec.u.get(i, j) * dec.singular_values[j];
        }
    }
    let mut variances = [0.0; 2];
    variances[..kept].copy_from_slice(&all_variances[..kept]);
    Ok(Pca2d {
        coords,
        variances,
        all_variances,
        degenerate,
    })
}

/// One query and the documents shown around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGroup {
    pub query_label: String,
    pub query_vector: Vec<f64>,
    /// `(label, centroid, grade)` per document.
    pub documents: Vec<(String, Vec<f64>, Option<u8>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub group: String,
    pub label: String,
    pub is_query: bool,
    pub grade: Option<u8>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionExport {
    pub points: Vec<ProjectedPoint>,
    pub variances: [f64; 2],
    pub degenerate: bool,
}

/// Places every query at the origin and each of its documents at
/// `centroid - query`, then projects all points with [`pca_2d`].
pub fn project_2d(groups: &[ProjectionGroup]) -> Result<ProjectionExport, AnalysisError> {
    let total: usize = groups.iter().map(|g| 1 + g.documents.len()).sum();
    if total < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: total });
    }
    let dim = groups[0].query_vector.len();
    let mut data = Vec::with_capacity(total * dim);
    let mut meta = Vec::with_capacity(total);
    let mut index = 0;
    let check = |v: &[f64], index: usize| {
        if v.len() == dim {
            Ok(())
        } else {
            Err(AnalysisError::DimensionMismatch {
                index,
                expected: dim,
                got: v.len(),
            })
        }
    };
    for g in groups {
        check(&g.query_vector, index)?;
        data.extend(core::iter::repeat_n(0.0, dim));
        meta.push((g.query_label.clone(), g.query_label.clone(), true, None));
        index += 1;
        for (label, v, grade) in &g.documents {
            check(v, index)?;
            data.extend(v.iter().zip(&g.query_vector).map(|(d, q)| d - q));
            meta.push((g.query_label.clone(), label.clone(), false, *grade));
            index += 1;
        }
    }
    let pca = pca_2d(&Matrix::from_vec(total, dim, data))?;
    let points = meta
        .into_iter()
        .zip(&pca.coords)
        .map(|((group, label, is_query, grade), c)| ProjectedPoint {
            group,
            label,
            is_query,
            grade,
            x: c[0],
            y: c[1],
        })
        .collect();
    Ok(ProjectionExport {
        points,
        variances: pca.variances,
        degenerate: pca.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelevanceClass {
    Relevant,
    JudgedIrrelevant,
    RandomIrrelevant,
}

impl RelevanceClass {
    pub const ALL: [RelevanceClass; 3] = [
        RelevanceClass::Relevant,
        RelevanceClass::JudgedIrrelevant,
        RelevanceClass::RandomIrrelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceClass::Relevant => "relevant",
            RelevanceClass::JudgedIrrelevant => "judged_irrelevant",
            RelevanceClass::RandomIrrelevant => "random_irrelevant",
        }
    }

    /// Grades at or above `min_relevant` are relevant; other judged
    /// documents are judged-irrelevant; unjudged ones are random.
    pub fn assign(grade: Option<u8>, min_relevant: u8) -> Self {
        match grade {
            Some(g) if g >= min_relevant => RelevanceClass::Relevant,
            Some(_) => RelevanceClass::JudgedIrrelevant,
            None => RelevanceClass::RandomIrrelevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassHistogram {
    pub class: RelevanceClass,
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: f64,
    /// Sample variance; 0 for fewer than two scores.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution {
    pub feature: String,
    /// `bins + 1` shared edges. The last bin is closed on the right.
    pub edges: Vec<f64>,
    pub classes: Vec<ClassHistogram>,
}

/// Scores of one feature as `(query, doc, score)` triples.
pub type FeatureScores = (String, Vec<(String, String, Option<f64>)>);

/// Histograms and summary statistics of each feature split by relevance
/// class. Undefined and non-finite scores are left out.
pub fn score_distributions(
    features: &[FeatureScores],
    judgments: &Judgments,
    min_relevant: u8,
    bins: usize,
) -> Result<Vec<FeatureDistribution>, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::ZeroBins);
    }
    let mut out = Vec::with_capacity(features.len());
    for (name, scores) in features {
        let mut by_class: BTreeMap<RelevanceClass, Vec<f64>> = BTreeMap::new();
        for (q, d, s) in scores {
            let Some(s) = s.filter(|s| s.is_finite()) else {
                continue;
            };
            let class = RelevanceClass::assign(judgments.grade(q, d), min_relevant);
            by_class.entry(class).or_default().push(s);
        }
        let edges = bin_edges(by_class.values().flatten().copied(), bins);
        let classes = RelevanceClass::ALL
            .iter()
            .map(|&class| {
                let values = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
                if values.is_empty() {
                    log::warn!("feature {name}: class {} is empty", class.as_str());
                }
                histogram(class, values, &edges)
            })
            .collect();
        out.push(FeatureDistribution {
            feature: name.clone(),
            edges,
            classes,
        });
    }
    Ok(out)
}

fn bin_edges(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

fn histogram(class: RelevanceClass, values: &[f64], edges: &[f64]) -> ClassHistogram {
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in values {
        let i = edges[1..].partition_point(|&e| e <= v).min(bins - 1);
        counts[i] += 1;
    }
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let variance = if n < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    };
    ClassHistogram {
        class,
        counts,
        n,
        mean,
        variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::eval::GradeScale;
    use alloc::format;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn embedding(seed: u64) -> DualEmbedding {
        let terms = ["cambridge", "university", "giraffe", "city", "the"];
        let vocab = Vocabulary::from_terms(terms.iter().map(|t| t.to_string()).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || Matrix::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (a, b) = (m(), m());
        DualEmbedding::new(vocab, a, b).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn perturbation_examples() {
        let emb = embedding(3);
        let passages = vec![
            ("only", toks("cambridge cambridge cambridge")),
            ("mixed", toks("the cambridge university city cambridge")),
            ("oov", toks("zzz qqq")),
            ("swapped", toks("the cambridge university xxx cambridge")),
        ];
        let rows = perturbation_report("cambridge", &passages, &emb).unwrap();
        assert_eq!(rows[0].tf, 3);
        assert!((rows[0].in_in.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rows[2].in_out, None);
        assert_eq!(rows[2].in_in, None);
        assert_eq!(rows[2].tf, 0);
        assert_eq!(rows[1].tf, rows[3].tf);
        assert_eq!(rows[1].label, "mixed");
        assert!(matches!(
            perturbation_report("nope", &passages, &emb),
            Err(AnalysisError::UnknownQueryTerm(_))
        ));
    }

    #[test]
    fn perturbation_matches_direct_scoring() {
        let emb = embedding(9);
        let passage = toks("city university the giraffe cambridge");
        let rows = perturbation_report("cambridge", &[("p", passage.clone())], &emb).unwrap();
        let idx = CentroidIndex::build([("p".to_string(), passage)], &emb, Space::Out).unwrap();
        let direct = crate::desm::desm_score(&["cambridge"], "p", &idx, &emb, SpacePair::InOut).unwrap();
        assert_eq!(rows[0].in_out, Some(direct));
    }

    fn pairwise(coords: &[[f64; 2]]) -> Vec<f64> {
        let mut out = Vec::new();
        for a in coords {
            for b in coords {
                out.push(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        out
    }

    #[test]
    fn two_dimensional_input_is_rotated_only() {
        let pts = [[1.0, 2.0], [-1.5, 0.5], [0.5, -2.0], [0.0, -0.5]];
        let m = Matrix::from_vec(4, 2, pts.iter().flatten().copied().collect());
        let pca = pca_2d(&m).unwrap();
        assert!(!pca.degenerate);
        for (a, b) in pairwise(&pts).iter().zip(pairwise(&pca.coords)) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(pca.variances[0] >= pca.variances[1]);
    }

    #[test]
    fn identical_points_give_origin() {
        let m = Matrix::from_vec(5, 3, [0.3, -1.0, 2.0].repeat(5));
        let pca = pca_2d(&m).unwrap();
        assert!(pca.degenerate);
        assert!(pca.coords.iter().all(|c| c == &[0.0, 0.0]));
    }

    #[test]
    fn collinear_points_pad_second_axis() {
        let m = Matrix::from_vec(3, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let pca = pca_2d(&m).unwrap();
        assert!(pca.degenerate);
        assert!(pca.coords.iter().all(|c| c[1] == 0.0));
        assert!(((pca.coords[2][0] - pca.coords[0][0]).abs() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn captured_variance_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (n, d) = (50, 10);
        let data: Vec<f64> = (0..n * d).map(|i| rng.gen_range(-1.0..1.0) * (1.0 + (i % d) as f64)).collect();
        let pca = pca_2d(&Matrix::from_vec(n, d, data.clone())).unwrap();

        let x = nalgebra::DMatrix::from_row_slice(n, d, &data);
        let mean = x.row_mean();
        let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!((pca.variances[0] - eig[0]).abs() < 1e-6);
        assert!((pca.variances[1] - eig[1]).abs() < 1e-6);
        for w in pca.all_variances.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // projected coordinates carry exactly the captured variance
        let var0 = pca.coords.iter().map(|c| c[0] * c[0]).sum::<f64>() / (n as f64 - 1.0);
        assert!((var0 - eig[0]).abs() < 1e-6);
    }

    #[test]
    fn projection_places_queries_before_pca() {
        let groups = vec![
            ProjectionGroup {
                query_label: "q1".into(),
                query_vector: vec![1.0, 0.0, 0.0],
                documents: vec![("a".into(), vec![1.0, 1.0, 0.0], Some(3)), ("b".into(), vec![0.0, 0.0, 1.0], Some(0))],
            },
            ProjectionGroup {
                query_label: "q2".into(),
                query_vector: vec![0.0, 2.0, 0.0],
                documents: vec![("c".into(), vec![0.0, 3.0, 0.0], None)],
            },
        ];
        let export = project_2d(&groups).unwrap();
        assert_eq!(export.points.len(), 5);
        let queries: Vec<_> = export.points.iter().filter(|p| p.is_query).collect();
        assert_eq!(queries.len(), 2);
        // both queries are the same point (the origin) before centering
        assert!((queries[0].x - queries[1].x).abs() < 1e-12);
        assert!((queries[0].y - queries[1].y).abs() < 1e-12);
        // "a" and "c" are both the unit y offset from their query
        let a = export.points.iter().find(|p| p.label == "a").unwrap();
        let c = export.points.iter().find(|p| p.label == "c").unwrap();
        assert!((a.x - c.x).abs() < 1e-12 && (a.y - c.y).abs() < 1e-12);
        assert_eq!(a.grade, Some(3));

        assert!(matches!(project_2d(&groups[1..]), Err(AnalysisError::TooFewPoints { .. })));
        let mut bad = groups.clone();
        bad[1].documents[0].1 = vec![1.0];
        assert!(matches!(project_2d(&bad), Err(AnalysisError::DimensionMismatch { index: 4, .. })));
    }

    fn judgments() -> Judgments {
        let mut j = Judgments::new(GradeScale::FivePoint);
        j.insert("q", "rel", 3).unwrap();
        j.insert("q", "irr", 1).unwrap();
        j
    }

    #[test]
    fn one_score_per_class() {
        let features = vec![(
            "bm25".to_string(),
            vec![
                ("q".into(), "rel".into(), Some(5.0)),
                ("q".into(), "irr".into(), Some(1.0)),
                ("q".into(), "rnd".into(), Some(3.0)),
                ("q".into(), "und".into(), None),
            ],
        )];
        let dist = score_distributions(&features, &judgments(), 2, 4).unwrap();
        let f = &dist[0];
        assert_eq!(f.edges, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(f.classes[0].counts, vec![0, 0, 0, 1]);
        assert_eq!(f.classes[1].counts, vec![1, 0, 0, 0]);
        assert_eq!(f.classes[2].counts, vec![0, 0, 1, 0]);
        for c in &f.classes {
            assert_eq!(c.counts.iter().sum::<usize>(), 1);
        }
        assert_eq!(score_distributions(&features, &judgments(), 2, 0), Err(AnalysisError::ZeroBins));
    }

    #[test]
    fn empty_class_and_identical_lists() {
        let mut rows = Vec::new();
        for s in [0.1, 0.4, 0.4, 0.9] {
            rows.push(("q".to_string(), "rel".to_string(), Some(s)));
        }
        let mut j = Judgments::new(GradeScale::FivePoint);
        j.insert("q", "rel", 2).unwrap();
        let dist = score_distributions(&[("x".to_string(), rows.clone())], &j, 2, 3).unwrap();
        assert_eq!(dist[0].classes[1].n, 0);
        assert_eq!(dist[0].classes[1].counts, vec![0, 0, 0]);

        let mut j2 = j.clone();
        j2.insert("q2", "irr", 0).unwrap();
        let mut both = rows.clone();
        both.extend(rows.iter().map(|(_, _, s)| ("q2".to_string(), "irr".to_string(), *s)));
        let dist = score_distributions(&[("x".to_string(), both)], &j2, 2, 3).unwrap();
        assert_eq!(dist[0].classes[0].counts, dist[0].classes[1].counts);
        assert_eq!(dist[0].classes[0].mean, dist[0].classes[1].mean);
    }

    #[test]
    fn planted_shift_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut j = Judgments::new(GradeScale::FivePoint);
        let mut rows = Vec::new();
        let shift = 0.7;
        for i in 0..2000 {
            let d = format!("d{i}");
            let relevant = i % 2 == 0;
            j.insert("q", &d, if relevant { 4 } else { 0 }).unwrap();
            let noise: f64 = (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0;
            rows.push(("q".to_string(), d, Some(noise + if relevant { shift } else { 0.0 })));
        }
        let dist = score_distributions(&[("f".to_string(), rows)], &j, 2, 20).unwrap();
        let (r, i) = (&dist[0].classes[0], &dist[0].classes[1]);
        let se = (r.variance / r.n as f64 + i.variance / i.n as f64).sqrt();
        assert!(((r.mean - i.mean) - shift).abs() < 3.0 * se);
    }

    proptest! {
        #[test]
        fn bins_sum_to_class_size(scores in prop::collection::vec(prop::option::weighted(0.9, -5.0f64..5.0), 0..60), bins in 1usize..15) {
            let j = judgments();
            let docs = ["rel", "irr", "r1", "r2"];
            let rows: Vec<_> = scores.iter().enumerate().map(|(i, s)| ("q".to_string(), docs[i % 4].to_string(), *s)).collect();
            let dist = score_distributions(&[("f".to_string(), rows)], &j, 2, bins).unwrap();
            let defined = scores.iter().filter(|s| s.is_some()).count();
            let mut total = 0;
            for c in &dist[0].classes {
                prop_assert_eq!(c.counts.iter().sum::<usize>(), c.n);
                total += c.n;
            }
            prop_assert_eq!(total, defined);
        }
    }
}
