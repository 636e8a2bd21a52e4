use std::fs;

use desm::core::corpus::Vocabulary;
use desm::core::desm::CentroidIndex;
use desm::core::embeddings::{DualEmbedding, Space};
use desm::core::eval::{GradeScale, Judgments, RunFile};
use desm::core::linalg::Matrix;
use desm::core::ranking::ScoredList;
use desm::formats::{self, FormatError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn embedding(seed: u64) -> DualEmbedding {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<String> = ["the", "cat", "sat", "mat", "dog"].iter().map(|s| s.to_string()).collect();
    let mut m = || Matrix::from_vec(5, 4, (0..20).map(|_| r.gen_range(-1.0..1.0) * 1e-3f64.powi(r.gen_range(0..4))).collect());
    let (a, b) = (m(), m());
    DualEmbedding::new(Vocabulary::from_terms(terms).unwrap(), a, b).unwrap()
}

#[test]
fn vectors_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let emb = embedding(1);
    let prefix = dir.path().join("emb");
    formats::save_embedding(&prefix, &emb).unwrap();
    let back = formats::load_embedding_prefix(&prefix).unwrap();
    assert_eq!(back.vocab().terms(), emb.vocab().terms());
    for space in [Space::In, Space::Out] {
        let bits = |e: &DualEmbedding| e.matrix(space).as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&emb));
    }
}

#[test]
fn mismatched_vocabulary_order_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (p_in, p_out) = formats::save_embedding(&dir.path().join("emb"), &embedding(2)).unwrap();
    let text = fs::read_to_string(&p_out).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(1, 2);
    fs::write(&p_out, lines.join("\n")).unwrap();
    let err = formats::load_embedding(&p_in, &p_out).unwrap_err();
    assert!(matches!(err, FormatError::VocabularyMismatch(..)), "{err}");
}

#[test]
fn header_and_value_count_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.vec");
    fs::write(&path, "3 4\na 1 2 3 4\nb 1 2 3 4\nc 1 2 3 4\n").unwrap();
    let (terms, m) = formats::read_vectors(&path).unwrap();
    assert_eq!((terms.len(), m.rows(), m.cols()), (3, 3, 4));

    fs::write(&path, "3 4\na 1 2 3 4\nb 1 2 3 4 5\nc 1 2 3 4\n").unwrap();
    let err = formats::read_vectors(&path).unwrap_err();
    assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");

    fs::write(&path, "3 4\na 1 2 3 4\n").unwrap();
    assert!(formats::read_vectors(&path).is_err());
    fs::write(&path, "three 4\n").unwrap();
    assert!(matches!(formats::read_vectors(&path).unwrap_err(), FormatError::Parse { line: 1, .. }));
}

#[test]
fn subset_loading_keeps_requested_words() {
    let dir = tempfile::tempdir().unwrap();
    let emb = embedding(3);
    let (p_in, p_out) = formats::save_embedding(&dir.path().join("emb"), &emb).unwrap();
    let keep = ["mat", "cat", "zebra"].iter().map(|s| s.to_string()).collect();
    let sub = formats::load_embedding_subset(&p_in, &p_out, &keep).unwrap();
    assert_eq!(sub.vocab().terms(), ["cat", "mat"]);
    assert_eq!(sub.word_vector(Space::Out, "mat"), emb.word_vector(Space::Out, "mat"));
}

#[test]
fn centroid_index_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let emb = embedding(4);
    let docs = vec![
        ("d1".to_string(), vec!["cat", "sat"]),
        ("d2".to_string(), vec!["unknown"]),
        ("d3".to_string(), vec!["dog", "mat", "the"]),
    ];
    let index = CentroidIndex::build(docs, &emb, Space::Out).unwrap();
    let path = dir.path().join("docs.cidx");
    formats::write_centroid_index(&path, &index).unwrap();
    assert_eq!(formats::read_centroid_index(&path).unwrap(), index);

    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert!(formats::read_centroid_index(&path).is_err());
}

#[test]
fn qrels_and_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = Judgments::new(GradeScale::FivePoint);
    j.insert("q1", "d1", 4).unwrap();
    j.insert("q1", "d2", 0).unwrap();
    j.insert("q2", "d7", 2).unwrap();
    let qrels = dir.path().join("qrels.txt");
    formats::write_qrels(&qrels, &j).unwrap();
    assert_eq!(formats::read_qrels(&qrels, GradeScale::FivePoint).unwrap(), j);

    let list = ScoredList::from_scores(
        "q1",
        vec![("d1".to_string(), Some(0.25)), ("d2".to_string(), None), ("d3".to_string(), Some(-1e-300))],
    );
    let run = RunFile::from_lists([&list], "desm");
    let path = dir.path().join("x.run");
    formats::write_run(&path, &run).unwrap();
    assert_eq!(formats::read_run(&path).unwrap(), run);
}

#[test]
fn grade_outside_scale_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qrels.txt");
    fs::write(&path, "q1 0 d1 5\n").unwrap();
    assert!(formats::read_qrels(&path, GradeScale::FivePoint).is_err());
    fs::write(&path, "q1 0 d1 2\n").unwrap();
    assert!(formats::read_qrels(&path, GradeScale::Binary).is_err());
}

#[test]
fn tsv_duplicate_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("docs.tsv");
    fs::write(&path, "d1\tthe cat\nd1\tthe dog\n").unwrap();
    assert!(formats::read_tsv(&path).is_err());
}

#[test]
fn missing_file_is_reported_as_such() {
    let err = formats::read_tsv(std::path::Path::new("/nonexistent/docs.tsv")).unwrap_err();
    assert!(err.is_not_found());
}
