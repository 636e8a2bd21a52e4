//! On-disk formats: embedding text files, the binary centroid index, qrels,
//! run files and tab-separated document collections.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use desm_core::corpus::Vocabulary;
use desm_core::desm::CentroidIndex;
use desm_core::eval::{EvalError, GradeScale, Judgments, RunEntry, RunFile};
use desm_core::linalg::Matrix;
use desm_core::{tokenize, DualEmbedding, Space};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0} and {1} do not share the same vocabulary order")]
    VocabularyMismatch(PathBuf, PathBuf),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    /// True when the underlying cause is a file that does not exist.
    pub fn is_not_found(&self) -> bool {
        matches!(self, FormatError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, FormatError> {
    fs::File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, FormatError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn lines(path: &Path) -> Result<Vec<String>, FormatError> {
    open(path)?.lines().collect::<Result<_, _>>().map_err(io_err(path))
}

/// Paths of the two embedding files written for `prefix`.
pub fn embedding_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".in.vec"), with(".out.vec"))
}

/// Writes one matrix as `V d` followed by `token v1 .. vd` lines. Values use
/// the shortest representation that parses back to the same bits.
pub fn write_vectors(path: &Path, vocab: &Vocabulary, m: &Matrix) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        writeln!(w, "{} {}", m.rows(), m.cols())?;
        for (i, term) in vocab.terms().iter().enumerate() {
            w.write_all(term.as_bytes())?;
            for x in m.row(i) {
                write!(w, " {x:?}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Reads a single `.vec` file.
pub fn read_vectors(path: &Path) -> Result<(Vec<String>, Matrix), FormatError> {
    let mut reader = open(path)?;
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err(path))?;
    let mut parts = header.split_whitespace();
    let (Some(v), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(parse_err(path, 1, "header must be `V d`"));
    };
    let v: usize = v.parse().map_err(|_| parse_err(path, 1, "bad vocabulary size"))?;
    let d: usize = d.parse().map_err(|_| parse_err(path, 1, "bad dimension"))?;
    let mut terms = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * d);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        if terms.len() == v {
            return Err(parse_err(path, lineno, format!("more than {v} vector lines")));
        }
        let mut fields = line.split(' ').filter(|s| !s.is_empty());
        let term = fields.next().ok_or_else(|| parse_err(path, lineno, "missing token"))?;
        let before = data.len();
        for f in fields {
            let x: f64 = f
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad number `{f}`")))?;
            data.push(x);
        }
        if data.len() - before != d {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        terms.push(term.to_string());
    }
    if terms.len() != v {
        return Err(parse_err(path, terms.len() + 1, format!("expected {v} vector lines, found {}", terms.len())));
    }
    Ok((terms, Matrix::from_vec(v, d, data)))
}

/// Streams a `.vec` file keeping only the words in `keep`, in file order.
/// Lines of other words are not parsed beyond their token.
pub fn read_vectors_subset(path: &Path, keep: &BTreeSet<String>) -> Result<(Vec<String>, Matrix), FormatError> {
    let mut reader = open(path)?;
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err(path))?;
    let d: usize = header
        .split_whitespace()
        .nth(1)
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| parse_err(path, 1, "header must be `V d`"))?;
    let mut terms = Vec::new();
    let mut data = Vec::new();
    let mut line = String::new();
    let mut lineno = 1;
    loop {
        line.clear();
        lineno += 1;
        if reader.read_line(&mut line).map_err(io_err(path))? == 0 {
            break;
        }
        let Some((term, rest)) = line.trim_end().split_once(' ') else {
            continue;
        };
        if !keep.contains(term) {
            continue;
        }
        let before = data.len();
        for f in rest.split(' ').filter(|s| !s.is_empty()) {
            data.push(f.parse().map_err(|_| parse_err(path, lineno, format!("bad number `{f}`")))?);
        }
        if data.len() - before != d {
            return Err(parse_err(path, lineno, format!("expected {d} values")));
        }
        terms.push(term.to_string());
    }
    let n = terms.len();
    Ok((terms, Matrix::from_vec(n, d, data)))
}

/// Loads only the words in `keep` from a pair of `.vec` files.
pub fn load_embedding_subset(path_in: &Path, path_out: &Path, keep: &BTreeSet<String>) -> Result<DualEmbedding, FormatError> {
    let (terms_in, w_in) = read_vectors_subset(path_in, keep)?;
    let (terms_out, w_out) = read_vectors_subset(path_out, keep)?;
    if terms_in != terms_out || w_in.cols() != w_out.cols() {
        return Err(FormatError::VocabularyMismatch(path_in.into(), path_out.into()));
    }
    let invalid = |message: String| FormatError::Invalid {
        path: path_in.into(),
        message,
    };
    let vocab = Vocabulary::from_terms(terms_in).map_err(|e| invalid(e.to_string()))?;
    DualEmbedding::new(vocab, w_in, w_out).map_err(|e| invalid(e.to_string()))
}

/// Writes `<prefix>.in.vec` and `<prefix>.out.vec`.
pub fn save_embedding(prefix: &Path, emb: &DualEmbedding) -> Result<(PathBuf, PathBuf), FormatError> {
    let (p_in, p_out) = embedding_paths(prefix);
    write_vectors(&p_in, emb.vocab(), emb.matrix(Space::In))?;
    write_vectors(&p_out, emb.vocab(), emb.matrix(Space::Out))?;
    Ok((p_in, p_out))
}

/// Loads an embedding from its two files, which must list the same words in
/// the same order. Loaded vocabularies carry zero counts.
pub fn load_embedding(path_in: &Path, path_out: &Path) -> Result<DualEmbedding, FormatError> {
    let (terms_in, w_in) = read_vectors(path_in)?;
    let (terms_out, w_out) = read_vectors(path_out)?;
    if terms_in != terms_out || w_in.cols() != w_out.cols() {
        return Err(FormatError::VocabularyMismatch(path_in.into(), path_out.into()));
    }
    let invalid = |message: String| FormatError::Invalid {
        path: path_in.into(),
        message,
    };
    let vocab = Vocabulary::from_terms(terms_in).map_err(|e| invalid(e.to_string()))?;
    DualEmbedding::new(vocab, w_in, w_out).map_err(|e| invalid(e.to_string()))
}

pub fn load_embedding_prefix(prefix: &Path) -> Result<DualEmbedding, FormatError> {
    let (a, b) = embedding_paths(prefix);
    load_embedding(&a, &b)
}

const INDEX_MAGIC: &[u8; 8] = b"DESMCIX1";

fn space_tag(space: Space) -> u8 {
    match space {
        Space::In => 0,
        Space::Out => 1,
    }
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Binary layout, all integers little endian:
/// magic, `u64` vocabulary size, `u64` dimension, `u8` space tag,
/// `u64` indexed count, `u64` skipped count, the indexed then skipped ids
/// as `u32` length + UTF-8, then the row-major `f64` centroids.
pub fn write_centroid_index(path: &Path, index: &CentroidIndex) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let skipped: Vec<&str> = index.skipped().collect();
    let run = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(index.vocab_len() as u64).to_le_bytes())?;
        w.write_all(&(index.dim() as u64).to_le_bytes())?;
        w.write_all(&[space_tag(index.space())])?;
        w.write_all(&(index.doc_ids().len() as u64).to_le_bytes())?;
        w.write_all(&(skipped.len() as u64).to_le_bytes())?;
        for id in index.doc_ids() {
            write_str(w, id)?;
        }
        for id in &skipped {
            write_str(w, id)?;
        }
        for x in index.centroid_matrix().as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

struct Cursor<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| FormatError::Invalid {
            path: self.path.into(),
            message: format!("truncated at byte {}", self.pos),
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::Invalid {
            path: self.path.into(),
            message: "document id is not UTF-8".into(),
        })
    }
}

pub fn read_centroid_index(path: &Path) -> Result<CentroidIndex, FormatError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(io_err(path))?;
    let invalid = |message: &str| FormatError::Invalid {
        path: path.into(),
        message: message.into(),
    };
    let mut c = Cursor { path, buf: &buf, pos: 0 };
    if c.take(8)? != INDEX_MAGIC {
        return Err(invalid("not a centroid index file"));
    }
    let vocab_len = c.u64()? as usize;
    let dim = c.u64()? as usize;
    let space = match c.take(1)?[0] {
        0 => Space::In,
        1 => Space::Out,
        _ => return Err(invalid("unknown space tag")),
    };
    let n_docs = c.u64()? as usize;
    let n_skipped = c.u64()? as usize;
    let doc_ids = (0..n_docs).map(|_| c.string()).collect::<Result<Vec<_>, _>>()?;
    let skipped = (0..n_skipped).map(|_| c.string()).collect::<Result<Vec<_>, _>>()?;
    let n_values = n_docs.checked_mul(dim).ok_or_else(|| invalid("size overflow"))?;
    let raw = c.take(n_values.checked_mul(8).ok_or_else(|| invalid("size overflow"))?)?;
    if c.pos != buf.len() {
        return Err(invalid("trailing bytes after centroids"));
    }
    let centroids = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("eight bytes")))
        .collect();
    CentroidIndex::from_parts(space, vocab_len, dim, doc_ids, centroids, skipped).map_err(|e| invalid(&e.to_string()))
}

/// Reads `qid 0 docid grade` lines. Blank lines and `#` comments are skipped.
pub fn read_qrels(path: &Path, scale: GradeScale) -> Result<Judgments, FormatError> {
    let mut j = Judgments::new(scale);
    for (i, line) in lines(path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(path, i + 1, "expected `qid 0 docid grade`"));
        }
        let grade: u8 = f[3]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad grade `{}`", f[3])))?;
        j.insert(f[0], f[2], grade).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
    }
    Ok(j)
}

pub fn write_qrels(path: &Path, j: &Judgments) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        for (q, d, g) in j.iter() {
            writeln!(w, "{q} 0 {d} {g}")?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

fn format_score(s: f64) -> String {
    if s == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{s:?}")
    }
}

/// Writes `qid Q0 docid rank score tag` lines.
pub fn write_run(path: &Path, run: &RunFile) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let body = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        for (q, entries) in run.iter() {
            for e in entries {
                writeln!(w, "{q} Q0 {} {} {} {}", e.doc_id, e.rank, format_score(e.score), e.tag)?;
            }
        }
        w.flush()
    };
    body(&mut w).map_err(io_err(path))
}

pub fn read_run(path: &Path) -> Result<RunFile, FormatError> {
    let mut run = RunFile::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(parse_err(path, i + 1, "expected `qid Q0 docid rank score tag`"));
        }
        let rank: usize = f[3].parse().map_err(|_| parse_err(path, i + 1, "bad rank"))?;
        let score: f64 = f[4].parse().map_err(|_| parse_err(path, i + 1, "bad score"))?;
        run.push_entry(
            f[0],
            RunEntry {
                doc_id: f[2].to_string(),
                rank,
                score,
                tag: f[5].to_string(),
            },
        );
    }
    run.finish().map_err(|e: EvalError| FormatError::Invalid {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(run)
}

/// Reads `id<TAB>text` lines in file order. Ids must be unique.
pub fn read_tsv(path: &Path) -> Result<Vec<(String, String)>, FormatError> {
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected `id<TAB>text`"))?;
        if seen.insert(id.to_string(), ()).is_some() {
            return Err(parse_err(path, i + 1, format!("duplicate id `{id}`")));
        }
        out.push((id.to_string(), text.to_string()));
    }
    Ok(out)
}

/// Like [`read_tsv`] with the text tokenized.
pub fn read_tokenized(path: &Path) -> Result<Vec<(String, Vec<String>)>, FormatError> {
    Ok(read_tsv(path)?
        .into_iter()
        .map(|(id, text)| (id, tokenize(&text)))
        .collect())
}

pub fn write_tsv<'a>(path: &Path, rows: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        for (id, text) in rows {
            writeln!(w, "{id}\t{text}")?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Reads a plain text corpus, one tokenized record per non-empty line.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>, FormatError> {
    Ok(lines(path)?
        .iter()
        .map(|l| tokenize(l))
        .filter(|r| !r.is_empty())
        .collect())
}

/// Candidate lists: either qrels lines or `qid docid` pairs.
pub fn read_candidates(path: &Path) -> Result<BTreeMap<String, Vec<String>>, FormatError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let doc = match f.len() {
            2 => f[1],
            4 => f[2],
            _ => return Err(parse_err(path, i + 1, "expected `qid docid` or a qrels line")),
        };
        let docs = out.entry(f[0].to_string()).or_default();
        if !docs.iter().any(|d| d == doc) {
            docs.push(doc.to_string());
        }
    }
    Ok(out)
}

/// Writes rows as tab-separated text with a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<fs::File>| -> io::Result<()> {
        writeln!(w, "{}", header.join("\t"))?;
        for r in rows {
            writeln!(w, "{}", r.join("\t"))?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Writes `contents` to `path`.
pub fn write_text(path: &Path, contents: &str) -> Result<(), FormatError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Fails with a not-found error when `path` does not exist.
pub fn require_file(path: &Path) -> Result<(), FormatError> {
    fs::metadata(path).map(|_| ()).map_err(io_err(path))
}
