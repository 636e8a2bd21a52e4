//! The `desm` command line.
//!
//! Every setting is resolved from defaults, then the `--config` file, then
//! `DESM_*` environment variables, then flags. Each file a command writes
//! gets a `<file>.config` sidecar holding the resolved settings.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use desm_core::analysis::{self, FeatureScores, ProjectionGroup};
use desm_core::cbow::NegativeDistribution;
use desm_core::desm::{centroid, CentroidIndex};
use desm_core::embeddings::nearest_neighbors;
use desm_core::eval::{evaluate_run, format_table, CandidateMode, GradeScale, RunFile};
use desm_core::lexical::{lsa_train, Bm25Config, IdfVariant, LexicalIndex};
use desm_core::mixture::sweep_alpha;
use desm_core::{tokenize, DualEmbedding, ScoredList, Space, SpacePair, TrainerConfig, Vocabulary};

use crate::config::Settings;
use crate::formats;
use crate::hogwild;
use crate::pipeline::{self, Candidates, Records};
use crate::synth::{self, SynthConfig, TopicModel};
use crate::Error;

macro_rules! settings_args {
    ($(#[$meta:meta])* $name:ident { $($(#[doc = $doc:literal])* $field:ident : $key:literal = $default:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Args)]
        pub struct $name {
            $(
                $(#[doc = $doc])*
                #[arg(long = $key, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            pub const DEFAULTS: &'static [(&'static str, &'static str)] = &[$(($key, $default)),*];

            fn flags(&self) -> Vec<(&'static str, Option<String>)> {
                vec![$(($key, self.$field.clone())),*]
            }
        }
    };
}

#[derive(Debug, Parser)]
#[command(name = "desm", version, about = "Dual embedding space document ranking")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<String>,
    /// Training workers; 1 is deterministic.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<String>,
    /// `key = value` settings file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train CBOW embeddings keeping the IN and OUT matrices.
    Train(TrainArgs),
    /// Nearest neighbors of a word under one space pair.
    Nn(NnArgs),
    /// Precompute document centroids.
    Index(IndexArgs),
    /// Rank candidates and write a run file.
    Rank(RankArgs),
    /// NDCG report for a run file.
    Eval(EvalArgs),
    /// Choose the mixture weight on training queries.
    Sweep(SweepArgs),
    /// Diagnostic tables.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Write a synthetic topical corpus and relevance data.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// DESM scores and term counts for labelled passages.
    Perturb(PerturbArgs),
    /// 2-D projection of queries and their top documents.
    Project(ProjectArgs),
    /// Score histograms per relevance class.
    Dist(DistArgs),
}

settings_args!(TrainArgs {
    /// One training record per line.
    corpus: "corpus" = "",
    /// Writes `<prefix>.in.vec` and `<prefix>.out.vec`.
    out_prefix: "out-prefix" = "",
    min_count: "min-count" = "5",
    dim: "dim" = "200",
    window: "window" = "5",
    negatives: "negatives" = "5",
    epochs: "epochs" = "5",
    learning_rate: "learning-rate" = "0.025",
    /// Defaults to 1e-4 times the learning rate.
    min_learning_rate: "min-learning-rate" = "",
    /// uniform, empirical or empirical_pow(p)
    negative_dist: "negative-dist" = "empirical_pow(0.75)",
    /// Frequent-word downsampling threshold; empty disables it.
    subsample: "subsample" = "",
});

settings_args!(NnArgs {
    word: "word" = "",
    pair: "pair" = "in-out",
    k: "k" = "6",
    /// IN matrix file.
    input: "in" = "",
    /// OUT matrix file.
    output: "out" = "",
});

settings_args!(IndexArgs {
    docs: "docs" = "",
    space: "space" = "out",
    /// Embedding prefix.
    emb: "emb" = "",
    /// Defaults to `<docs>.<space>.cidx`.
    out: "out" = "",
});

settings_args!(RankArgs {
    /// desm, bm25, lsa or mm
    scorer: "scorer" = "desm",
    variant: "variant" = "in-out",
    queries: "queries" = "",
    docs: "docs" = "",
    /// qrels or `qid docid` lines; required in telescoped mode.
    candidates: "candidates" = "",
    /// telescoped or full
    mode: "mode" = "telescoped",
    emb: "emb" = "",
    /// Prebuilt centroid index; built from --docs when empty.
    index: "index" = "",
    k1: "k1" = "1.7",
    b: "b" = "0.95",
    idf: "idf" = "plus1",
    lsa_k: "lsa-k" = "200",
    alpha: "alpha" = "",
    out: "out" = "",
    tag: "tag" = "",
    /// Entries kept per query.
    depth: "depth" = "1000",
});

settings_args!(EvalArgs {
    run: "run" = "",
    qrels: "qrels" = "",
    cutoffs: "cutoffs" = "1,3,10",
    baseline_run: "baseline-run" = "",
    /// five-point or binary
    scale: "scale" = "five-point",
    out: "out" = "",
});

settings_args!(SweepArgs {
    train_qrels: "train-qrels" = "",
    queries: "queries" = "",
    docs: "docs" = "",
    emb: "emb" = "",
    variant: "variant" = "in-out",
    mode: "mode" = "full",
    step: "step" = "0.01",
    metric: "metric" = "ndcg@10",
    k1: "k1" = "1.7",
    b: "b" = "0.95",
    idf: "idf" = "plus1",
    out: "out" = "",
});

settings_args!(PerturbArgs {
    query: "query" = "",
    /// `label<TAB>text` lines.
    passages: "passages" = "",
    emb: "emb" = "",
    out: "out" = "",
});

settings_args!(ProjectArgs {
    run: "run" = "",
    queries: "queries" = "",
    docs: "docs" = "",
    emb: "emb" = "",
    qrels: "qrels" = "",
    /// Documents per query.
    top: "top" = "10",
    out: "out" = "",
});

settings_args!(DistArgs {
    /// Comma-separated run files, one feature each.
    runs: "runs" = "",
    qrels: "qrels" = "",
    /// Lowest grade counted as relevant.
    threshold: "threshold" = "2",
    bins: "bins" = "20",
    out: "out" = "",
});

settings_args!(SynthArgs {
    out_dir: "out-dir" = "",
    sentences: "sentences" = "50000",
    topics: "topics" = "5",
    words_per_topic: "words-per-topic" = "20",
    queries_per_topic: "queries-per-topic" = "8",
    background_docs: "background-docs" = "2000",
});

const GLOBAL_DEFAULTS: &[(&str, &str)] = &[("seed", "1"), ("threads", "1")];

struct Ctx<'a> {
    settings: Settings,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn print(&mut self, text: &str) -> Result<(), Error> {
        self.stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::Usage(format!("cannot write output: {e}")))
    }

    /// Writes `text` to the `out` setting with a sidecar, or prints it.
    fn emit(&mut self, text: &str) -> Result<(), Error> {
        match self.settings.path_opt("out")? {
            Some(p) => {
                formats::write_text(&p, text)?;
                self.settings.write_sidecar(&p)?;
                Ok(())
            }
            None => self.print(text),
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf, Error> {
        Ok(self.settings.path(key)?)
    }

    /// A required input path that must exist.
    fn input(&self, key: &str) -> Result<PathBuf, Error> {
        let p = self.path(key)?;
        formats::require_file(&p)?;
        Ok(p)
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "desm: error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}

fn resolve(cli: &Cli, command: &str, defaults: &[(&str, &str)], flags: Vec<(&'static str, Option<String>)>) -> Result<Settings, Error> {
    let mut all: Vec<(&str, &str)> = GLOBAL_DEFAULTS.to_vec();
    all.push(("command", ""));
    all.extend_from_slice(defaults);
    let mut flags = flags;
    flags.push(("seed", cli.seed.clone()));
    flags.push(("threads", cli.threads.clone()));
    flags.push(("command", Some(command.to_string())));
    if let Some(p) = &cli.config {
        formats::require_file(p)?;
    }
    Ok(Settings::resolve_with_process_env(&all, cli.config.as_deref(), &flags)?)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), Error> {
    let (name, defaults, flags): (&str, &[(&str, &str)], _) = match &cli.command {
        Command::Train(a) => ("train", TrainArgs::DEFAULTS, a.flags()),
        Command::Nn(a) => ("nn", NnArgs::DEFAULTS, a.flags()),
        Command::Index(a) => ("index", IndexArgs::DEFAULTS, a.flags()),
        Command::Rank(a) => ("rank", RankArgs::DEFAULTS, a.flags()),
        Command::Eval(a) => ("eval", EvalArgs::DEFAULTS, a.flags()),
        Command::Sweep(a) => ("sweep", SweepArgs::DEFAULTS, a.flags()),
        Command::Analyze(AnalyzeCommand::Perturb(a)) => ("analyze perturb", PerturbArgs::DEFAULTS, a.flags()),
        Command::Analyze(AnalyzeCommand::Project(a)) => ("analyze project", ProjectArgs::DEFAULTS, a.flags()),
        Command::Analyze(AnalyzeCommand::Dist(a)) => ("analyze dist", DistArgs::DEFAULTS, a.flags()),
        Command::Synth(a) => ("synth", SynthArgs::DEFAULTS, a.flags()),
    };
    let settings = resolve(&cli, name, defaults, flags)?;
    let mut ctx = Ctx { settings, stdout };
    match &cli.command {
        Command::Train(_) => train(&mut ctx),
        Command::Nn(_) => nn(&mut ctx),
        Command::Index(_) => index(&mut ctx),
        Command::Rank(_) => rank(&mut ctx),
        Command::Eval(_) => eval(&mut ctx),
        Command::Sweep(_) => sweep(&mut ctx),
        Command::Analyze(AnalyzeCommand::Perturb(_)) => perturb(&mut ctx),
        Command::Analyze(AnalyzeCommand::Project(_)) => project(&mut ctx),
        Command::Analyze(AnalyzeCommand::Dist(_)) => dist(&mut ctx),
        Command::Synth(_) => synth_cmd(&mut ctx),
    }
}

fn trainer_config(s: &Settings) -> Result<TrainerConfig, Error> {
    let learning_rate: f64 = s.get("learning-rate")?;
    Ok(TrainerConfig {
        dim: s.get("dim")?,
        window: s.get("window")?,
        negatives: s.get("negatives")?,
        epochs: s.get("epochs")?,
        learning_rate,
        min_learning_rate: s.get_opt("min-learning-rate")?.unwrap_or(learning_rate * 1e-4),
        negative_distribution: s.get::<NegativeDistribution>("negative-dist")?,
        subsample_threshold: s.get_opt("subsample")?,
        seed: s.get("seed")?,
    })
}

fn train(ctx: &mut Ctx) -> Result<(), Error> {
    let s = &ctx.settings;
    let config = trainer_config(s)?;
    config.validate()?;
    let threads: usize = s.get("threads")?;
    let min_count: u64 = s.get("min-count")?;
    let corpus = ctx.input("corpus")?;
    let prefix = ctx.path("out-prefix")?;
    let records = formats::read_corpus(&corpus)?;
    let vocab = Vocabulary::build(&records, min_count)?;
    let encoded: Vec<_> = records.iter().map(|r| vocab.encode(r).0).collect();
    let trained = hogwild::train_parallel(&encoded, &vocab, &config, threads)?;
    let (p_in, p_out) = formats::save_embedding(&prefix, &trained.embedding)?;
    s.write_sidecar(&p_in)?;
    s.write_sidecar(&p_out)?;
    let mut report = format!("vocab={}\ntokens={}\n", vocab.len(), vocab.total_tokens());
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        report.push_str(&format!("epoch{}.loss={l:.6}\n", i + 1));
    }
    report.push_str(&format!("in={}\nout={}\n", p_in.display(), p_out.display()));
    ctx.print(&report)
}

fn nn(ctx: &mut Ctx) -> Result<(), Error> {
    let emb = formats::load_embedding(&ctx.input("in")?, &ctx.input("out")?)?;
    let s = &ctx.settings;
    let word: String = s.get("word")?;
    let pair: SpacePair = s.get("pair")?;
    let neighbors = nearest_neighbors(&emb, &word, pair, s.get("k")?)?;
    let mut text = format!("{word}\t{}\n", pair.as_str().to_ascii_uppercase());
    for n in neighbors {
        text.push_str(&format!("{}\t{:.3}\n", n.term, n.similarity));
    }
    ctx.print(&text)
}

fn load_emb(ctx: &Ctx) -> Result<DualEmbedding, Error> {
    let prefix = ctx.path("emb")?;
    let (a, b) = formats::embedding_paths(&prefix);
    formats::require_file(&a)?;
    formats::require_file(&b)?;
    Ok(formats::load_embedding(&a, &b)?)
}

fn index(ctx: &mut Ctx) -> Result<(), Error> {
    let docs_path = ctx.input("docs")?;
    let emb = load_emb(ctx)?;
    let space: Space = ctx.settings.get("space")?;
    let out = match ctx.settings.path_opt("out")? {
        Some(p) => p,
        None => PathBuf::from(format!("{}.{}.cidx", docs_path.display(), space.as_str())),
    };
    let docs = formats::read_tokenized(&docs_path)?;
    let index = CentroidIndex::build(docs, &emb, space)?;
    formats::write_centroid_index(&out, &index)?;
    ctx.settings.write_sidecar(&out)?;
    let text = format!(
        "indexed={}\nskipped={}\nindex={}\n",
        index.doc_ids().len(),
        index.skipped().count(),
        out.display()
    );
    ctx.print(&text)
}

fn bm25_config(s: &Settings) -> Result<Bm25Config, Error> {
    Ok(Bm25Config {
        k1: s.get("k1")?,
        b: s.get("b")?,
        idf: s.get::<IdfVariant>("idf")?,
    })
}

fn candidate_sets(ctx: &Ctx, queries: &Records, docs: &Records) -> Result<Candidates, Error> {
    let mode: CandidateMode = ctx.settings.get("mode")?;
    match mode {
        CandidateMode::Telescoped => Ok(formats::read_candidates(&ctx.input("candidates")?)?),
        CandidateMode::Full => Ok(pipeline::full_candidates(queries.iter().map(|(q, _)| q.as_str()), docs)),
    }
}

fn desm_index(ctx: &Ctx, docs: &Records, emb: &DualEmbedding, space: Space) -> Result<CentroidIndex, Error> {
    match ctx.settings.path_opt("index")? {
        Some(p) => {
            formats::require_file(&p)?;
            let index = formats::read_centroid_index(&p)?;
            if index.space() != space {
                return Err(Error::Usage(format!(
                    "index {} holds {} centroids but the variant needs {}",
                    p.display(),
                    index.space(),
                    space
                )));
            }
            Ok(index)
        }
        None => Ok(CentroidIndex::build(docs.iter().cloned(), emb, space)?),
    }
}

fn write_lists(ctx: &mut Ctx, mut lists: Vec<ScoredList>, default_tag: &str) -> Result<(), Error> {
    let depth: usize = ctx.settings.get("depth")?;
    let tag = ctx.settings.get_opt::<String>("tag")?.unwrap_or_else(|| default_tag.to_string());
    for l in &mut lists {
        l.truncate(depth);
    }
    let run = RunFile::from_lists(&lists, &tag);
    let out = ctx.path("out")?;
    formats::write_run(&out, &run)?;
    ctx.settings.write_sidecar(&out)?;
    ctx.print(&format!("queries={}\nrun={}\n", run.len(), out.display()))
}

fn rank(ctx: &mut Ctx) -> Result<(), Error> {
    let queries = formats::read_tokenized(&ctx.input("queries")?)?;
    let docs = formats::read_tokenized(&ctx.input("docs")?)?;
    let cands = candidate_sets(ctx, &queries, &docs)?;
    let scorer: String = ctx.settings.get("scorer")?;
    let variant: SpacePair = ctx.settings.get("variant")?;
    let (lists, tag) = match scorer.as_str() {
        "desm" => {
            let emb = load_emb(ctx)?;
            let index = desm_index(ctx, &docs, &emb, variant.second())?;
            (pipeline::desm_runs(&queries, &cands, &index, &emb, variant)?, format!("desm-{}", variant.as_str()))
        }
        "bm25" => {
            let lex = LexicalIndex::build(docs.iter().cloned())?;
            (pipeline::bm25_runs(&queries, &cands, &lex, &bm25_config(&ctx.settings)?)?, "bm25".to_string())
        }
        "lsa" => {
            let lex = LexicalIndex::build(docs.iter().cloned())?;
            let model = lsa_train(&lex, ctx.settings.get("lsa-k")?)?;
            (pipeline::lsa_runs(&queries, &cands, &model)?, "lsa".to_string())
        }
        "mm" => {
            let alpha: f64 = ctx.settings.get("alpha")?;
            let emb = load_emb(ctx)?;
            let index = desm_index(ctx, &docs, &emb, variant.second())?;
            let lex = LexicalIndex::build(docs.iter().cloned())?;
            let comps = pipeline::components(&queries, &cands, &index, &emb, variant, &lex, &bm25_config(&ctx.settings)?)?;
            (pipeline::mixture_runs(&comps, alpha)?, format!("mm-{alpha}"))
        }
        other => return Err(Error::Usage(format!("unknown scorer `{other}`"))),
    };
    write_lists(ctx, lists, &tag)
}

fn run_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn grade_scale(s: &Settings) -> Result<GradeScale, Error> {
    match s.get::<String>("scale")?.as_str() {
        "five-point" => Ok(GradeScale::FivePoint),
        "binary" => Ok(GradeScale::Binary),
        other => Err(Error::Usage(format!("unknown grade scale `{other}`"))),
    }
}

fn eval(ctx: &mut Ctx) -> Result<(), Error> {
    let run_path = ctx.input("run")?;
    let judgments = formats::read_qrels(&ctx.input("qrels")?, grade_scale(&ctx.settings)?)?;
    let cutoffs: Vec<usize> = ctx.settings.list("cutoffs")?;
    let run = formats::read_run(&run_path)?;
    let report = evaluate_run(&run, &judgments, &cutoffs)?;
    let name = run_name(&run_path);
    let mut text = String::new();
    match ctx.settings.path_opt("baseline-run")? {
        Some(base_path) => {
            formats::require_file(&base_path)?;
            let base = evaluate_run(&formats::read_run(&base_path)?, &judgments, &cutoffs)?;
            let p = report.compare(&base)?;
            let base_name = run_name(&base_path);
            text.push_str(&format_table(&[(&base_name, &base, None), (&name, &report, Some(&p))]));
            text.push('\n');
            text.push_str(&base.key_values(&base_name));
            text.push_str(&report.key_values(&name));
            for (k, p) in cutoffs.iter().zip(&p) {
                text.push_str(&format!("{name}.p_value@{k}={p:.6}\n"));
            }
        }
        None => {
            text.push_str(&format_table(&[(&name, &report, None)]));
            text.push('\n');
            text.push_str(&report.key_values(&name));
        }
    }
    ctx.emit(&text)
}

fn metric_cutoff(metric: &str) -> Result<usize, Error> {
    metric
        .strip_prefix("ndcg@")
        .and_then(|k| k.parse().ok())
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::Usage(format!("unsupported metric `{metric}`; expected ndcg@K")))
}

fn sweep(ctx: &mut Ctx) -> Result<(), Error> {
    let judgments = formats::read_qrels(&ctx.input("train-qrels")?, GradeScale::FivePoint)?;
    let queries = formats::read_tokenized(&ctx.input("queries")?)?;
    let docs = formats::read_tokenized(&ctx.input("docs")?)?;
    let emb = load_emb(ctx)?;
    let s = &ctx.settings;
    let variant: SpacePair = s.get("variant")?;
    let mode: CandidateMode = s.get("mode")?;
    let cutoff = metric_cutoff(&s.get::<String>("metric")?)?;
    let train_queries: Records = queries
        .into_iter()
        .filter(|(q, _)| judgments.for_query(q).is_some())
        .collect();
    let cands = pipeline::candidates(mode, &judgments, &docs);
    let index = CentroidIndex::build(docs.iter().cloned(), &emb, variant.second())?;
    let lex = LexicalIndex::build(docs.iter().cloned())?;
    let comps = pipeline::components(&train_queries, &cands, &index, &emb, variant, &lex, &bm25_config(s)?)?;
    let result = sweep_alpha(&comps, &judgments, s.get("step")?, cutoff)?;
    let mut table = String::from("alpha\tndcg\n");
    for (a, v) in &result.grid {
        table.push_str(&format!("{a}\t{v}\n"));
    }
    if let Some(p) = s.path_opt("out")? {
        formats::write_text(&p, &table)?;
        s.write_sidecar(&p)?;
    }
    let text = format!(
        "best_alpha={}\nbest_ndcg@{cutoff}={:.2}\nqueries={}\n",
        result.best_alpha,
        result.best_value * 100.0,
        comps.len()
    );
    ctx.print(&text)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "undefined".into())
}

fn perturb(ctx: &mut Ctx) -> Result<(), Error> {
    let passages = formats::read_tokenized(&ctx.input("passages")?)?;
    let emb = load_emb(ctx)?;
    let query: String = ctx.settings.get("query")?;
    let query = tokenize(&query).into_iter().next().unwrap_or(query);
    let rows = analysis::perturbation_report(&query, &passages, &emb)?;
    let mut text = String::from("label\tin_out\tin_in\ttf\n");
    for r in rows {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", r.label, fmt_opt(r.in_out), fmt_opt(r.in_in), r.tf));
    }
    ctx.emit(&text)
}

fn project(ctx: &mut Ctx) -> Result<(), Error> {
    let run = formats::read_run(&ctx.input("run")?)?;
    let queries = formats::read_tokenized(&ctx.input("queries")?)?;
    let docs = formats::read_tokenized(&ctx.input("docs")?)?;
    let emb = load_emb(ctx)?;
    let judgments = match ctx.settings.path_opt("qrels")? {
        Some(p) => Some(formats::read_qrels(&p, GradeScale::FivePoint)?),
        None => None,
    };
    let top: usize = ctx.settings.get("top")?;
    let doc_tokens: std::collections::BTreeMap<&str, &Vec<String>> = docs.iter().map(|(i, t)| (i.as_str(), t)).collect();
    let mut groups = Vec::new();
    for (qid, q) in &queries {
        let Some(entries) = run.entries(qid) else {
            continue;
        };
        let Some(qv) = centroid(q, &emb, Space::In)? else {
            log::warn!("query {qid} has no in-vocabulary words; left out of the projection");
            continue;
        };
        let mut documents = Vec::new();
        for e in entries.iter().take(top) {
            let tokens = doc_tokens
                .get(e.doc_id.as_str())
                .ok_or_else(|| Error::Usage(format!("run document `{}` is not in --docs", e.doc_id)))?;
            if let Some(dv) = centroid(tokens, &emb, Space::Out)? {
                let grade = judgments.as_ref().and_then(|j| j.grade(qid, &e.doc_id));
                documents.push((e.doc_id.clone(), dv, grade));
            }
        }
        groups.push(ProjectionGroup {
            query_label: qid.clone(),
            query_vector: qv,
            documents,
        });
    }
    let export = analysis::project_2d(&groups)?;
    let mut text = String::from("group\tlabel\tkind\tgrade\tx\ty\n");
    for p in &export.points {
        let kind = if p.is_query { "query" } else { "document" };
        let grade = p.grade.map(|g| g.to_string()).unwrap_or_else(|| "-".into());
        text.push_str(&format!("{}\t{}\t{kind}\t{grade}\t{}\t{}\n", p.group, p.label, p.x, p.y));
    }
    ctx.emit(&text)
}

fn dist(ctx: &mut Ctx) -> Result<(), Error> {
    let judgments = formats::read_qrels(&ctx.input("qrels")?, GradeScale::FivePoint)?;
    let paths: Vec<PathBuf> = ctx.settings.list("runs")?;
    if paths.is_empty() {
        return Err(Error::Usage("--runs needs at least one run file".into()));
    }
    let mut features: Vec<FeatureScores> = Vec::new();
    for p in &paths {
        formats::require_file(p)?;
        let run = formats::read_run(p)?;
        let rows = run
            .iter()
            .flat_map(|(q, es)| {
                es.iter()
                    .map(move |e| (q.to_string(), e.doc_id.clone(), e.score.is_finite().then_some(e.score)))
            })
            .collect();
        features.push((run_name(p), rows));
    }
    let dists = analysis::score_distributions(
        &features,
        &judgments,
        ctx.settings.get("threshold")?,
        ctx.settings.get("bins")?,
    )?;
    let mut text = String::from("feature\tclass\tn\tmean\tvariance\tbin\tlo\thi\tcount\n");
    for f in &dists {
        for c in &f.classes {
            for (i, count) in c.counts.iter().enumerate() {
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{i}\t{}\t{}\t{count}\n",
                    f.feature,
                    c.class.as_str(),
                    c.n,
                    c.mean,
                    c.variance,
                    f.edges[i],
                    f.edges[i + 1]
                ));
            }
        }
    }
    ctx.emit(&text)
}

fn synth_cmd(ctx: &mut Ctx) -> Result<(), Error> {
    let s = &ctx.settings;
    let dir = ctx.path("out-dir")?;
    std::fs::create_dir_all(&dir).map_err(|source| formats::FormatError::Io {
        path: dir.clone(),
        source,
    })?;
    let cfg = SynthConfig {
        sentences: s.get("sentences")?,
        topics: s.get("topics")?,
        words_per_topic: s.get("words-per-topic")?,
        queries_per_topic: s.get("queries-per-topic")?,
        background_docs: s.get("background-docs")?,
        seed: s.get("seed")?,
        ..SynthConfig::default()
    };
    if cfg.topics < 2 || cfg.words_per_topic < 2 {
        return Err(Error::Usage("synth needs at least 2 topics of 2 words".into()));
    }
    let model = TopicModel::new(&cfg);
    let data = synth::relevance_data(&cfg, &model);
    let mut written = Vec::new();
    let corpus = synth::corpus(&cfg, &model);
    let p = dir.join("corpus.txt");
    formats::write_text(&p, &(corpus.join("\n") + "\n"))?;
    written.push(p);
    let p = dir.join("docs.tsv");
    formats::write_tsv(&p, data.docs.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
    written.push(p);
    let p = dir.join("queries.tsv");
    formats::write_tsv(&p, data.queries.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
    written.push(p);
    for (name, j) in [
        ("qrels.txt", data.judgments.clone()),
        ("qrels.train.txt", data.judgments_for(&data.train_queries)),
        ("qrels.test.txt", data.judgments_for(&data.test_queries)),
    ] {
        let p = dir.join(name);
        formats::write_qrels(&p, &j)?;
        written.push(p);
    }
    let probe = model.query_words(0).first().cloned().unwrap_or_else(|| model.topics[0][0].clone());
    let passages = synth::perturbation_passages(&model, &probe, cfg.seed);
    let p = dir.join("passages.tsv");
    formats::write_tsv(&p, passages.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
    written.push(p);
    let mut text = String::new();
    for p in &written {
        s.write_sidecar(p)?;
        text.push_str(&format!("wrote={}\n", p.display()));
    }
    text.push_str(&format!("probe_query={probe}\n"));
    ctx.print(&text)
}
