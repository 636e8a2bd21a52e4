//! CBOW training with negative sampling, keeping both weight matrices.
//!
//! For a target word `w` with context words `c_1..c_m`, the hidden vector is
//! the mean of the context rows of `W_IN`. The target and each sampled
//! negative are rows of `W_OUT`. The per-example loss is
//!
//! ```text
//! -ln s(h . w_target) - sum_n ln s(-h . w_n),   s(x) = 1 / (1 + e^-x)
//! ```
//!
//! and [`sgd_step`] applies its exact gradient. Untouched rows never change,
//! so the OUT matrix is a first-class product of training rather than a
//! scratch buffer.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;
use core::str::FromStr;
#[cfg(target_has_atomic = "64")]
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::embeddings::DualEmbedding;
use crate::linalg::Matrix;
use crate::TermId;

/// The RNG used for every random decision during training.
pub type TrainRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training corpus has no record with at least two in-vocabulary tokens")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("context window is empty")]
    EmptyContext,
    #[error("term id {id} is out of range for {rows} rows")]
    IdOutOfRange { id: TermId, rows: usize },
    #[error("cannot parse negative distribution `{0}`")]
    ParseDistribution(String),
}

/// Distribution negatives are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeDistribution {
    Uniform,
    /// Proportional to corpus frequency.
    Empirical,
    /// Proportional to `count^p`.
    EmpiricalPow(f64),
}

impl Default for NegativeDistribution {
    fn default() -> Self {
        NegativeDistribution::EmpiricalPow(0.75)
    }
}

impl fmt::Display for NegativeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeDistribution::Uniform => f.write_str("uniform"),
            NegativeDistribution::Empirical => f.write_str("empirical"),
            NegativeDistribution::EmpiricalPow(p) => write!(f, "empirical_pow({p})"),
        }
    }
}

impl FromStr for NegativeDistribution {
    type Err = TrainError;

    /// Accepts `uniform`, `empirical`, `empirical_pow(P)` and `pow:P`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TrainError::ParseDistribution(s.to_string());
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "uniform" => return Ok(NegativeDistribution::Uniform),
            "empirical" => return Ok(NegativeDistribution::Empirical),
            _ => {}
        }
        let p = if let Some(rest) = t.strip_prefix("empirical_pow(") {
            rest.strip_suffix(')').ok_or_else(err)?
        } else if let Some(rest) = t.strip_prefix("pow:") {
            rest
        } else {
            return Err(err());
        };
        let p: f64 = p.trim().parse().map_err(|_| err())?;
        if !p.is_finite() || p < 0.0 {
            return Err(err());
        }
        Ok(NegativeDistribution::EmpiricalPow(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Embedding dimensionality.
    pub dim: usize,
    /// Context half-width: up to `window` tokens on each side of the target.
    pub window: usize,
    /// Negative samples per target.
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub negative_distribution: NegativeDistribution,
    /// Frequent-word downsampling threshold; `None` keeps every token.
    pub subsample_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            dim: 200,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.025 * 1e-4,
            negative_distribution: NegativeDistribution::default(),
            subsample_threshold: None,
            seed: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.dim == 0 {
            return Err(TrainError::InvalidConfig("dim must be at least 1"));
        }
        if self.window == 0 {
            return Err(TrainError::InvalidConfig("window must be at least 1"));
        }
        if self.negatives == 0 {
            return Err(TrainError::InvalidConfig("negatives must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive"));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            return Err(TrainError::InvalidConfig("min_learning_rate must lie in [0, learning_rate]"));
        }
        if let Some(t) = self.subsample_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(TrainError::InvalidConfig("subsample_threshold must be positive"));
            }
        }
        Ok(())
    }
}

/// Row storage the SGD update can read from and add into.
///
/// Implemented for plain [`Matrix`] (single worker) and for shared
/// references to [`AtomicMatrix`] (lock-free parallel workers).
pub trait ParamRows {
    fn n_rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn read_row(&self, row: usize, out: &mut [f64]);
    /// `row += alpha * x`
    fn add_to_row(&mut self, row: usize, alpha: f64, x: &[f64]);
}

impl ParamRows for Matrix {
    fn n_rows(&self) -> usize {
        self.rows()
    }

    fn dim(&self) -> usize {
        self.cols()
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(row));
    }

    fn add_to_row(&mut self, row: usize, alpha: f64, x: &[f64]) {
        crate::linalg::axpy(alpha, x, self.row_mut(row));
    }
}

/// Matrix whose cells are individually atomic `f64`s.
///
/// Concurrent workers read and write rows without locks. Updates from
/// different workers can overwrite each other, but no reader ever sees a
/// half-written cell. Needs 64-bit atomics.
#[cfg(target_has_atomic = "64")]
pub struct AtomicMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<AtomicU64>,
}

#[cfg(target_has_atomic = "64")]
impl AtomicMatrix {
    pub fn from_matrix(m: &Matrix) -> Self {
        AtomicMatrix {
            rows: m.rows(),
            cols: m.cols(),
            cells: m.as_slice().iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.cells.iter().map(|c| f64::from_bits(c.load(Ordering::Relaxed))).collect(),
        )
    }
}

#[cfg(target_has_atomic = "64")]
impl ParamRows for &AtomicMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn dim(&self) -> usize {
        self.cols
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        let cells = &self.cells[row * self.cols..(row + 1) * self.cols];
        for (o, c) in out.iter_mut().zip(cells) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn add_to_row(&mut self, row: usize, alpha: f64, x: &[f64]) {
        let cells = &self.cells[row * self.cols..(row + 1) * self.cols];
        for (c, xi) in cells.iter().zip(x) {
            let old = f64::from_bits(c.load(Ordering::Relaxed));
            c.store((old + alpha * xi).to_bits(), Ordering::Relaxed);
        }
    }
}

/// A target word and its (non-empty) context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub target: TermId,
    pub context: Vec<TermId>,
}

impl TrainingExample {
    pub fn new(target: TermId, context: Vec<TermId>) -> Result<Self, TrainError> {
        if context.is_empty() {
            return Err(TrainError::EmptyContext);
        }
        Ok(TrainingExample { target, context })
    }
}

fn check_ids<M: ParamRows + ?Sized>(ids: &[TermId], m: &M) -> Result<(), TrainError> {
    match ids.iter().find(|&&id| id as usize >= m.n_rows()) {
        Some(&id) => Err(TrainError::IdOutOfRange { id, rows: m.n_rows() }),
        None => Ok(()),
    }
}

/// Mean of the IN rows of `context`. The divisor is the number of context
/// tokens actually present.
pub fn context_mean<M: ParamRows>(context: &[TermId], w_in: &M) -> Result<Vec<f64>, TrainError> {
    if context.is_empty() {
        return Err(TrainError::EmptyContext);
    }
    check_ids(context, w_in)?;
    let mut mean = vec![0.0; w_in.dim()];
    let mut row = vec![0.0; w_in.dim()];
    accumulate_mean(context, w_in, &mut mean, &mut row);
    Ok(mean)
}

fn accumulate_mean<M: ParamRows>(context: &[TermId], w_in: &M, mean: &mut [f64], row: &mut [f64]) {
    mean.fill(0.0);
    for &c in context {
        w_in.read_row(c as usize, row);
        for (m, r) in mean.iter_mut().zip(row.iter()) {
            *m += r;
        }
    }
    let inv = 1.0 / context.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
}

/// `-ln s(x)`, computed without overflow.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        libm::log1p(libm::exp(-x))
    } else {
        -x + libm::log1p(libm::exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Negative-sampling loss of one example.
pub fn negative_sampling_loss<M: ParamRows>(
    example: &TrainingExample,
    negatives: &[TermId],
    w_in: &M,
    w_out: &M,
) -> Result<f64, TrainError> {
    let hidden = context_mean(&example.context, w_in)?;
    check_ids(&[example.target], w_out)?;
    check_ids(negatives, w_out)?;
    let mut row = vec![0.0; w_out.dim()];
    w_out.read_row(example.target as usize, &mut row);
    let mut loss = neg_log_sigmoid(crate::linalg::dot(&hidden, &row));
    for &n in negatives {
        w_out.read_row(n as usize, &mut row);
        loss += neg_log_sigmoid(-crate::linalg::dot(&hidden, &row));
    }
    Ok(loss)
}

/// Full-softmax CBOW loss `-ln p(target | context)` over the whole
/// vocabulary. Costs `O(V d)` per example; meant for evaluating tiny models.
pub fn full_softmax_loss<M: ParamRows>(example: &TrainingExample, w_in: &M, w_out: &M) -> Result<f64, TrainError> {
    let hidden = context_mean(&example.context, w_in)?;
    check_ids(&[example.target], w_out)?;
    let mut row = vec![0.0; w_out.dim()];
    let logits: Vec<f64> = (0..w_out.n_rows())
        .map(|j| {
            w_out.read_row(j, &mut row);
            crate::linalg::dot(&hidden, &row)
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    Ok(log_z - logits[example.target as usize])
}

/// Reusable buffers for [`sgd_step`].
#[derive(Debug, Clone)]
pub struct StepScratch {
    hidden: Vec<f64>,
    hidden_grad: Vec<f64>,
    row: Vec<f64>,
    out_grads: Vec<(TermId, f64)>,
}

impl StepScratch {
    pub fn new(dim: usize) -> Self {
        StepScratch {
            hidden: vec![0.0; dim],
            hidden_grad: vec![0.0; dim],
            row: vec![0.0; dim],
            out_grads: Vec::new(),
        }
    }
}

/// One SGD update on a single example; returns the loss before the update.
///
/// All dot products are taken against the parameters as they were before
/// the step, so the update is exactly `-lr` times the gradient even when an
/// id repeats among the negatives.
pub fn sgd_step<M: ParamRows>(
    example: &TrainingExample,
    negatives: &[TermId],
    w_in: &mut M,
    w_out: &mut M,
    lr: f64,
) -> Result<f64, TrainError> {
    if example.context.is_empty() {
        return Err(TrainError::EmptyContext);
    }
    check_ids(&example.context, w_in)?;
    check_ids(&[example.target], w_out)?;
    check_ids(negatives, w_out)?;
    let mut scratch = StepScratch::new(w_in.dim());
    Ok(sgd_step_unchecked(example.target, &example.context, negatives, w_in, w_out, lr, &mut scratch))
}

fn sgd_step_unchecked<M: ParamRows>(
    target: TermId,
    context: &[TermId],
    negatives: &[TermId],
    w_in: &mut M,
    w_out: &mut M,
    lr: f64,
    s: &mut StepScratch,
) -> f64 {
    accumulate_mean(context, w_in, &mut s.hidden, &mut s.row);
    s.hidden_grad.fill(0.0);
    s.out_grads.clear();

    let mut loss = 0.0;
    let labelled = core::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (id, label) in labelled {
        w_out.read_row(id as usize, &mut s.row);
        let score = crate::linalg::dot(&s.hidden, &s.row);
        loss += if label == 1.0 { neg_log_sigmoid(score) } else { neg_log_sigmoid(-score) };
        // d loss / d score
        let g = sigmoid(score) - label;
        crate::linalg::axpy(g, &s.row, &mut s.hidden_grad);
        s.out_grads.push((id, g));
    }

    for &(id, g) in &s.out_grads {
        w_out.add_to_row(id as usize, -lr * g, &s.hidden);
    }
    let share = -lr / context.len() as f64;
    for &c in context {
        w_in.add_to_row(c as usize, share, &s.hidden_grad);
    }
    loss
}

/// Draws negative samples.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n: usize,
    /// Cumulative weights; empty for the uniform distribution.
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(distribution: NegativeDistribution, counts: &[u64]) -> Result<Self, TrainError> {
        if counts.is_empty() {
            return Err(TrainError::EmptyVocabulary);
        }
        let power = match distribution {
            NegativeDistribution::Uniform => {
                return Ok(NegativeSampler {
                    n: counts.len(),
                    cumulative: Vec::new(),
                })
            }
            NegativeDistribution::Empirical => 1.0,
            NegativeDistribution::EmpiricalPow(p) => p,
        };
        let mut acc = 0.0;
        let cumulative: Vec<f64> = counts
            .iter()
            .map(|&c| {
                acc += if c == 0 { 0.0 } else { libm::pow(c as f64, power) };
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(TrainError::InvalidConfig("negative distribution has no mass"));
        }
        Ok(NegativeSampler { n: counts.len(), cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TermId {
        if self.cumulative.is_empty() {
            return rng.gen_range(0..self.n) as TermId;
        }
        let total = self.cumulative[self.n - 1];
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.n - 1) as TermId
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<TermId> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Linear learning-rate decay over a planned number of target positions.
#[derive(Debug, Clone, Copy)]
pub struct LearningRate {
    pub initial: f64,
    pub floor: f64,
    pub total: u64,
}

impl LearningRate {
    pub fn at(&self, processed: u64) -> f64 {
        if self.total == 0 {
            return self.initial;
        }
        let progress = (processed as f64 / self.total as f64).min(1.0);
        self.initial - (self.initial - self.floor) * progress
    }
}

/// Counts processed positions so the learning rate can decay. Shared across
/// workers in parallel mode.
pub trait ProgressClock {
    /// Adds `n` and returns the value before the addition.
    fn advance(&self, n: u64) -> u64;
}

impl ProgressClock for Cell<u64> {
    fn advance(&self, n: u64) -> u64 {
        let old = self.get();
        self.set(old + n);
        old
    }
}

#[cfg(target_has_atomic = "64")]
impl ProgressClock for AtomicU64 {
    fn advance(&self, n: u64) -> u64 {
        self.fetch_add(n, Ordering::Relaxed)
    }
}

/// Everything a worker needs that does not change during training.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub config: TrainerConfig,
    pub sampler: NegativeSampler,
    pub schedule: LearningRate,
    /// Per-term keep probability when subsampling is enabled.
    keep_prob: Option<Vec<f64>>,
}

impl TrainPlan {
    pub fn new(records: &[Vec<TermId>], vocab: &Vocabulary, config: &TrainerConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(TrainError::EmptyVocabulary);
        }
        for r in records {
            check_ids(r, &ShapeOnly(vocab.len()))?;
        }
        if !records.iter().any(|r| r.len() >= 2) {
            return Err(TrainError::EmptyCorpus);
        }
        let sampler = NegativeSampler::new(config.negative_distribution, vocab.counts())?;
        let tokens: u64 = records.iter().map(|r| r.len() as u64).sum();
        let keep_prob = config.subsample_threshold.map(|t| {
            let total = vocab.total_tokens().max(1) as f64;
            vocab
                .counts()
                .iter()
                .map(|&c| {
                    if c == 0 {
                        return 1.0;
                    }
                    let f = c as f64 / total;
                    ((libm::sqrt(f / t) + 1.0) * t / f).min(1.0)
                })
                .collect()
        });
        Ok(TrainPlan {
            config: config.clone(),
            sampler,
            schedule: LearningRate {
                initial: config.learning_rate,
                floor: config.min_learning_rate,
                total: tokens * config.epochs as u64,
            },
            keep_prob,
        })
    }

    /// Initial matrices: IN uniform in `[-0.5/d, 0.5/d]`, OUT all zeros.
    pub fn initial_matrices<R: Rng>(&self, vocab_len: usize, rng: &mut R) -> (Matrix, Matrix) {
        let d = self.config.dim;
        let w_in = (0..vocab_len * d).map(|_| (rng.gen::<f64>() - 0.5) / d as f64).collect();
        (Matrix::from_vec(vocab_len, d, w_in), Matrix::zeros(vocab_len, d))
    }

    /// Runs one pass over `records`, returning the summed loss and the number
    /// of examples trained.
    pub fn run_pass<M: ParamRows, C: ProgressClock + ?Sized, R: Rng>(
        &self,
        records: &[Vec<TermId>],
        w_in: &mut M,
        w_out: &mut M,
        rng: &mut R,
        clock: &C,
    ) -> PassStats {
        let cfg = &self.config;
        let mut scratch = StepScratch::new(cfg.dim);
        let mut kept: Vec<TermId> = Vec::new();
        let mut context: Vec<TermId> = Vec::with_capacity(2 * cfg.window);
        let mut negatives: Vec<TermId> = Vec::with_capacity(cfg.negatives);
        let mut stats = PassStats::default();

        for record in records {
            kept.clear();
            match &self.keep_prob {
                Some(p) => kept.extend(record.iter().copied().filter(|&id| rng.gen::<f64>() < p[id as usize])),
                None => kept.extend_from_slice(record),
            }
            let dropped = (record.len() - kept.len()) as u64;
            for pos in 0..kept.len() {
                let processed = clock.advance(1);
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(kept.len());
                context.clear();
                context.extend(kept[lo..pos].iter().chain(&kept[pos + 1..hi]).copied());
                if context.is_empty() {
                    continue;
                }
                let target = kept[pos];
                negatives.clear();
                for _ in 0..cfg.negatives {
                    let n = self.sampler.sample(rng);
                    if n != target {
                        negatives.push(n);
                    }
                }
                let lr = self.schedule.at(processed);
                stats.loss += sgd_step_unchecked(target, &context, &negatives, w_in, w_out, lr, &mut scratch);
                stats.examples += 1;
            }
            clock.advance(dropped);
        }
        stats
    }
}

struct ShapeOnly(usize);

impl ParamRows for ShapeOnly {
    fn n_rows(&self) -> usize {
        self.0
    }
    fn dim(&self) -> usize {
        0
    }
    fn read_row(&self, _: usize, _: &mut [f64]) {}
    fn add_to_row(&mut self, _: usize, _: f64, _: &[f64]) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PassStats {
    pub loss: f64,
    pub examples: u64,
}

impl PassStats {
    pub fn mean_loss(&self) -> f64 {
        if self.examples == 0 {
            0.0
        } else {
            self.loss / self.examples as f64
        }
    }

    pub fn merge(&mut self, other: PassStats) {
        self.loss += other.loss;
        self.examples += other.examples;
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub embedding: DualEmbedding,
    /// Mean per-example loss of each epoch, measured during the pass.
    pub epoch_losses: Vec<f64>,
}

/// Trains a model in deterministic single-worker mode.
///
/// `records` are encoded token records (see [`Vocabulary::encode`]). The
/// result is a pure function of the inputs and `config.seed`.
pub fn train(records: &[Vec<TermId>], vocab: &Vocabulary, config: &TrainerConfig) -> Result<Trained, TrainError> {
    let plan = TrainPlan::new(records, vocab, config)?;
    let mut rng = TrainRng::seed_from_u64(config.seed);
    let (mut w_in, mut w_out) = plan.initial_matrices(vocab.len(), &mut rng);
    let clock = Cell::new(0u64);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let stats = plan.run_pass(records, &mut w_in, &mut w_out, &mut rng, &clock);
        epoch_losses.push(stats.mean_loss());
    }
    let embedding = DualEmbedding::new(vocab.clone(), w_in, w_out).expect("trainer keeps matrix shapes consistent");
    Ok(Trained { embedding, epoch_losses })
}
