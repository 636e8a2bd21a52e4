//! Lock-free parallel CBOW training.
//!
//! Workers share both matrices and update them without locks. Each cell is
//! an atomic 64-bit word, so a concurrent read never sees half of a write,
//! but updates from different workers can overwrite each other.

use std::sync::atomic::AtomicU64;

use desm_core::cbow::{self, AtomicMatrix, PassStats, TrainError, TrainPlan, TrainRng, Trained};
use desm_core::{DualEmbedding, TermId, TrainerConfig, Vocabulary};
use rand::SeedableRng;

/// Seed of worker `index`. Worker streams never coincide with the
/// initialization stream, which uses `seed` itself.
pub fn worker_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Trains with `threads` workers. One thread falls back to the
/// deterministic trainer; more threads give results that vary from run to
/// run.
pub fn train_parallel(
    records: &[Vec<TermId>],
    vocab: &Vocabulary,
    config: &TrainerConfig,
    threads: usize,
) -> Result<Trained, TrainError> {
    if threads <= 1 {
        return cbow::train(records, vocab, config);
    }
    let plan = TrainPlan::new(records, vocab, config)?;
    let mut rng = TrainRng::seed_from_u64(config.seed);
    let (w_in, w_out) = plan.initial_matrices(vocab.len(), &mut rng);
    let w_in = AtomicMatrix::from_matrix(&w_in);
    let w_out = AtomicMatrix::from_matrix(&w_out);
    let clock = AtomicU64::new(0);

    let chunk = records.len().div_ceil(threads).max(1);
    let per_worker: Vec<Vec<PassStats>> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .enumerate()
            .map(|(t, shard)| {
                let (plan, w_in, w_out, clock) = (&plan, &w_in, &w_out, &clock);
                s.spawn(move || {
                    let mut rng = TrainRng::seed_from_u64(worker_seed(config.seed, t));
                    let (mut a, mut b) = (w_in, w_out);
                    (0..config.epochs)
                        .map(|_| plan.run_pass(shard, &mut a, &mut b, &mut rng, clock))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });

    let epoch_losses = (0..config.epochs)
        .map(|e| {
            let mut total = PassStats::default();
            for w in &per_worker {
                total.merge(w[e]);
            }
            total.mean_loss()
        })
        .collect();
    let embedding = DualEmbedding::new(vocab.clone(), w_in.to_matrix(), w_out.to_matrix())
        .expect("trainer keeps matrix shapes consistent");
    Ok(Trained { embedding, epoch_losses })
}
