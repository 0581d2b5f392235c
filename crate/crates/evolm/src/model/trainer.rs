//! The training loop: causal-LM batches, bootstrap loss estimates, and the
//! chromosome-to-fitness pipeline.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    clip_global_norm, lr_at, AdamW, Checkpoint, Chromosome, FitnessRecord, Gpt, GptConfig,
    ModelError, TrainConfig,
};
use crate::tokenizer::TokenizedCorpus;
use crate::util::derive_seed;

const GRAD_CLIP_NORM: f64 = 1.0;

/// Samples a `(inputs, targets)` batch of `batch` sequences of `block`
/// tokens with independent uniform start offsets.
pub fn sample_batch(
    ids: &[u32],
    batch: usize,
    block: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<usize>, Array2<usize>), ModelError> {
    if ids.len() <= block {
        return Err(ModelError::SplitTooShort {
            split: "token",
            len: ids.len(),
            block_size: block,
        });
    }
    let mut x = Array2::zeros((batch, block));
    let mut y = Array2::zeros((batch, block));
    for b in 0..batch {
        let start = rng.random_range(0..ids.len() - block);
        for t in 0..block {
            x[[b, t]] = ids[start + t] as usize;
            y[[b, t]] = ids[start + t + 1] as usize;
        }
    }
    Ok((x, y))
}

/// Mean cross-entropy (nats) over `n_boot` independently sampled evaluation
/// batches, dropout disabled.
pub fn estimate_loss(
    model: &Gpt,
    ids: &[u32],
    chrom: &Chromosome,
    n_boot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ModelError> {
    if n_boot == 0 {
        return Err(ModelError::NoBootstraps);
    }
    let mut total = 0.0;
    for _ in 0..n_boot {
        let (x, y) = sample_batch(ids, chrom.batch_size, chrom.block_size, rng)?;
        total += model.loss_eval(&x, &y);
    }
    Ok(total / n_boot as f64)
}

/// Trains one chromosome on the tokenized corpus and returns its full
/// trajectory. Bootstrap train/valid losses are recorded at iteration 0,
/// every `eval_iters` iterations, and at `max_iters`. A non-finite loss
/// anywhere aborts the individual with the divergence sentinel instead of
/// an error.
pub fn train_gpt(
    chrom: &Chromosome,
    data: &TokenizedCorpus,
    cfg: &TrainConfig,
) -> Result<FitnessRecord, ModelError> {
    cfg.validate()?;
    if data.train_ids.len() <= chrom.block_size {
        return Err(ModelError::SplitTooShort {
            split: "train",
            len: data.train_ids.len(),
            block_size: chrom.block_size,
        });
    }
    if data.valid_ids.len() <= chrom.block_size {
        return Err(ModelError::SplitTooShort {
            split: "valid",
            len: data.valid_ids.len(),
            block_size: chrom.block_size,
        });
    }

    let started = std::time::Instant::now();
    let gpt_cfg = GptConfig {
        vocab_size: data.vocab_size,
        n_layer: chrom.n_layer,
        n_head: chrom.n_head,
        n_embd: chrom.n_embd,
        block_size: chrom.block_size,
    };
    let mut model = Gpt::new(gpt_cfg, chrom.dropout, derive_seed(cfg.seed, 1))?;
    let param_count = model.param_count();
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4));
    let mut opt = AdamW::new(&mut model, chrom.beta1, chrom.beta2, chrom.weight_decay);

    let evaluate =
        |model: &Gpt, iter: usize, rng: &mut ChaCha8Rng| -> Result<Option<Checkpoint>, ModelError> {
            let train_loss = estimate_loss(model, &data.train_ids, chrom, cfg.n_boot, rng)?;
            let valid_loss = estimate_loss(model, &data.valid_ids, chrom, cfg.n_boot, rng)?;
            if !train_loss.is_finite() || !valid_loss.is_finite() {
                return Ok(None);
            }
            Ok(Some(Checkpoint {
                iter,
                train_loss,
                valid_loss,
            }))
        };

    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    // Trajectory endpoints are always recorded, starting before training.
    match evaluate(&model, 0, &mut eval_rng)? {
        Some(c) => checkpoints.push(c),
        None => return Ok(FitnessRecord::diverged(chrom.clone(), param_count, checkpoints)),
    }

    for iter in 1..=cfg.max_iters {
        let lr = lr_at(iter, chrom, cfg);
        let (x, y) = sample_batch(
            &data.train_ids,
            chrom.batch_size,
            chrom.block_size,
            &mut batch_rng,
        )?;
        let loss = model.loss_and_grad(&x, &y, Some(&mut dropout_rng));
        if !loss.is_finite() {
            return Ok(FitnessRecord::diverged(chrom.clone(), param_count, checkpoints));
        }
        clip_global_norm(&mut model, GRAD_CLIP_NORM);
        opt.step(&mut model, lr);

        if iter % cfg.eval_iters == 0 || iter == cfg.max_iters {
            match evaluate(&model, iter, &mut eval_rng)? {
                Some(c) => checkpoints.push(c),
                None => {
                    return Ok(FitnessRecord::diverged(chrom.clone(), param_count, checkpoints))
                }
            }
        }
    }

    let (best_idx, best) = checkpoints
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.valid_loss.total_cmp(&b.1.valid_loss))
        .expect("at least the iteration-0 checkpoint exists");
    let best_val_loss = best.valid_loss;
    let train_loss_at_best = checkpoints[best_idx].train_loss;

    Ok(FitnessRecord {
        chromosome: chrom.clone(),
        checkpoints,
        best_val_loss,
        train_loss_at_best,
        param_count,
        wall_time_secs: started.elapsed().as_secs_f64(),
        diverged: false,
    })
}
