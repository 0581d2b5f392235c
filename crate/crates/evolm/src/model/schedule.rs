//! Learning-rate schedule: linear warmup from zero, cosine decay to the
//! minimum rate, constant afterwards.

use super::{Chromosome, TrainConfig};

/// Learning rate at iteration `iter`.
///
/// Warmup ramps linearly from 0 to `learning_rate` over `warmup_iters`;
/// cosine decay then takes the rate down to `min_lr` at `lr_decay_iters`;
/// the rate is `min_lr` beyond that. With `decay_lr` off the rate stays at
/// `learning_rate` once warmed up.
pub fn lr_at(iter: usize, chrom: &Chromosome, cfg: &TrainConfig) -> f64 {
    let lr = chrom.learning_rate;
    if iter < cfg.warmup_iters {
        return lr * iter as f64 / cfg.warmup_iters as f64;
    }
    if !cfg.decay_lr {
        return lr;
    }
    if iter == cfg.warmup_iters {
        return lr;
    }
    if iter >= cfg.lr_decay_iters {
        return chrom.min_lr;
    }
    let progress =
        (iter - cfg.warmup_iters) as f64 / (cfg.lr_decay_iters - cfg.warmup_iters) as f64;
    let coeff = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    chrom.min_lr + coeff * (lr - chrom.min_lr)
}
