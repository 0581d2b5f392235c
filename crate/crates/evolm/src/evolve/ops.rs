//! Genetic operators: random initialization, single-gene-group mutation with
//! range/20 steps, and uniform crossover with an atomic architecture triple.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SearchSpace;
use crate::model::Chromosome;

/// The nine independently inherited gene groups. The architecture triple
/// `(n_layer, n_head, n_embd)` moves as one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneGroup {
    Architecture,
    BatchSize,
    BlockSize,
    Dropout,
    LearningRate,
    MinLr,
    Beta1,
    Beta2,
    WeightDecay,
}

pub const GENE_GROUPS: [GeneGroup; 9] = [
    GeneGroup::Architecture,
    GeneGroup::BatchSize,
    GeneGroup::BlockSize,
    GeneGroup::Dropout,
    GeneGroup::LearningRate,
    GeneGroup::MinLr,
    GeneGroup::Beta1,
    GeneGroup::Beta2,
    GeneGroup::WeightDecay,
];

/// Draws a chromosome uniformly over the search space: architecture row from
/// the table, power-of-two genes over their exponent ranges, continuous genes
/// over their bounds. `min_lr` is resampled until strictly below the drawn
/// learning rate.
pub fn random_chromosome<R: Rng>(space: &SearchSpace, rng: &mut R) -> Chromosome {
    let b = &space.bounds;
    let row = space.table.row(rng.random_range(0..space.table.len()));
    let pow2 = |rng: &mut R, range: (u32, u32)| 1usize << rng.random_range(range.0..=range.1);
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| lo + rng.random::<f64>() * (hi - lo);

    let batch_size = pow2(rng, b.batch_log2);
    let block_size = pow2(rng, b.block_log2);
    let dropout = uniform(rng, b.dropout);
    let learning_rate = uniform(rng, b.learning_rate);
    let mut min_lr = uniform(rng, b.min_lr);
    let mut attempts = 0;
    while min_lr >= learning_rate {
        min_lr = uniform(rng, b.min_lr);
        attempts += 1;
        if attempts > 100 {
            min_lr = b.min_lr.0;
            break;
        }
    }
    Chromosome {
        n_layer: row.n_layer,
        n_head: row.n_head,
        n_embd: row.n_embd,
        batch_size,
        block_size,
        dropout,
        learning_rate,
        min_lr,
        beta1: uniform(rng, b.beta1),
        beta2: uniform(rng, b.beta2),
        weight_decay: uniform(rng, b.weight_decay),
    }
}

/// Mutation step for a continuous gene: one twentieth of its range.
pub fn continuous_step((lo, hi): (f64, f64)) -> f64 {
    (hi - lo) / 20.0
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

/// Mutates exactly one gene group, chosen uniformly, and reports which.
///
/// Continuous genes move by plus or minus range/20 and clip to their bounds;
/// power-of-two genes move to the adjacent power (the only legal direction
/// at a boundary); the architecture walks to one of its at-most-two nearest
/// table neighbors with equal probability.
pub fn mutate_traced<R: Rng>(
    chrom: &Chromosome,
    space: &SearchSpace,
    rng: &mut R,
) -> (Chromosome, GeneGroup) {
    let b = &space.bounds;
    let group = GENE_GROUPS[rng.random_range(0..GENE_GROUPS.len())];
    let mut out = chrom.clone();

    let step_continuous = |value: f64, range: (f64, f64), rng: &mut R| {
        let step = continuous_step(range);
        let signed = if rng.random::<bool>() { step } else { -step };
        clip(value + signed, range.0, range.1)
    };
    let step_pow2 = |value: usize, range: (u32, u32), rng: &mut R| {
        let exp = value.trailing_zeros();
        let down = exp > range.0;
        let up = exp < range.1;
        match (down, up) {
            (true, true) => {
                if rng.random::<bool>() {
                    value << 1
                } else {
                    value >> 1
                }
            }
            (false, true) => value << 1,
            (true, false) => value >> 1,
            (false, false) => value, // degenerate single-point range
        }
    };

    match group {
        GeneGroup::Architecture => {
            let idx = space
                .table
                .position_or_nearest(chrom.n_layer, chrom.n_head, chrom.n_embd);
            let (below, above) = space.table.neighbors(idx);
            let next = match (below, above) {
                (Some(d), Some(u)) => {
                    if rng.random::<bool>() {
                        u
                    } else {
                        d
                    }
                }
                (Some(d), None) => d,
                (None, Some(u)) => u,
                (None, None) => idx, // single-row table
            };
            let row = space.table.row(next);
            out.n_layer = row.n_layer;
            out.n_head = row.n_head;
            out.n_embd = row.n_embd;
        }
        GeneGroup::BatchSize => out.batch_size = step_pow2(chrom.batch_size, b.batch_log2, rng),
        GeneGroup::BlockSize => out.block_size = step_pow2(chrom.block_size, b.block_log2, rng),
        GeneGroup::Dropout => out.dropout = step_continuous(chrom.dropout, b.dropout, rng),
        GeneGroup::LearningRate => {
            out.learning_rate = step_continuous(chrom.learning_rate, b.learning_rate, rng)
        }
        GeneGroup::MinLr => out.min_lr = step_continuous(chrom.min_lr, b.min_lr, rng),
        GeneGroup::Beta1 => out.beta1 = step_continuous(chrom.beta1, b.beta1, rng),
        GeneGroup::Beta2 => out.beta2 = step_continuous(chrom.beta2, b.beta2, rng),
        GeneGroup::WeightDecay => {
            out.weight_decay = step_continuous(chrom.weight_decay, b.weight_decay, rng)
        }
    }
    (out, group)
}

/// See [`mutate_traced`].
pub fn mutate<R: Rng>(chrom: &Chromosome, space: &SearchSpace, rng: &mut R) -> Chromosome {
    mutate_traced(chrom, space, rng).0
}

/// With probability `crossover_probability`, uniform crossover per gene
/// group (architecture triple atomic): a fair coin sends parent 1's value to
/// offspring A and parent 2's to offspring B, or swapped. Otherwise the
/// offspring are clones of the parents. `min_lr >= learning_rate` after
/// recombination is repaired by pulling `min_lr` down to a tenth of the
/// learning rate.
pub fn crossover<R: Rng>(
    p1: &Chromosome,
    p2: &Chromosome,
    crossover_probability: f64,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    if rng.random::<f64>() >= crossover_probability {
        return (p1.clone(), p2.clone());
    }
    let mut a = p1.clone();
    let mut b = p2.clone();
    for group in GENE_GROUPS {
        if rng.random::<bool>() {
            // swap this group between offspring
            match group {
                GeneGroup::Architecture => {
                    std::mem::swap(&mut a.n_layer, &mut b.n_layer);
                    std::mem::swap(&mut a.n_head, &mut b.n_head);
                    std::mem::swap(&mut a.n_embd, &mut b.n_embd);
                }
                GeneGroup::BatchSize => std::mem::swap(&mut a.batch_size, &mut b.batch_size),
                GeneGroup::BlockSize => std::mem::swap(&mut a.block_size, &mut b.block_size),
                GeneGroup::Dropout => std::mem::swap(&mut a.dropout, &mut b.dropout),
                GeneGroup::LearningRate => {
                    std::mem::swap(&mut a.learning_rate, &mut b.learning_rate)
                }
                GeneGroup::MinLr => std::mem::swap(&mut a.min_lr, &mut b.min_lr),
                GeneGroup::Beta1 => std::mem::swap(&mut a.beta1, &mut b.beta1),
                GeneGroup::Beta2 => std::mem::swap(&mut a.beta2, &mut b.beta2),
                GeneGroup::WeightDecay => {
                    std::mem::swap(&mut a.weight_decay, &mut b.weight_decay)
                }
            }
        }
    }
    for child in [&mut a, &mut b] {
        if child.min_lr >= child.learning_rate {
            child.min_lr = child.learning_rate * 0.1;
        }
    }
    (a, b)
}
